"""Sherrington-Kirkpatrick instances, spin configurations, and energies.

Couplings form a symmetric zero-diagonal matrix whose off-diagonal entries
are i.i.d. Gaussian with zero mean and variance ``j_scale**2 / n``.  Energies
use the full double sum

    E(s) = sum_{i,j} J_ij s_i s_j  =  2 * sum_{i<j} J_ij s_i s_j,

so per-spin energies eps = E / (n * J) sit on twice the scale of the
sum-over-pairs convention (the large-n ground-state density is about
2 * -0.763 = -1.53 here, versus -0.76 in the pairwise convention).

Bit-string convention used throughout the package: basis index ``b`` encodes
spin ``i`` in bit ``i``, with bit value 0 meaning s_i = +1 and bit value 1
meaning s_i = -1.

Randomness: all streams are numpy PCG64 generators (``np.random.default_rng``);
Gaussians come from numpy's ziggurat sampler.  Fixed (n, j_scale, seed) is
bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SkInstance",
    "SpinConfig",
    "LocalMinimum",
    "generate_instance",
    "energy",
    "energy_delta",
    "hamming",
    "overlap_slope",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class SpinConfig:
    """Length-n spin configuration with entries in {+1, -1}."""

    spins: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.spins, dtype=np.int8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("spins must be a non-empty 1-d sequence")
        if not np.all(np.abs(arr) == 1):
            raise ValueError("spin entries must be +1 or -1")
        arr.setflags(write=False)
        object.__setattr__(self, "spins", arr)

    def __len__(self) -> int:
        return self.spins.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return np.array_equal(self.spins, other.spins)

    def __hash__(self) -> int:
        return hash((self.spins.size, self.spins.tobytes()))

    @classmethod
    def from_index(cls, n: int, index: int) -> "SpinConfig":
        """Decode a basis index (bit i = 0 <-> s_i = +1)."""
        if not 0 <= index < (1 << n):
            raise ValueError(f"index {index} out of range for n={n}")
        bits = np.array([(index >> i) & 1 for i in range(n)], dtype=np.int8)
        return cls(1 - 2 * bits)

    def to_index(self) -> int:
        """Basis index of this configuration (python int, any n)."""
        idx = 0
        for i, s in enumerate(self.spins):
            if s < 0:
                idx |= 1 << i
        return idx

    @classmethod
    def from_hex(cls, n: int, text: str) -> "SpinConfig":
        return cls.from_index(n, int(text, 16))

    def to_hex(self) -> str:
        width = (len(self) + 3) // 4
        return format(self.to_index(), f"0{width}x")

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "SpinConfig":
        return cls(rng.choice(np.array([1, -1], dtype=np.int8), size=n))

    def flipped(self, site: int) -> "SpinConfig":
        if not 0 <= site < len(self):
            raise ValueError(f"site {site} out of range")
        spins = self.spins.copy()
        spins[site] = -spins[site]
        return SpinConfig(spins)


@dataclass(frozen=True)
class SkInstance:
    """One SK optimization task: symmetric zero-diagonal coupling matrix."""

    n: int
    couplings: np.ndarray
    j_scale: float
    seed: int

    def __post_init__(self):
        j = np.asarray(self.couplings, dtype=np.float64)
        if j.shape != (self.n, self.n):
            raise ValueError(f"couplings must be {self.n}x{self.n}")
        if not np.allclose(j, j.T, atol=0.0):
            raise ValueError("couplings must be exactly symmetric")
        if np.any(np.diagonal(j) != 0.0):
            raise ValueError("couplings must have zero diagonal")
        j.setflags(write=False)
        object.__setattr__(self, "couplings", j)


@dataclass(frozen=True)
class LocalMinimum:
    """A single-flip-stable configuration with its energy."""

    config: SpinConfig
    energy: float
    per_spin_energy: float


def generate_instance(n: int, j_scale: float, seed: int) -> SkInstance:
    """Draw a random SK instance: J_ij ~ N(0, j_scale^2/n) for i<j, mirrored.

    Deterministic for fixed (n, j_scale, seed).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if j_scale <= 0:
        raise ValueError("j_scale must be positive")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    vals = rng.normal(0.0, j_scale / np.sqrt(n), size=iu[0].size)
    couplings = np.zeros((n, n))
    couplings[iu] = vals
    couplings += couplings.T
    return SkInstance(n=n, couplings=couplings, j_scale=float(j_scale), seed=int(seed))


def _check_dims(inst: SkInstance, c: SpinConfig) -> None:
    if len(c) != inst.n:
        raise ValueError(f"config length {len(c)} != instance n {inst.n}")


def energy(inst: SkInstance, c: SpinConfig) -> float:
    """Full double-sum energy sum_{i,j} J_ij s_i s_j (= 2 * sum over pairs)."""
    _check_dims(inst, c)
    s = c.spins.astype(np.float64)
    return float(s @ (inst.couplings @ s))


def energy_delta(inst: SkInstance, c: SpinConfig, site: int) -> float:
    """Energy change of flipping one spin, in O(n): -4 s_k sum_j J_kj s_j."""
    _check_dims(inst, c)
    if not 0 <= site < inst.n:
        raise ValueError(f"site {site} out of range for n={inst.n}")
    s = c.spins.astype(np.float64)
    return float(-4.0 * s[site] * (inst.couplings[site] @ s))


def hamming(a: SpinConfig, b: SpinConfig) -> int:
    """Number of sites where the two configurations differ."""
    if len(a) != len(b):
        raise ValueError("configs have different lengths")
    return int(np.count_nonzero(a.spins != b.spins))


def overlap_slope(l: SpinConfig, r: SpinConfig) -> float:
    """Configuration overlap m = (1/n) sum_i s_i^l s_i^r = 1 - 2 d/n."""
    if len(l) != len(r):
        raise ValueError("configs have different lengths")
    return float(np.mean(l.spins.astype(np.float64) * r.spins.astype(np.float64)))


# -- instance file format ----------------------------------------------------
#
# JSON object {format, n, j_scale, seed, couplings} where couplings is the
# strict lower triangle in row-major order: J[1,0], J[2,0], J[2,1], ...

_FORMAT = "sk-instance-v1"


def save_instance(inst: SkInstance, path: str | Path) -> None:
    il = np.tril_indices(inst.n, k=-1)
    doc = {
        "format": _FORMAT,
        "n": inst.n,
        "j_scale": inst.j_scale,
        "seed": inst.seed,
        "couplings": inst.couplings[il].tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_instance(path: str | Path) -> SkInstance:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != _FORMAT:
        raise ValueError(f"not an instance file: {path}")
    n = int(doc["n"])
    tri = np.asarray(doc["couplings"], dtype=np.float64)
    if tri.shape != (n * (n - 1) // 2,):
        raise ValueError("couplings length does not match n")
    if not np.all(np.isfinite(tri)):
        raise ValueError("couplings must be finite")
    couplings = np.zeros((n, n))
    couplings[np.tril_indices(n, k=-1)] = tri
    couplings += couplings.T
    return SkInstance(n=n, couplings=couplings, j_scale=float(doc["j_scale"]),
                      seed=int(doc["seed"]))
