"""Exact state-vector machinery for the SK model in co-directed fields.

The Hamiltonian acted on here is

    H(bz, bx) = H_sk - bz * sum_i s^r_i sigma^z_i - bx * sum_i sigma^x_i

for a fixed reference bit-string {s^r_i}.  In the bit-string basis (bit i of
the index encodes spin i, bit 0 <-> s_i = +1) the first two terms are
diagonal: E_alpha - bz * sum_i s^r_i s^alpha_i.  The transverse term couples
each basis state to its n single-bit flips with amplitude -bx, so the action
is matrix-free.

Time evolution uses a second-order split step between the diagonal part and
the transverse part, with fields evaluated at each step midpoint.  Every
factor is exactly unitary, so norms drift only at float roundoff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .classical import all_energies, basin_map
from .errors import ResourceLimitError
from .instance import LocalMinimum, SkInstance, SpinConfig

__all__ = [
    "FieldPoint",
    "FieldRamp",
    "QuantumState",
    "SpectrumSlice",
    "ReferenceHamiltonian",
    "apply_h",
    "full_spectrum",
    "lowest_levels",
    "evolve",
    "measure",
    "sample_outcomes",
    "min_gap_along_ray",
    "isolate_basins",
    "classical_critical_field",
    "save_state",
    "load_state",
]

DENSE_LIMIT = 12
APPLY_LIMIT = 26
DEFAULT_LOW_K = 8


@dataclass(frozen=True)
class FieldPoint:
    """Longitudinal (bz) and transverse (bx) field strengths, in units of J."""

    bz: float
    bx: float

    def __post_init__(self):
        if not (np.isfinite(self.bz) and np.isfinite(self.bx)):
            raise ValueError("fields must be finite")
        if self.bz < 0 or self.bx < 0:
            raise ValueError("fields must be non-negative")


@dataclass(frozen=True)
class FieldRamp:
    """Linear field ramp from `start` to `end` over `duration`."""

    start: FieldPoint
    end: FieldPoint
    duration: float

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError("ramp duration must be positive")

    def at(self, t: float) -> tuple[float, float]:
        w = t / self.duration
        return (self.start.bz + w * (self.end.bz - self.start.bz),
                self.start.bx + w * (self.end.bx - self.start.bx))


@dataclass(frozen=True)
class QuantumState:
    """Normalized complex amplitude vector over the 2^n bit-strings."""

    amplitudes: np.ndarray
    norm_drift: float = 0.0

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amp.ndim != 1 or (amp.size & (amp.size - 1)) != 0 or amp.size < 2:
            raise ValueError("amplitudes must have length 2^n, n >= 1")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"state norm {norm} deviates from 1 by more than 1e-6")
        amp = amp / norm
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    @classmethod
    def basis_state(cls, n: int, index: int) -> "QuantumState":
        amp = np.zeros(1 << n, dtype=np.complex128)
        amp[index] = 1.0
        return cls(amp)

    @classmethod
    def from_config(cls, c: SpinConfig) -> "QuantumState":
        return cls.basis_state(len(c), c.to_index())


@dataclass(frozen=True)
class SpectrumSlice:
    """Eigenvalues (ascending) of H at one field point; vectors optional."""

    field: FieldPoint
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None


class ReferenceHamiltonian:
    """Precomputed diagonal data for H at a fixed instance and reference.

    Holds the 2^n classical energies and reference alignments so repeated
    field points and time steps only pay O(2^n) per application.
    """

    def __init__(self, inst: SkInstance, ref: SpinConfig):
        if len(ref) != inst.n:
            raise ValueError("reference length does not match instance")
        if inst.n > APPLY_LIMIT:
            raise ResourceLimitError(f"state vectors need n <= {APPLY_LIMIT}")
        self.inst = inst
        self.ref = ref
        self.n = inst.n
        self.dim = 1 << inst.n
        self.sk_energies = all_energies(inst)
        idx = np.arange(self.dim, dtype=np.uint64)
        ref_idx = np.uint64(ref.to_index())
        # alignment sum_i s^r_i s^alpha_i = n - 2 * popcount(b XOR ref)
        flips = np.bitwise_count(idx ^ ref_idx).astype(np.int64)
        self.alignments = (inst.n - 2 * flips).astype(np.float64)

    def diagonal(self, bz: float) -> np.ndarray:
        return self.sk_energies - bz * self.alignments

    def apply(self, f: FieldPoint, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise ValueError(f"vector must have length {self.dim}")
        out = self.diagonal(f.bz) * v
        if f.bx != 0.0:
            for i in range(self.n):
                v3 = v.reshape(-1, 2, 1 << i)
                out3 = out.reshape(-1, 2, 1 << i)
                out3[:, 0, :] -= f.bx * v3[:, 1, :]
                out3[:, 1, :] -= f.bx * v3[:, 0, :]
        return out

    def dense(self, f: FieldPoint) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ResourceLimitError(
                f"dense Hamiltonian needs n <= {DENSE_LIMIT}, got {self.n}")
        h = np.diag(self.diagonal(f.bz))
        if f.bx != 0.0:
            rows = np.arange(self.dim)
            for i in range(self.n):
                h[rows, rows ^ (1 << i)] = -f.bx
        return h

    def operator(self, f: FieldPoint) -> scipy.sparse.linalg.LinearOperator:
        return scipy.sparse.linalg.LinearOperator(
            (self.dim, self.dim), matvec=lambda v: self.apply(f, v),
            dtype=np.float64)


def apply_h(inst: SkInstance, ref: SpinConfig, f: FieldPoint,
            v: QuantumState | np.ndarray) -> np.ndarray:
    """H v as a raw (unnormalized) vector; matrix-free."""
    ham = ReferenceHamiltonian(inst, ref)
    vec = v.amplitudes if isinstance(v, QuantumState) else np.asarray(v)
    return ham.apply(f, vec)


def full_spectrum(inst: SkInstance, ref: SpinConfig, f: FieldPoint, *,
                  want_vectors: bool = False, k: int | None = None,
                  dense: bool | None = None) -> SpectrumSlice:
    """Spectrum of H at one field point.

    Dense (all 2^n levels) up to n=12; larger systems use the iterative
    low-k solver on the matrix-free action (k defaults to 8).  Requesting
    dense output beyond the limit raises ResourceLimitError.
    """
    ham = ReferenceHamiltonian(inst, ref)
    use_dense = dense if dense is not None else (inst.n <= DENSE_LIMIT and k is None)
    if use_dense:
        h = ham.dense(f)
        if want_vectors:
            vals, vecs = scipy.linalg.eigh(h)
            return SpectrumSlice(f, vals, vecs)
        return SpectrumSlice(f, scipy.linalg.eigvalsh(h))
    kk = k if k is not None else DEFAULT_LOW_K
    vals, vecs = scipy.sparse.linalg.eigsh(ham.operator(f), k=kk, which="SA")
    order = np.argsort(vals)
    return SpectrumSlice(f, vals[order], vecs[:, order] if want_vectors else None)


def lowest_levels(ham: ReferenceHamiltonian, f: FieldPoint, k: int = 2) -> np.ndarray:
    """The k lowest eigenvalues, ascending.

    Matrix-free Lanczos above 2^9 states (much faster than dense there),
    falling back to the dense subset solver if it fails to converge.
    """
    if ham.n <= 9:
        return scipy.linalg.eigh(ham.dense(f), eigvals_only=True,
                                 subset_by_index=[0, k - 1])
    try:
        vals = scipy.sparse.linalg.eigsh(
            ham.operator(f), k=k, which="SA", tol=1e-10,
            ncv=min(ham.dim, max(4 * k + 1, 40)), return_eigenvectors=False)
        return np.sort(vals)
    except scipy.sparse.linalg.ArpackNoConvergence:
        if ham.n <= DENSE_LIMIT:
            return scipy.linalg.eigh(ham.dense(f), eigvals_only=True,
                                     subset_by_index=[0, k - 1])
        raise


def _phase_halfstep(diag: np.ndarray, dt: float) -> np.ndarray:
    return np.exp(-0.5j * dt * diag)


def _rotate_x(v: np.ndarray, n: int, theta: float) -> None:
    """In place: apply prod_i exp(i theta X_i)."""
    if theta == 0.0:
        return
    c = np.cos(theta)
    s = 1j * np.sin(theta)
    for i in range(n):
        v3 = v.reshape(-1, 2, 1 << i)
        a = v3[:, 0, :].copy()
        b = v3[:, 1, :]
        v3[:, 0, :] = c * a + s * b
        v3[:, 1, :] = c * b + s * a


def evolve(inst: SkInstance, ref: SpinConfig, schedule: list[FieldRamp],
           v0: QuantumState, dt_max: float, *,
           ham: ReferenceHamiltonian | None = None) -> QuantumState:
    """Integrate i dv/dt = H(t) v along piecewise-linear field ramps.

    Second-order split step (diagonal phase / transverse rotation / diagonal
    phase) with fields taken at each step midpoint; exactly unitary, so the
    recorded norm drift is pure roundoff.  Deterministic.  A prebuilt
    `ham` for the same (inst, ref) skips the diagonal setup.
    """
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    if not schedule:
        raise ValueError("schedule must contain at least one ramp")
    if ham is None or ham.ref != ref:
        ham = ReferenceHamiltonian(inst, ref)
    if v0.amplitudes.size != ham.dim:
        raise ValueError("state dimension does not match instance")
    v = v0.amplitudes.astype(np.complex128).copy()
    for ramp in schedule:
        steps = max(1, int(np.ceil(ramp.duration / dt_max)))
        dt = ramp.duration / steps
        for j in range(steps):
            bz, bx = ramp.at((j + 0.5) * dt)
            phase = _phase_halfstep(ham.diagonal(bz), dt)
            v *= phase
            _rotate_x(v, ham.n, bx * dt)
            v *= phase
    drift = abs(float(np.linalg.norm(v)) - 1.0)
    return QuantumState(v, norm_drift=drift)


def sample_outcomes(v: QuantumState, shots: int, seed: int) -> np.ndarray:
    """Born-rule samples of basis indices; deterministic per seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = np.abs(v.amplitudes) ** 2
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError("state norm deviates beyond measurement tolerance")
    cdf = np.cumsum(probs / total)
    cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    return np.searchsorted(cdf, rng.random(shots), side="right")


def measure(v: QuantumState, seed: int) -> SpinConfig:
    """Collapse to one bit-string with probability |amplitude|^2."""
    idx = int(sample_outcomes(v, 1, seed)[0])
    return SpinConfig.from_index(v.n, idx)


def min_gap_along_ray(inst: SkInstance, ref: SpinConfig, chi: float,
                      bz_grid: np.ndarray, *,
                      refine: bool = False) -> tuple[float, FieldPoint]:
    """Minimum E_1 - E_0 over the ray bx = chi * bz, with its location.

    The grid must be sorted descending (the direction the cycle sweeps).
    By default the gap is reported on grid nodes only; `refine` adds a
    golden-section polish between the neighbors of the best node.
    """
    if chi <= 0:
        raise ValueError("chi must be positive")
    grid = np.asarray(bz_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("bz_grid must not be empty")
    if grid.size > 1 and not np.all(np.diff(grid) < 0):
        raise ValueError("bz_grid must be sorted descending")
    ham = ReferenceHamiltonian(inst, ref)

    def gap_at(bz: float) -> float:
        lo = lowest_levels(ham, FieldPoint(bz, chi * bz), k=2)
        return float(lo[1] - lo[0])

    gaps = np.array([gap_at(float(bz)) for bz in grid])
    best = int(np.argmin(gaps))
    best_gap = float(gaps[best])
    best_bz = float(grid[best])
    if refine and grid.size > 1:
        hi = float(grid[max(best - 1, 0)])
        lo = float(grid[min(best + 1, grid.size - 1)])
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = gap_at(c), gap_at(d)
        for _ in range(40):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = gap_at(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = gap_at(d)
            if b - a < 1e-10 * (1.0 + hi):
                break
        for bz, g in ((c, fc), (d, fd)):
            if g < best_gap:
                best_gap, best_bz = g, bz
    return best_gap, FieldPoint(best_bz, chi * best_bz)


def isolate_basins(inst: SkInstance, ref: SpinConfig, f: FieldPoint,
                   minima: list[LocalMinimum]) -> list[tuple[int, float]]:
    """Lowest level of H restricted to each minimum's descent basin.

    The full configuration space is partitioned by steepest descent; H is
    diagonalized inside each basin with couplings to other basins zeroed.
    Returns (index into `minima`, isolated level) in the given order.
    """
    if inst.n > DENSE_LIMIT:
        raise ResourceLimitError(
            f"isolate_basins needs the full basin partition; n <= {DENSE_LIMIT}")
    ham = ReferenceHamiltonian(inst, ref)
    endpoint = basin_map(inst)
    by_index = {m.config.to_index(): i for i, m in enumerate(minima)}
    missing = set(np.unique(endpoint).tolist()) - set(by_index)
    if missing:
        raise ValueError(f"basin endpoints missing from minima list: {sorted(missing)}")
    diag = ham.diagonal(f.bz)
    out: list[tuple[int, float]] = []
    pos = np.full(ham.dim, -1, dtype=np.int64)
    for m in minima:
        members = np.flatnonzero(endpoint == m.config.to_index())
        dim = members.size
        pos[:] = -1
        pos[members] = np.arange(dim)
        h = np.diag(diag[members])
        for i in range(inst.n):
            partners = members ^ (1 << i)
            inside = pos[partners] >= 0
            h[pos[members[inside]], pos[partners[inside]]] = -f.bx
        if dim == 1:
            level = float(h[0, 0])
        else:
            level = float(scipy.linalg.eigh(h, eigvals_only=True,
                                            subset_by_index=[0, 0])[0])
        out.append((by_index[m.config.to_index()], level))
    return out


def classical_critical_field(inst: SkInstance, ref: SpinConfig) -> float:
    """Smallest bz beyond which the reference is the classical ground state.

    Exact at desk scale: max over all lower-energy bit-strings of
    (E_r - E_alpha) / (n - alignment_alpha).
    """
    ham = ReferenceHamiltonian(inst, ref)
    e_r = ham.sk_energies[ref.to_index()]
    lower = ham.sk_energies < e_r
    if not np.any(lower):
        return 0.0
    denom = inst.n - ham.alignments[lower]
    return float(np.max((e_r - ham.sk_energies[lower]) / denom))


# -- state snapshot format ---------------------------------------------------
#
# 8-byte little-endian signed n, then 2^n little-endian complex doubles.


def save_state(v: QuantumState, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", v.n))
        fh.write(v.amplitudes.astype("<c16").tobytes())


def load_state(path: str | Path) -> QuantumState:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("truncated state snapshot")
    (n,) = struct.unpack("<q", raw[:8])
    amp = np.frombuffer(raw[8:], dtype="<c16")
    if amp.size != (1 << n):
        raise ValueError("snapshot payload does not match header n")
    return QuantumState(amp.astype(np.complex128))
