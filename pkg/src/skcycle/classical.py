"""Classical descent, simulated annealing, and exhaustive minima enumeration.

A configuration counts as single-flip stable when no single spin flip
strictly lowers the energy; zero-delta flips are treated as non-improving,
so descent terminates on plateaus.  Steepest descent (most negative flip
delta, ties broken by lowest site index) defines the basin partition and
needs no randomness; the seeded descent used after measurements scans sites
in a seeded random order and takes the first improving flip.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ResourceLimitError
from .instance import LocalMinimum, SkInstance, SpinConfig, energy

__all__ = [
    "all_deltas",
    "is_single_flip_stable",
    "repulsion_parameter",
    "greedy_descent",
    "simulated_anneal",
    "enumerate_minima",
    "basin_of",
    "basin_map",
    "all_energies",
    "export_minima_csv",
]

ENUMERATION_LIMIT = 20
_BLOCK_BITS = 16


def all_deltas(inst: SkInstance, c: SpinConfig) -> np.ndarray:
    """Flip deltas for every site at once: delta_k = -4 s_k (J s)_k."""
    s = c.spins.astype(np.float64)
    return -4.0 * s * (inst.couplings @ s)


def is_single_flip_stable(inst: SkInstance, c: SpinConfig) -> bool:
    return bool(all_deltas(inst, c).min() >= 0.0)


def repulsion_parameter(inst: SkInstance, c: SpinConfig) -> float:
    """Level-repulsion parameter of a minimum from its one-flip costs.

    A weak transverse field bx lowers a single-flip-stable level by
    bx^2 * sum_j 1/delta_j to second order; writing that as
    n bx^2 / (2 f J) gives f = n / (2 J sum_j 1/delta_j), the harmonic-mean
    flip cost in units of 2J.
    """
    deltas = all_deltas(inst, c)
    if deltas.min() <= 0.0:
        raise ValueError("repulsion parameter is defined for stable configs only")
    return float(inst.n / (2.0 * inst.j_scale * np.sum(1.0 / deltas)))


def _as_minimum(inst: SkInstance, c: SpinConfig) -> LocalMinimum:
    e = energy(inst, c)
    return LocalMinimum(config=c, energy=e, per_spin_energy=e / (inst.n * inst.j_scale))


def greedy_descent(inst: SkInstance, start: SpinConfig, seed: int) -> LocalMinimum:
    """First-improvement descent, site order re-shuffled per pass by `seed`.

    The endpoint is single-flip stable and reachable from `start` through
    strictly energy-decreasing single flips; deterministic for fixed seed.
    """
    if len(start) != inst.n:
        raise ValueError("config length does not match instance")
    rng = np.random.default_rng(seed)
    spins = start.spins.copy()
    couplings = inst.couplings
    local = couplings @ spins.astype(np.float64)
    while True:
        deltas = -4.0 * spins * local
        order = rng.permutation(inst.n)
        improving = order[deltas[order] < 0.0]
        if improving.size == 0:
            break
        k = int(improving[0])
        spins[k] = -spins[k]
        local += 2.0 * spins[k] * couplings[:, k]
    return _as_minimum(inst, SpinConfig(spins))


def simulated_anneal(inst: SkInstance, start: SpinConfig, sweeps: int,
                     t_hot: float, t_cold: float, seed: int) -> LocalMinimum:
    """Metropolis single-flip annealing with a geometric temperature ladder.

    n flip attempts per sweep; finished by a greedy descent so the result is
    always single-flip stable.  t_hot = t_cold = 0 degenerates to descent.
    """
    if len(start) != inst.n:
        raise ValueError("config length does not match instance")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if not (t_hot >= t_cold >= 0.0):
        raise ValueError("need t_hot >= t_cold >= 0")
    if t_hot == 0.0:
        temps = np.zeros(sweeps)
    else:
        # geometric ladder; a zero floor is approximated by t_hot * 1e-12
        lo = max(t_cold, t_hot * 1e-12)
        temps = np.geomspace(t_hot, lo, sweeps)

    rng = np.random.default_rng(seed)
    spins = start.spins.copy()
    couplings = inst.couplings
    local = couplings @ spins.astype(np.float64)
    for t in temps:
        sites = rng.integers(0, inst.n, size=inst.n)
        accept_draws = rng.random(inst.n)
        for k, u in zip(sites, accept_draws):
            delta = -4.0 * spins[k] * local[k]
            if delta < 0.0 or (t > 0.0 and u < np.exp(-delta / t)):
                spins[k] = -spins[k]
                local += 2.0 * spins[k] * couplings[:, k]
    finish_seed = int(rng.integers(0, 2**63 - 1))
    return greedy_descent(inst, SpinConfig(spins), seed=finish_seed)


def _spin_blocks(n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (indices, sz) blocks covering all 2^n configurations.

    sz rows are the +-1 spins of each index under the bit-0 <-> +1 convention.
    """
    total = 1 << n
    block = min(total, 1 << _BLOCK_BITS)
    bitpos = np.arange(n, dtype=np.int64)
    for lo in range(0, total, block):
        idx = np.arange(lo, min(lo + block, total), dtype=np.int64)
        bits = (idx[:, None] >> bitpos) & 1
        yield idx, (1 - 2 * bits).astype(np.float64)


def all_energies(inst: SkInstance) -> np.ndarray:
    """Classical energies of all 2^n basis configurations, indexed by bit-string."""
    if inst.n > 26:
        raise ResourceLimitError(f"2^{inst.n} energies exceed the n<=26 guard")
    out = np.empty(1 << inst.n)
    for idx, sz in _spin_blocks(inst.n):
        out[idx] = np.einsum("bi,bi->b", sz, sz @ inst.couplings)
    return out


def enumerate_minima(inst: SkInstance) -> list[LocalMinimum]:
    """All single-flip-stable configurations, sorted by energy ascending.

    Exhaustive 2^n scan; refuses n above the enumeration guard.
    """
    if inst.n > ENUMERATION_LIMIT:
        raise ResourceLimitError(
            f"enumerate_minima is a 2^n scan; n={inst.n} exceeds {ENUMERATION_LIMIT}")
    found: list[LocalMinimum] = []
    for idx, sz in _spin_blocks(inst.n):
        local = sz @ inst.couplings
        deltas = -4.0 * sz * local
        stable = np.min(deltas, axis=1) >= 0.0
        energies = np.einsum("bi,bi->b", sz, local)
        for b, e in zip(idx[stable], energies[stable]):
            cfg = SpinConfig.from_index(inst.n, int(b))
            found.append(LocalMinimum(cfg, float(e), float(e) / (inst.n * inst.j_scale)))
    found.sort(key=lambda m: m.energy)
    return found


def basin_of(inst: SkInstance, c: SpinConfig, seed: int = 0) -> LocalMinimum:
    """Steepest-descent endpoint of `c`; defines the basin partition.

    Deterministic without randomness (ties go to the lowest site index);
    `seed` is accepted for signature parity with the annealer and ignored.
    """
    del seed
    if len(c) != inst.n:
        raise ValueError("config length does not match instance")
    spins = c.spins.copy()
    couplings = inst.couplings
    local = couplings @ spins.astype(np.float64)
    while True:
        deltas = -4.0 * spins * local
        k = int(np.argmin(deltas))
        if deltas[k] >= 0.0:
            break
        spins[k] = -spins[k]
        local += 2.0 * spins[k] * couplings[:, k]
    return _as_minimum(inst, SpinConfig(spins))


def basin_map(inst: SkInstance) -> np.ndarray:
    """Basin endpoint index for every configuration index (length 2^n).

    Steepest-descent attribution with memoization along descent paths.
    """
    if inst.n > ENUMERATION_LIMIT:
        raise ResourceLimitError(
            f"basin_map is a 2^n scan; n={inst.n} exceeds {ENUMERATION_LIMIT}")
    n = inst.n
    total = 1 << n
    endpoint = np.full(total, -1, dtype=np.int64)
    couplings = inst.couplings
    bitpos = np.arange(n, dtype=np.int64)
    for b0 in range(total):
        if endpoint[b0] >= 0:
            continue
        path = []
        b = b0
        while endpoint[b] < 0:
            path.append(b)
            spins = (1 - 2 * ((b >> bitpos) & 1)).astype(np.float64)
            deltas = -4.0 * spins * (couplings @ spins)
            k = int(np.argmin(deltas))
            if deltas[k] >= 0.0:
                endpoint[b] = b
                break
            b ^= 1 << k
        for p in path:
            endpoint[p] = endpoint[b]
    return endpoint


def export_minima_csv(minima: list[LocalMinimum], path: str | Path,
                      metadata: dict | None = None) -> None:
    """CSV columns (rank, energy, per_spin_energy, bitstring_hex)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["rank", "energy", "per_spin_energy", "bitstring_hex"])
        for rank, m in enumerate(minima):
            writer.writerow([rank, f"{m.energy:.17g}", f"{m.per_spin_energy:.17g}",
                             m.config.to_hex()])
