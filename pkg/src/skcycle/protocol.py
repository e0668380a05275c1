"""The four-step cyclic optimization loop with reference bookkeeping.

One cycle, for a reference local minimum r:

  1. raise bz to bz_max at bx = 0 -- purely classical, so the state stays
     the reference bit-string (implemented without time evolution; tau1 is
     kept for time accounting only);
  2. ramp bx from 0 to chi * bz_max at fixed bz_max over tau2;
  3. ramp both fields to zero along the ray bx = chi * bz over tau3;
  4. measure, descend classically, and accept the result as the new
     reference iff it is strictly lower in energy.

Rejected cycles retain the old reference, so the reference energy trace
never increases.  The slope chi is adapted between cycles: repeated
self-returns raise it, repeated higher-energy outcomes lower it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classical import greedy_descent, is_single_flip_stable, simulated_anneal
from .instance import LocalMinimum, SkInstance, SpinConfig
from .quantum import (FieldPoint, FieldRamp, QuantumState, ReferenceHamiltonian,
                      classical_critical_field, evolve, measure,
                      min_gap_along_ray)

__all__ = [
    "CycleConfig",
    "CycleResult",
    "RunRecord",
    "TunerPolicy",
    "run_cycle",
    "iterate",
    "tune_chi",
    "default_bz_max",
    "suggest_tau3",
    "acceptance_tolerance",
    "write_run_log",
    "run_summary",
]


@dataclass(frozen=True)
class CycleConfig:
    """Parameters of one cycle; tau1 only enters the time accounting.

    chi = 0 is allowed as the degenerate, purely classical cycle (bx stays
    zero, so the reference can never change); everything else is positive.
    """

    chi: float
    bz_max: float
    tau1: float
    tau2: float
    tau3: float
    seed: int
    dt_max: float = 5e-3
    track_gap: bool = False
    gap_grid_points: int = 33

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError("chi must be non-negative")
        for name in ("bz_max", "tau1", "tau2", "tau3", "dt_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TunerPolicy:
    """On-the-fly chi adaptation: patience-window rule, multiplicative steps."""

    patience: int = 3
    up: float = 0.05
    down: float = 0.05
    enabled: bool = True


@dataclass(frozen=True)
class CycleResult:
    measured: SpinConfig
    descended: LocalMinimum
    accepted: bool
    energy_before: float
    energy_after: float
    self_return: bool
    chi: float
    seed: int
    min_gap_seen: float | None = None


@dataclass
class RunRecord:
    """History of one iterative run."""

    instance: SkInstance
    initial_reference: LocalMinimum
    cycles: list[CycleResult] = field(default_factory=list)
    chi_trace: list[float] = field(default_factory=list)
    ref_energy_trace: list[float] = field(default_factory=list)
    final_reference: LocalMinimum | None = None
    wall_seconds: float = 0.0
    simulated_time: float = 0.0
    ground_reached: bool | None = None

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    @property
    def acceptance_fraction(self) -> float:
        if not self.cycles:
            return 0.0
        return sum(c.accepted for c in self.cycles) / len(self.cycles)


def acceptance_tolerance(inst: SkInstance) -> float:
    """Strict-decrease margin; avoids cycling among degenerate minima."""
    return 1e-9 * inst.n * inst.j_scale


def default_bz_max(inst: SkInstance, ref: SpinConfig) -> float:
    """Twice the reference's exact classical critical field (floor 2J)."""
    return max(2.0 * classical_critical_field(inst, ref), 2.0 * inst.j_scale)


def suggest_tau3(inst: SkInstance, ref: SpinConfig, chi: float, bz_max: float,
                 *, c: float = 10.0, grid_points: int = 32) -> float:
    """Step-3 duration from the adiabatic bound: c over the squared gap.

    The gap estimate is the grid minimum of E_1 - E_0 along the ray; callers
    should cap the result, since sub-critical slopes have exponentially
    small gaps.
    """
    grid = np.linspace(bz_max, bz_max / grid_points, grid_points)
    gap, _ = min_gap_along_ray(inst, ref, chi, grid)
    return c / gap ** 2


def run_cycle(inst: SkInstance, ref: LocalMinimum, cfg: CycleConfig,
              ham: ReferenceHamiltonian | None = None) -> CycleResult:
    """Execute one cycle from the given reference minimum."""
    if not is_single_flip_stable(inst, ref.config):
        raise ValueError("reference must be single-flip stable")
    if ham is None or ham.ref != ref.config:
        ham = ReferenceHamiltonian(inst, ref.config)
    if cfg.bz_max <= classical_critical_field(inst, ref.config):
        raise ValueError("bz_max must exceed the reference's critical field")

    rng = np.random.default_rng(cfg.seed)
    measure_seed = int(rng.integers(0, 2**63 - 1))
    descent_seed = int(rng.integers(0, 2**63 - 1))

    min_gap = None
    if cfg.track_gap and cfg.chi > 0:
        grid = np.linspace(cfg.bz_max, cfg.bz_max / cfg.gap_grid_points,
                           cfg.gap_grid_points)
        min_gap, _ = min_gap_along_ray(inst, ref.config, cfg.chi, grid)

    # step 1 is classical: the state is exactly the reference bit-string
    state = QuantumState.from_config(ref.config)
    top = FieldPoint(cfg.bz_max, cfg.chi * cfg.bz_max)
    schedule = [
        FieldRamp(FieldPoint(cfg.bz_max, 0.0), top, cfg.tau2),
        FieldRamp(top, FieldPoint(0.0, 0.0), cfg.tau3),
    ]
    state = evolve(inst, ref.config, schedule, state, cfg.dt_max, ham=ham)

    measured = measure(state, measure_seed)
    descended = greedy_descent(inst, measured, descent_seed)
    accepted = descended.energy < ref.energy - acceptance_tolerance(inst)
    return CycleResult(
        measured=measured,
        descended=descended,
        accepted=bool(accepted),
        energy_before=ref.energy,
        energy_after=descended.energy,
        self_return=descended.config == ref.config,
        chi=cfg.chi,
        seed=cfg.seed,
        min_gap_seen=min_gap,
    )


def tune_chi(chi: float, recent: list[CycleResult],
             policy: TunerPolicy = TunerPolicy()) -> float:
    """Slope update from the trailing window of cycle results.

    All of the last `patience` cycles self-returned -> raise chi; all came
    back as strictly higher-energy minima -> lower chi; otherwise unchanged.
    """
    if not policy.enabled or len(recent) < policy.patience:
        return chi
    window = recent[-policy.patience:]
    if all(c.self_return for c in window):
        return chi * (1.0 + policy.up)
    if all((not c.accepted and not c.self_return
            and c.energy_after > c.energy_before) for c in window):
        return chi * (1.0 - policy.down)
    return chi


def iterate(inst: SkInstance, start: SpinConfig, cfg0: CycleConfig, budget: int,
            tuner: TunerPolicy = TunerPolicy(), *,
            anneal_sweeps: int = 10, t_hot: float | None = None,
            t_cold: float | None = None, auto_bz_max: bool = False,
            ground_energy: float | None = None) -> RunRecord:
    """Run up to `budget` cycles from an annealed reference.

    The reference is seeded by simulated annealing from `start`.  With
    `auto_bz_max` the field cap is recomputed for each new reference so it
    always clears that reference's critical field.  Stops early once
    `ground_energy` (when known) is reached within the acceptance tolerance.
    Fully deterministic for a fixed configuration.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    t0 = time.perf_counter()
    j = inst.j_scale
    hot = 2.0 * j if t_hot is None else t_hot
    cold = 0.1 * j if t_cold is None else t_cold
    master = np.random.default_rng(cfg0.seed)
    ref = simulated_anneal(inst, start, sweeps=anneal_sweeps, t_hot=hot,
                           t_cold=cold, seed=int(master.integers(0, 2**63 - 1)))

    record = RunRecord(instance=inst, initial_reference=ref)
    record.ref_energy_trace.append(ref.energy)
    tol = acceptance_tolerance(inst)
    chi = cfg0.chi
    ham = ReferenceHamiltonian(inst, ref.config)

    for _ in range(budget):
        if ground_energy is not None and ref.energy <= ground_energy + tol:
            break
        cfg = replace(cfg0, chi=chi, seed=int(master.integers(0, 2**63 - 1)))
        if auto_bz_max:
            cfg = replace(cfg, bz_max=default_bz_max(inst, ref.config))
        result = run_cycle(inst, ref, cfg, ham=ham)
        record.cycles.append(result)
        record.chi_trace.append(chi)
        if result.accepted:
            ref = result.descended
            ham = ReferenceHamiltonian(inst, ref.config)
        record.ref_energy_trace.append(ref.energy)
        chi = tune_chi(chi, record.cycles, tuner)

    record.final_reference = ref
    if ground_energy is not None:
        record.ground_reached = ref.energy <= ground_energy + tol
    record.simulated_time = record.n_cycles * (cfg0.tau1 + cfg0.tau2 + cfg0.tau3)
    record.wall_seconds = time.perf_counter() - t0
    return record


# -- run log formats ----------------------------------------------------------


def write_run_log(record: RunRecord, path: str | Path) -> None:
    """JSON-lines log, one cycle per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for k, (c, ref_after) in enumerate(zip(record.cycles,
                                               record.ref_energy_trace[1:])):
            fh.write(json.dumps({
                "cycle": k,
                "chi": c.chi,
                "seed": c.seed,
                "measured_hex": c.measured.to_hex(),
                "descended_hex": c.descended.config.to_hex(),
                "energy_before": c.energy_before,
                "energy_after": c.energy_after,
                "accepted": c.accepted,
                "self_return": c.self_return,
                "min_gap_seen": c.min_gap_seen,
                "reference_energy": ref_after,
            }) + "\n")


def run_summary(record: RunRecord) -> dict:
    final = record.final_reference or record.initial_reference
    return {
        "final_energy": final.energy,
        "final_per_spin_energy": final.per_spin_energy,
        "final_hex": final.config.to_hex(),
        "initial_energy": record.initial_reference.energy,
        "n_cycles": record.n_cycles,
        "acceptance_fraction": record.acceptance_fraction,
        "chi_trace": record.chi_trace,
        "simulated_time": record.simulated_time,
        "wall_seconds": record.wall_seconds,
        "ground_reached": record.ground_reached,
    }
