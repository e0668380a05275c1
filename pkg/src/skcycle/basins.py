"""Statistical model of isolated local-minimum energy curves.

Each minimum l is reduced to a triplet (E_l, m_l, f_l): its zero-field
energy, its Zeeman slope m_l = 1 - 2 d_l / n against the reference, and a
level-repulsion parameter f_l.  Under fields (bz, bx) its level shifts by
the self-energy

    Sigma(bz, bx) = n J [ f - sqrt((f + m bz/J)^2 + (bx/J)^2) ],

which is exact (-m n bz) at bx = 0, quadratic (-n bx^2 / (2 f J)) at small
bx, and fully polarized (-n bx) at large bx.  Ensembles sample d binomially,
f uniformly on (1/4, 3/4), and E from a pluggable density; the reference
curve always has m = 1 and a conditioned energy.

Crossing statistics along a ray bx = chi * bz feed the ratio-scaling fit
ratio ~ (chi - chi_c)^gamma / (eps_r - eps_gs)^delta.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .errors import FitWindowError

__all__ = [
    "BasinCurve",
    "BasinEnsemble",
    "CrossingCounts",
    "FitResult",
    "self_energy",
    "curve_levels",
    "reference_level",
    "gaussian_minima_energies",
    "sample_ensemble",
    "count_crossings",
    "ratio_sweep",
    "fit_exponents",
    "critical_field",
    "phase_boundary",
    "synthetic_ratio_table",
    "default_eps_gs",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_fit_json",
]

# Gaussian fit to the per-spin energies of exhaustively enumerated
# single-flip-stable states (double-sum convention), 128 instances over
# n = 8..14: mean eps ~ EPS_MEAN_INF + EPS_MEAN_SLOPE / n,
# std ~ EPS_STD_COEF / sqrt(n).
EPS_MEAN_INF = -1.094
EPS_MEAN_SLOPE = 1.28
EPS_STD_COEF = 0.75

DEFAULT_GRID = 2048
CROSSING_TOL_SCALE = 1e-10
_CURVE_BLOCK = 4096


@dataclass(frozen=True)
class BasinCurve:
    """Phenomenological triplet for one isolated minimum."""

    e_l: float
    m_l: float
    f_l: float

    def __post_init__(self):
        if not -1.0 <= self.m_l <= 1.0:
            raise ValueError("slope m must lie in [-1, 1]")
        if not 0.0 < self.f_l < 1.0:
            raise ValueError("repulsion f must lie in (0, 1)")


@dataclass(frozen=True)
class BasinEnsemble:
    """A sampled population of curves plus the conditioned reference."""

    n: int
    j_scale: float
    reference: BasinCurve
    energies: np.ndarray
    slopes: np.ndarray
    repulsions: np.ndarray
    seed: int

    def __post_init__(self):
        if self.reference.m_l != 1.0:
            raise ValueError("reference curve must have slope exactly 1")
        e = np.asarray(self.energies, dtype=np.float64)
        m = np.asarray(self.slopes, dtype=np.float64)
        f = np.asarray(self.repulsions, dtype=np.float64)
        if not (e.size == m.size == f.size) or e.size < 1:
            raise ValueError("ensemble arrays must be equal-length, size >= 1")
        d = (1.0 - m) * self.n / 2.0
        if np.max(np.abs(d - np.round(d))) > 1e-9:
            raise ValueError("slopes must be of the form 1 - 2 d / n, d integer")
        if np.any(f <= 0.0) or np.any(f >= 1.0):
            raise ValueError("repulsions must lie in (0, 1)")
        for name, arr in (("energies", e), ("slopes", m), ("repulsions", f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_curves(self) -> int:
        return self.energies.size

    @property
    def curves(self) -> list[BasinCurve]:
        return [BasinCurve(float(e), float(m), float(f))
                for e, m, f in zip(self.energies, self.slopes, self.repulsions)]


@dataclass(frozen=True)
class CrossingCounts:
    """Reference crossings along one ray, split by SK energy side."""

    n_above: int
    n_below: int
    above_fields: np.ndarray
    below_fields: np.ndarray

    def __post_init__(self):
        if self.n_above != len(self.above_fields) or self.n_below != len(self.below_fields):
            raise ValueError("counts must equal crossing-list lengths")


@dataclass(frozen=True)
class FitResult:
    """Joint power-law fit of the crossing ratio."""

    gamma: float
    delta: float
    chi_c: float
    const: float
    eps_gs: float
    residuals: np.ndarray
    chi_min: float
    chi_max: float
    n_rows: int

    @property
    def decade_span(self) -> float:
        return (self.chi_max - self.chi_c) / (self.chi_min - self.chi_c)


def _sigma(m, f, n: int, j: float, bz, bx):
    return n * j * (f - np.sqrt((f + m * bz / j) ** 2 + (bx / j) ** 2))


def self_energy(c: BasinCurve, n: int, j: float, bz: float, bx: float) -> float:
    """Field-induced level shift of one curve."""
    if bz < 0 or bx < 0:
        raise ValueError("fields must be non-negative")
    return float(_sigma(c.m_l, c.f_l, n, j, bz, bx))


def curve_levels(ens: BasinEnsemble, chi: float, bz) -> np.ndarray:
    """Tilde-levels of all curves on a bz grid along the ray bx = chi * bz."""
    bz = np.atleast_1d(np.asarray(bz, dtype=np.float64))
    m = ens.slopes[:, None]
    f = ens.repulsions[:, None]
    return ens.energies[:, None] + _sigma(m, f, ens.n, ens.j_scale, bz[None, :],
                                          chi * bz[None, :])


def reference_level(ens: BasinEnsemble, chi: float, bz) -> np.ndarray:
    bz = np.atleast_1d(np.asarray(bz, dtype=np.float64))
    r = ens.reference
    return r.e_l + _sigma(r.m_l, r.f_l, ens.n, ens.j_scale, bz, chi * bz)


def gaussian_minima_energies(rng: np.random.Generator, n: int, j_scale: float,
                             size: int) -> np.ndarray:
    """Default E_l density: Gaussian in eps with calibrated n-dependence."""
    mu = EPS_MEAN_INF + EPS_MEAN_SLOPE / n
    sigma = EPS_STD_COEF / np.sqrt(n)
    return (mu + sigma * rng.standard_normal(size)) * n * j_scale


def default_eps_gs(n: int, n_curves: int) -> float:
    """Expected minimum eps of `n_curves` draws from the default density."""
    mu = EPS_MEAN_INF + EPS_MEAN_SLOPE / n
    sigma = EPS_STD_COEF / np.sqrt(n)
    # asymptotic expected minimum of n_curves standard normals
    k = max(n_curves, 2)
    return mu - sigma * np.sqrt(2.0 * np.log(k))


EnergySampler = Callable[[np.random.Generator, int, float, int], np.ndarray]


def sample_ensemble(n: int, n_curves: int,
                    energy_sampler: EnergySampler | None = None,
                    seed: int = 0, *, eps_r: float | None = None,
                    j_scale: float = 1.0) -> BasinEnsemble:
    """Sample (E_l, m_l, f_l) triplets: d ~ Binomial(n, 1/2), f ~ U(1/4, 3/4),
    E from the pluggable sampler; all mutually independent.

    The reference has m = 1 exactly and f sampled like any basin; its energy
    is the conditioning knob eps_r (drawn from the sampler when omitted).
    """
    if n_curves < 1:
        raise ValueError("n_curves must be >= 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    sampler = energy_sampler or gaussian_minima_energies
    rng = np.random.default_rng(seed)
    d = rng.binomial(n, 0.5, size=n_curves)
    m = 1.0 - 2.0 * d / n
    f = rng.uniform(0.25, 0.75, size=n_curves)
    e = np.asarray(sampler(rng, n, j_scale, n_curves), dtype=np.float64)
    if e.shape != (n_curves,) or not np.all(np.isfinite(e)):
        raise ValueError("energy sampler returned an invalid array")
    f_ref = float(rng.uniform(0.25, 0.75))
    e_ref = float(eps_r * n * j_scale) if eps_r is not None \
        else float(sampler(rng, n, j_scale, 1)[0])
    return BasinEnsemble(n=n, j_scale=j_scale,
                         reference=BasinCurve(e_ref, 1.0, f_ref),
                         energies=e, slopes=m, repulsions=f, seed=seed)


def count_crossings(ens: BasinEnsemble, chi: float, bz_hi: float,
                    grid: int = DEFAULT_GRID) -> CrossingCounts:
    """Find every bz in (0, bz_hi] where a curve meets the reference.

    Sign-change bracketing on a uniform grid followed by bisection to
    |level difference| < 1e-10 n J; tangencies without a sign change count
    as zero crossings.  Crossings are classified by the curve's SK energy
    relative to the reference.
    """
    if chi < 0:
        raise ValueError("chi must be non-negative")
    if bz_hi <= 0:
        raise ValueError("bz_hi must be positive")
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    n, j = ens.n, ens.j_scale
    tol = CROSSING_TOL_SCALE * n * j
    bz = np.linspace(0.0, bz_hi, grid)
    ref = reference_level(ens, chi, bz)
    e_r = ens.reference.e_l

    cross_curves: list[np.ndarray] = []
    cross_fields: list[np.ndarray] = []
    for lo in range(0, ens.n_curves, _CURVE_BLOCK):
        sl = slice(lo, min(lo + _CURVE_BLOCK, ens.n_curves))
        sub = BasinEnsemble(n, j, ens.reference, ens.energies[sl],
                            ens.slopes[sl], ens.repulsions[sl], ens.seed)
        diff = curve_levels(sub, chi, bz) - ref[None, :]
        sign = np.where(diff >= 0.0, 1, -1)
        rows, cells = np.nonzero(sign[:, :-1] * sign[:, 1:] < 0)
        if rows.size == 0:
            continue
        a = bz[cells]
        b = bz[cells + 1]
        ga = diff[rows, cells]
        m = sub.slopes[rows]
        f = sub.repulsions[rows]
        de = sub.energies[rows] - e_r
        r = ens.reference
        for _ in range(200):
            mid = 0.5 * (a + b)
            gm = (de + _sigma(m, f, n, j, mid, chi * mid)
                  - _sigma(r.m_l, r.f_l, n, j, mid, chi * mid))
            left = (np.sign(gm) == np.sign(ga)) | (gm == 0.0)
            a = np.where(left, mid, a)
            ga = np.where(left, gm, ga)
            b = np.where(left, b, mid)
            if np.all(np.abs(gm) < tol) or np.all(b - a < 1e-15 * bz_hi):
                break
        cross_curves.append(rows + lo)
        cross_fields.append(0.5 * (a + b))

    if cross_curves:
        curves_idx = np.concatenate(cross_curves)
        fields = np.concatenate(cross_fields)
    else:
        curves_idx = np.empty(0, dtype=np.int64)
        fields = np.empty(0)
    above = ens.energies[curves_idx] > e_r
    below = ens.energies[curves_idx] < e_r
    above_fields = np.sort(fields[above])
    below_fields = np.sort(fields[below])
    return CrossingCounts(n_above=int(above.sum()), n_below=int(below.sum()),
                          above_fields=above_fields, below_fields=below_fields)


EnsembleFactory = Callable[[float, int], BasinEnsemble]


def ratio_sweep(factory: EnsembleFactory, chis: Sequence[float],
                ref_energies: Sequence[float], reps: int, *,
                bz_hi: float, grid: int = DEFAULT_GRID, seed: int = 0,
                bootstrap: int = 200) -> list[dict]:
    """Disorder-averaged crossing-count ratios over a (chi, eps_r) grid.

    Each rep draws a fresh ensemble from `factory(eps_r, rep_seed)`; the
    ratio is the rep-summed n_above over n_below with a bootstrap standard
    error over reps.  Cells with zero total n_below get NaN (excluded from
    fits).  Rows come back sorted by (eps_r, chi).
    """
    if not chis or not list(ref_energies):
        raise ValueError("chis and ref_energies must be non-empty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rows: list[dict] = []
    master = np.random.SeedSequence(seed)
    for ie, eps_r in enumerate(ref_energies):
        rep_seeds = [int(s.generate_state(1)[0]) for s in
                     np.random.SeedSequence((seed, ie)).spawn(reps)]
        counts = {chi: np.zeros((reps, 2), dtype=np.int64) for chi in chis}
        for rep, rep_seed in enumerate(rep_seeds):
            ens = factory(float(eps_r), rep_seed)
            for chi in chis:
                cc = count_crossings(ens, float(chi), bz_hi, grid)
                counts[chi][rep] = (cc.n_above, cc.n_below)
        boot_rng = np.random.default_rng(master.spawn(1)[0])
        for chi in chis:
            per_rep = counts[chi]
            tot_above = int(per_rep[:, 0].sum())
            tot_below = int(per_rep[:, 1].sum())
            ratio = tot_above / tot_below if tot_below > 0 else float("nan")
            stderr = float("nan")
            if tot_below > 0 and reps > 1:
                draws = []
                for _ in range(bootstrap):
                    pick = boot_rng.integers(0, reps, size=reps)
                    s = per_rep[pick].sum(axis=0)
                    if s[1] > 0:
                        draws.append(s[0] / s[1])
                if len(draws) > 1:
                    stderr = float(np.std(draws, ddof=1))
            rows.append({"chi": float(chi), "eps_r": float(eps_r),
                         "n_above": tot_above, "n_below": tot_below,
                         "ratio": ratio, "stderr": stderr, "seed": seed})
    rows.sort(key=lambda r: (r["eps_r"], r["chi"]))
    return rows


def fit_exponents(table: Sequence[dict], eps_gs: float, *,
                  chi_c_bounds: tuple[float, float] | None = None) -> FitResult:
    """Fit log(ratio) = gamma log(chi - chi_c) - delta log(eps_r - eps_gs) + C.

    chi_c is the single nonlinear parameter, minimized by bounded scalar
    search below the smallest chi in the table; the linear parameters come
    from least squares at each candidate.
    """
    rows = [r for r in table
            if np.isfinite(r["ratio"]) and r["ratio"] > 0 and r["eps_r"] > eps_gs]
    if not rows:
        raise FitWindowError("no usable rows: need finite positive ratios")
    chi = np.array([r["chi"] for r in rows])
    eps_r = np.array([r["eps_r"] for r in rows])
    y = np.log(np.array([r["ratio"] for r in rows]))
    if np.unique(chi).size < 3:
        raise FitWindowError("need at least 3 distinct chi values in the window")
    if np.unique(eps_r).size < 2:
        raise FitWindowError("need at least 2 distinct eps_r values to fit delta")

    x2 = np.log(eps_r - eps_gs)
    chi_min = float(chi.min())
    lo, hi = chi_c_bounds if chi_c_bounds else (0.0, chi_min * (1 - 1e-9))
    hi = min(hi, chi_min * (1 - 1e-9))
    if not lo < hi:
        raise FitWindowError("empty chi_c search interval")

    def solve(chi_c: float) -> tuple[np.ndarray, np.ndarray]:
        design = np.column_stack([np.log(chi - chi_c), x2, np.ones_like(y)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return coef, y - design @ coef

    def sse(chi_c: float) -> float:
        _, res = solve(chi_c)
        return float(res @ res)

    opt = scipy.optimize.minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                                         options={"xatol": 1e-10})
    chi_c = float(opt.x)
    coef, residuals = solve(chi_c)
    gamma, delta, const = float(coef[0]), float(-coef[1]), float(coef[2])
    chi_max = float(chi.max())
    span = (chi_max - chi_c) / (chi_min - chi_c)
    if span < 10.0:
        raise FitWindowError(
            f"fit window spans {span:.2f}x in (chi - chi_c); need >= 1 decade")
    if gamma <= 0 or delta <= 0:
        raise FitWindowError("fit did not produce positive exponents")
    return FitResult(gamma=gamma, delta=delta, chi_c=chi_c, const=const,
                     eps_gs=float(eps_gs), residuals=residuals,
                     chi_min=chi_min, chi_max=chi_max, n_rows=len(rows))


def _analytic_crossing_fields(ens: BasinEnsemble, chi: float) -> np.ndarray:
    """All positive crossing fields from the quartic closed form (per curve).

    Used to bound the search window for the last intersection; the counting
    path stays the grid-plus-bisection routine.
    """
    n, j = ens.n, ens.j_scale
    r = ens.reference
    out: list[float] = []
    for e_l, m_l, f_l in zip(ens.energies, ens.slopes, ens.repulsions):
        c = (e_l - r.e_l) / (n * j) + (f_l - r.f_l)
        # P(u) - Q(u) = A u^2 + B u + (f_l^2 - f_r^2), u = bz / j
        a2 = m_l ** 2 - 1.0
        b1 = 2.0 * (f_l * m_l - r.f_l)
        if c == 0.0:
            roots = np.roots(np.array([a2, b1, f_l ** 2 - r.f_l ** 2]))
        else:
            d0 = f_l ** 2 - r.f_l ** 2 - c ** 2
            quartic = np.array([
                a2 ** 2,
                2.0 * a2 * b1,
                b1 ** 2 + 2.0 * a2 * d0 - 4.0 * c ** 2 * (1.0 + chi ** 2),
                2.0 * b1 * d0 - 8.0 * c ** 2 * r.f_l,
                d0 ** 2 - 4.0 * c ** 2 * r.f_l ** 2,
            ])
            nz = np.flatnonzero(np.abs(quartic) > 0)
            if nz.size == 0:
                continue
            roots = np.roots(quartic[nz[0]:])
        for u in roots:
            if abs(u.imag) > 1e-9 or u.real <= 0:
                continue
            u = float(u.real)
            p = (f_l + m_l * u) ** 2 + (chi * u) ** 2
            q = (r.f_l + u) ** 2 + (chi * u) ** 2
            if abs(np.sqrt(p) - np.sqrt(q) - c) < 1e-8 * (1.0 + abs(c)):
                out.append(u * j)
    return np.asarray(out)


def critical_field(ens: BasinEnsemble, chi: float, *,
                   grid: int = DEFAULT_GRID) -> float:
    """Largest bz where any curve still intersects the reference; 0 if none."""
    if chi < 0:
        raise ValueError("chi must be non-negative")
    bounds = _analytic_crossing_fields(ens, chi)
    if bounds.size == 0:
        return 0.0
    bz_hi = 1.05 * float(bounds.max())
    counts = count_crossings(ens, chi, bz_hi, grid)
    fields = np.concatenate([counts.above_fields, counts.below_fields])
    return float(fields.max()) if fields.size else 0.0


def phase_boundary(ens: BasinEnsemble, chis: Sequence[float]) -> list[tuple[float, float]]:
    """The first-order line as (bz, bx) = (B_c(chi), chi * B_c(chi)) per chi."""
    if not list(chis):
        raise ValueError("chis must be non-empty")
    out = []
    for chi in chis:
        bc = critical_field(ens, float(chi))
        out.append((bc, float(chi) * bc))
    return out


def synthetic_ratio_table(chis: Sequence[float], eps_rs: Sequence[float],
                          gamma: float, delta: float, chi_c: float,
                          eps_gs: float, *, amplitude: float = 1.0,
                          noise: float = 0.0, seed: int = 0) -> list[dict]:
    """Rows generated exactly from the ratio scaling law (optionally noisy)."""
    rng = np.random.default_rng(seed)
    rows = []
    for eps_r in eps_rs:
        for chi in chis:
            if chi <= chi_c:
                continue
            ratio = amplitude * (chi - chi_c) ** gamma / (eps_r - eps_gs) ** delta
            if noise > 0:
                ratio *= float(np.exp(noise * rng.standard_normal()))
            rows.append({"chi": float(chi), "eps_r": float(eps_r),
                         "n_above": 0, "n_below": 0, "ratio": float(ratio),
                         "stderr": float("nan"), "seed": seed})
    return rows


# -- table formats -------------------------------------------------------------

SWEEP_COLUMNS = ["chi", "eps_r", "n_above", "n_below", "ratio", "stderr", "seed"]


def write_sweep_csv(rows: Sequence[dict], path: str | Path,
                    metadata: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([f"{r['chi']:.17g}", f"{r['eps_r']:.17g}",
                             r["n_above"], r["n_below"],
                             f"{r['ratio']:.17g}", f"{r['stderr']:.17g}",
                             r["seed"]])


def read_sweep_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if header != SWEEP_COLUMNS:
            raise ValueError(f"unexpected sweep columns: {header}")
        for rec in reader:
            rows.append({"chi": float(rec[0]), "eps_r": float(rec[1]),
                         "n_above": int(rec[2]), "n_below": int(rec[3]),
                         "ratio": float(rec[4]), "stderr": float(rec[5]),
                         "seed": int(rec[6])})
    return rows


def write_fit_json(fit: FitResult, path: str | Path,
                   metadata: dict | None = None) -> None:
    doc = {
        "meta": metadata or {},
        "gamma": fit.gamma,
        "delta": fit.delta,
        "chi_c": fit.chi_c,
        "const": fit.const,
        "eps_gs": fit.eps_gs,
        "chi_min": fit.chi_min,
        "chi_max": fit.chi_max,
        "n_rows": fit.n_rows,
        "residual_rms": float(np.sqrt(np.mean(fit.residuals ** 2))),
        "residuals": fit.residuals.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")
