"""Command-line entry point wiring the modules into reproducible experiments.

Subcommands: gen, spectrum, cycle, run, basin, fit, phase.  Every output
file embeds a metadata block (version, seeds, full flag echo): '#'-prefixed
``key = value`` lines in CSV files, a top-level "meta" object in JSON files.
Exit codes: 0 ok, 1 runtime/resource errors, 2 I/O, 3 fit-window, 64 usage.
All floats are written with 17 significant digits, locale-independent.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basins import (default_eps_gs, fit_exponents, phase_boundary, ratio_sweep,
                     read_sweep_csv, sample_ensemble, synthetic_ratio_table,
                     write_fit_json, write_sweep_csv)
from .classical import all_energies, enumerate_minima, simulated_anneal
from .errors import FitWindowError, ResourceLimitError
from .instance import SpinConfig, generate_instance, load_instance, save_instance
from .protocol import (CycleConfig, TunerPolicy, default_bz_max, iterate,
                       run_cycle, run_summary, suggest_tau3, write_run_log)
from .quantum import DENSE_LIMIT, FieldPoint, full_spectrum, isolate_basins

USAGE_EXIT = 64
IO_EXIT = 2
FIT_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _require(parser: _Parser, args: argparse.Namespace, *names: str) -> None:
    # required flags are declared optional so --config files can supply them
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        parser.error("the following arguments are required: "
                     + ", ".join(f"--{n}" for n in missing))


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _meta(args: argparse.Namespace, **extra) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"version": __version__, "tool": "skcycle", "flags": flags, **extra}


def _meta_lines(meta: dict) -> list[str]:
    lines = [f"# version = {meta['version']}", f"# tool = {meta['tool']}"]
    for k, v in meta.items():
        if k in ("version", "tool"):
            continue
        lines.append(f"# {k} = {json.dumps(v)}")
    return lines


def _resolve_reference(inst, ref_spec: str, seed: int):
    if ref_spec == "anneal":
        start = SpinConfig.from_index(inst.n, 0)
        return simulated_anneal(inst, start, sweeps=20, t_hot=2.0 * inst.j_scale,
                                t_cold=0.1 * inst.j_scale, seed=seed)
    cfg = SpinConfig.from_hex(inst.n, ref_spec)
    from .classical import greedy_descent
    lm = greedy_descent(inst, cfg, seed=seed)
    if lm.config != cfg:
        raise ValueError(f"reference {ref_spec} is not single-flip stable")
    return lm


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text}") from exc


# -- gen ----------------------------------------------------------------------


def _build_gen(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="generate an SK instance file")
    p.add_argument("--config", help="JSON file of flag defaults (flags win)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--j", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return p


def _run_gen(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "n", "out")
    if args.n < 2:
        parser.error("--n must be at least 2")
    if args.j <= 0:
        parser.error("--j must be positive")
    inst = generate_instance(args.n, args.j, args.seed)
    save_instance(inst, args.out)
    return 0


# -- spectrum -------------------------------------------------------------------


def _build_spectrum(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="spectra along rays bx = chi * bz")
    p.add_argument("--config")
    p.add_argument("--inst", default=None)
    p.add_argument("--ref", default=None,
                   help="reference bit-string hex, or 'anneal'")
    p.add_argument("--chi", type=float, action="append", default=None,
                   help="ray slope; repeatable for multi-panel output")
    p.add_argument("--bz-max", type=float, default=2.0)
    p.add_argument("--bz-points", type=int, default=64)
    p.add_argument("--low-k", type=int, default=0,
                   help="iterative low-k solver (0 = dense, needs n <= 12)")
    p.add_argument("--isolate", action="store_true",
                   help="also write basin-isolated levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return p


def _run_spectrum(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "inst", "ref", "chi", "out")
    if args.bz_points < 2:
        parser.error("--bz-points must be at least 2")
    inst = load_instance(args.inst)
    if inst.n > DENSE_LIMIT and args.low_k <= 0:
        raise ResourceLimitError(
            f"n={inst.n} exceeds the dense limit {DENSE_LIMIT}; pass --low-k")
    ref = _resolve_reference(inst, args.ref, args.seed)
    k = args.low_k if args.low_k > 0 else None
    rows = []
    iso_rows = []
    minima = enumerate_minima(inst) if args.isolate else None
    for chi in args.chi:
        if chi < 0:
            parser.error("--chi must be non-negative")
        # descending grid, step-3 direction; avoid bz=0 except on the chi=0 ray
        lo = 0.0 if chi == 0.0 else args.bz_max / args.bz_points
        grid = np.linspace(args.bz_max, lo, args.bz_points)
        for bz in grid:
            f = FieldPoint(float(bz), float(chi * bz))
            slice_ = full_spectrum(inst, ref.config, f, k=k)
            for kk, ev in enumerate(slice_.eigenvalues):
                rows.append((f.bz, f.bx, kk, float(ev)))
            if args.isolate:
                for mid, level in isolate_basins(inst, ref.config, f, minima):
                    iso_rows.append((f.bz, f.bx, mid, level))
    meta = _meta(args, ref_hex=ref.config.to_hex(), n=inst.n)
    _write_spectrum_csv(args.out, rows, meta)
    if args.isolate:
        iso_path = str(Path(args.out).with_suffix(".isolated.csv"))
        _write_isolated_csv(iso_path, iso_rows, meta)
    return 0


def _write_spectrum_csv(path: str, rows, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_meta_lines(meta)) + "\n")
        fh.write("bz,bx,k,eigenvalue\n")
        for bz, bx, k, ev in rows:
            fh.write(f"{_fmt(bz)},{_fmt(bx)},{k},{_fmt(ev)}\n")


def _write_isolated_csv(path: str, rows, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_meta_lines(meta)) + "\n")
        fh.write("bz,bx,minimum,level\n")
        for bz, bx, mid, level in rows:
            fh.write(f"{_fmt(bz)},{_fmt(bx)},{mid},{_fmt(level)}\n")


# -- cycle / run ----------------------------------------------------------------


def _add_cycle_flags(p: _Parser) -> None:
    p.add_argument("--chi", type=float, default=3.6)
    p.add_argument("--bz-max", type=float, default=0.0,
                   help="0 = auto (twice the reference critical field)")
    p.add_argument("--tau1", type=float, default=1.0)
    p.add_argument("--tau2", type=float, default=2.0)
    p.add_argument("--tau3", type=float, default=20.0,
                   help="step-3 duration; 0 = c/gap^2 estimate at the "
                        "initial reference (capped by --tau3-cap)")
    p.add_argument("--tau3-cap", type=float, default=500.0)
    p.add_argument("--dt-max", type=float, default=5e-3)
    p.add_argument("--seed", type=int, default=0)


def _build_cycle(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="run a single optimization cycle")
    p.add_argument("--config")
    p.add_argument("--inst", default=None)
    p.add_argument("--ref", default=None)
    _add_cycle_flags(p)
    p.add_argument("--track-gap", action="store_true")
    p.add_argument("--out", default=None)
    return p


def _run_cycle_cmd(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "inst", "ref", "out")
    inst = load_instance(args.inst)
    ref = _resolve_reference(inst, args.ref, args.seed)
    bz_max = args.bz_max if args.bz_max > 0 else default_bz_max(inst, ref.config)
    tau3 = args.tau3
    if tau3 <= 0:
        tau3 = min(suggest_tau3(inst, ref.config, args.chi, bz_max),
                   args.tau3_cap)
    cfg = CycleConfig(chi=args.chi, bz_max=bz_max, tau1=args.tau1, tau2=args.tau2,
                      tau3=tau3, seed=args.seed, dt_max=args.dt_max,
                      track_gap=args.track_gap)
    res = run_cycle(inst, ref, cfg)
    doc = {
        "meta": _meta(args, ref_hex=ref.config.to_hex(), bz_max=bz_max),
        "measured_hex": res.measured.to_hex(),
        "descended_hex": res.descended.config.to_hex(),
        "energy_before": res.energy_before,
        "energy_after": res.energy_after,
        "accepted": res.accepted,
        "self_return": res.self_return,
        "min_gap_seen": res.min_gap_seen,
    }
    Path(args.out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return 0


def _build_run(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="iterative optimization run")
    p.add_argument("--config")
    p.add_argument("--inst", default=None)
    p.add_argument("--budget", type=int, default=None)
    _add_cycle_flags(p)
    p.add_argument("--anneal-sweeps", type=int, default=10)
    p.add_argument("--t-hot", type=float, default=None)
    p.add_argument("--t-cold", type=float, default=None)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--tune-up", type=float, default=0.05)
    p.add_argument("--tune-down", type=float, default=0.05)
    p.add_argument("--no-tuner", action="store_true")
    p.add_argument("--oracle", action="store_true",
                   help="exhaustive ground-state annotation (n <= 20)")
    p.add_argument("--out-log", default=None)
    p.add_argument("--out-summary", default=None)
    return p


def _run_run(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "inst", "budget", "out-log", "out-summary")
    if args.budget < 1:
        parser.error("--budget must be at least 1")
    inst = load_instance(args.inst)
    ground = None
    if args.oracle:
        if inst.n > 20:
            parser.error("--oracle needs n <= 20")
        ground = float(all_energies(inst).min())
    start = SpinConfig.from_index(inst.n, 0)
    auto = args.bz_max <= 0
    tau3 = args.tau3
    if tau3 <= 0:
        seed_ref = _resolve_reference(inst, "anneal", args.seed)
        bz0 = args.bz_max if not auto else default_bz_max(inst, seed_ref.config)
        tau3 = min(suggest_tau3(inst, seed_ref.config, args.chi, bz0),
                   args.tau3_cap)
    cfg = CycleConfig(chi=args.chi, bz_max=args.bz_max if not auto else 1.0,
                      tau1=args.tau1, tau2=args.tau2, tau3=tau3,
                      seed=args.seed, dt_max=args.dt_max)
    tuner = TunerPolicy(patience=args.patience, up=args.tune_up,
                        down=args.tune_down, enabled=not args.no_tuner)
    record = iterate(inst, start, cfg, args.budget, tuner,
                     anneal_sweeps=args.anneal_sweeps, t_hot=args.t_hot,
                     t_cold=args.t_cold, auto_bz_max=auto, ground_energy=ground)
    write_run_log(record, args.out_log)
    doc = run_summary(record)
    doc["meta"] = _meta(args, ground_energy=ground)
    Path(args.out_summary).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return 0


# -- basin / fit / phase ---------------------------------------------------------


def _build_basin(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="crossing-ratio sweep and exponent fit")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--curves", type=int, default=2000)
    p.add_argument("--chis", type=_float_list,
                   default=[3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0])
    p.add_argument("--eps-r-list", type=_float_list, default=[-0.95, -1.05, -1.15])
    p.add_argument("--reps", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bz-hi", type=float, default=4.0)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--eps-gs", type=float, default=None,
                   help="default: expected minimum of the sampled density")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--synthetic", default=None,
                   help="generate the table from the scaling law, e.g. "
                        "gamma=1.2,delta=2.0,chi_c=3.6")
    p.add_argument("--noise", type=float, default=0.0,
                   help="multiplicative noise for --synthetic")
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-fit", default=None)
    return p


def _sweep_one_eps(task) -> list[dict]:
    n, curves, chis, eps_r, reps, bz_hi, grid, seed = task

    def factory(e, s):
        return sample_ensemble(n, curves, seed=s, eps_r=e)

    return ratio_sweep(factory, chis, [eps_r], reps, bz_hi=bz_hi, grid=grid,
                       seed=seed)


def _run_basin(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "out-csv", "out-fit")
    if args.reps < 1:
        parser.error("--reps must be at least 1")
    eps_gs = args.eps_gs if args.eps_gs is not None \
        else default_eps_gs(args.n, args.curves)
    if args.synthetic is not None:
        params = {}
        for part in args.synthetic.split(","):
            key, _, val = part.partition("=")
            params[key.strip()] = float(val)
        missing = {"gamma", "delta", "chi_c"} - set(params)
        if missing:
            parser.error(f"--synthetic missing {sorted(missing)}")
        rows = synthetic_ratio_table(args.chis, args.eps_r_list, params["gamma"],
                                     params["delta"], params["chi_c"], eps_gs,
                                     noise=args.noise, seed=args.seed)
    else:
        tasks = [(args.n, args.curves, args.chis, eps_r, args.reps, args.bz_hi,
                  args.grid, args.seed + 7919 * ie)
                 for ie, eps_r in enumerate(args.eps_r_list)]
        if args.jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
                chunks = list(ex.map(_sweep_one_eps, tasks))
        else:
            chunks = [_sweep_one_eps(t) for t in tasks]
        rows = [r for chunk in chunks for r in chunk]
        rows.sort(key=lambda r: (r["eps_r"], r["chi"]))
    meta = _meta(args, eps_gs=eps_gs)
    write_sweep_csv(rows, args.out_csv, metadata={"version": __version__,
                                                  "meta": json.dumps(meta)})
    try:
        fit = fit_exponents(rows, eps_gs)
    except FitWindowError as exc:
        sys.stderr.write(f"fit window error: {exc} (partial CSV retained)\n")
        return FIT_EXIT
    write_fit_json(fit, args.out_fit, metadata=meta)
    return 0


def _build_fit(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="fit exponents from a sweep CSV")
    p.add_argument("--config")
    p.add_argument("--in", dest="in_path", default=None)
    p.add_argument("--eps-gs", type=float, default=None)
    p.add_argument("--chi-c-max", type=float, default=None)
    p.add_argument("--out", default=None)
    return p


def _run_fit(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "eps-gs", "out")
    if args.in_path is None:
        parser.error("the following arguments are required: --in")
    rows = read_sweep_csv(args.in_path)
    bounds = (0.0, args.chi_c_max) if args.chi_c_max else None
    fit = fit_exponents(rows, args.eps_gs, chi_c_bounds=bounds)
    write_fit_json(fit, args.out, metadata=_meta(args))
    return 0


def _build_phase(prog: str) -> _Parser:
    p = _Parser(prog=prog, description="first-order phase boundary of an ensemble")
    p.add_argument("--config")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--curves", type=int, default=2000)
    p.add_argument("--eps-r", type=float, default=-1.05)
    p.add_argument("--chis", type=_float_list,
                   default=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return p


def _run_phase(args: argparse.Namespace, parser: _Parser) -> int:
    _require(parser, args, "out")
    ens = sample_ensemble(args.n, args.curves, seed=args.seed, eps_r=args.eps_r)
    pts = phase_boundary(ens, args.chis)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(_meta_lines(_meta(args))) + "\n")
        fh.write("chi,bz,bx\n")
        for chi, (bz, bx) in zip(args.chis, pts):
            fh.write(f"{_fmt(chi)},{_fmt(bz)},{_fmt(bx)}\n")
    return 0


# -- dispatch --------------------------------------------------------------------

_COMMANDS = {
    "gen": (_build_gen, _run_gen),
    "spectrum": (_build_spectrum, _run_spectrum),
    "cycle": (_build_cycle, _run_cycle_cmd),
    "run": (_build_run, _run_run),
    "basin": (_build_basin, _run_basin),
    "fit": (_build_fit, _run_fit),
    "phase": (_build_phase, _run_phase),
}


def _apply_config(parser: _Parser, argv: list[str]) -> None:
    """Seed parser defaults from a --config JSON file; explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    pre_args, _ = pre.parse_known_args(argv)
    if not pre_args.config:
        return
    defaults = json.loads(Path(pre_args.config).read_text(encoding="utf-8"))
    known = {a.dest for a in parser._actions}
    unknown = {k for k in defaults if k.replace("-", "_") not in known}
    if unknown:
        parser.error(f"unknown config keys: {sorted(unknown)}")
    parser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    prog = "skcycle"
    if not argv or argv[0] in ("-h", "--help"):
        sys.stdout.write(f"usage: {prog} {{{','.join(_COMMANDS)}}} [flags]\n")
        return 0 if argv else USAGE_EXIT
    name = argv[0]
    if name not in _COMMANDS:
        sys.stderr.write(f"{prog}: unknown command {name!r}; "
                         f"expected one of {sorted(_COMMANDS)}\n")
        return USAGE_EXIT
    build, run = _COMMANDS[name]
    parser = build(f"{prog} {name}")
    try:
        _apply_config(parser, argv[1:])
        args = parser.parse_args(argv[1:])
        return run(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FitWindowError as exc:
        sys.stderr.write(f"{prog}: fit window error: {exc}\n")
        return FIT_EXIT
    except OSError as exc:
        sys.stderr.write(f"{prog}: i/o error: {exc}\n")
        return IO_EXIT
    except (ResourceLimitError, ValueError) as exc:
        sys.stderr.write(f"{prog}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
