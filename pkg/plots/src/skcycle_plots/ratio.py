"""Crossing-count ratio vs chi/chi_c with a log-log scaling inset."""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_fit, read_sweep


def render_ratio(rows: list[dict], fit: dict | None = None):
    """Figure plus the inset's log-space residual RMS (None without a fit).

    Main axes: ratio vs chi/chi_c per reference energy.  With a fit, an
    inset shows (eps_r - eps_gs)^delta * ratio against chi - chi_c in
    log-log scale with the fitted line.
    """
    series: dict[float, list] = defaultdict(list)
    for row in rows:
        if np.isfinite(row["ratio"]):
            series[row["eps_r"]].append(row)

    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    chi_scale = fit["chi_c"] if fit else 1.0
    xlabel = "chi / chi_c" if fit else "chi"
    for eps_r in sorted(series, reverse=True):
        pts = sorted(series[eps_r], key=lambda r: r["chi"])
        x = np.array([p["chi"] for p in pts]) / chi_scale
        y = np.array([p["ratio"] for p in pts])
        err = np.array([p["stderr"] for p in pts])
        ax.errorbar(x, y, yerr=np.where(np.isfinite(err), err, 0.0),
                    marker="o", ms=3.5, lw=1.0, capsize=2,
                    label=f"eps_r = {eps_r:g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("N_above / N_below")
    if len(series) > 1:
        ax.legend(frameon=False, fontsize=8)

    residual_rms = None
    if fit:
        inset = ax.inset_axes([0.12, 0.52, 0.42, 0.42])
        xs, ys = [], []
        for eps_r, pts in series.items():
            for p in pts:
                dx = p["chi"] - fit["chi_c"]
                if dx <= 0 or p["ratio"] <= 0:
                    continue
                xs.append(dx)
                ys.append(p["ratio"] * (eps_r - fit["eps_gs"]) ** fit["delta"])
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        inset.loglog(xs, ys, "o", ms=2.5, color="black")
        span = np.geomspace(xs.min(), xs.max(), 64)
        line = np.exp(fit["const"]) * span ** fit["gamma"]
        inset.loglog(span, line, "-", color="crimson", lw=1.2)
        inset.set_xlabel("chi - chi_c", fontsize=7)
        inset.set_ylabel("rescaled ratio", fontsize=7)
        inset.tick_params(labelsize=6)
        model = fit["const"] + fit["gamma"] * np.log(xs)
        residual_rms = float(np.sqrt(np.mean((np.log(ys) - model) ** 2)))

    fig.tight_layout()
    return fig, residual_rms


def plot_ratio(csv_path: str, out_path: str, fit_path: str | None = None, *,
               fmt: str = "png") -> float | None:
    """Render a sweep CSV (plus optional fit JSON); returns the inset RMS."""
    rows = read_sweep(csv_path)
    fit = read_fit(fit_path) if fit_path else None
    fig, residual_rms = render_ratio(rows, fit)
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(out_path, format=fmt, dpi=150, metadata=metadata)
    plt.close(fig)
    return residual_rms


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="skcycle-plot-ratio",
        description="render a sweep CSV (and optional fit JSON) as Fig-4-style axes")
    parser.add_argument("--in", dest="in_path", required=True)
    parser.add_argument("--fit", default=None)
    parser.add_argument("--out", required=True)
    parser.add_argument("--format", choices=("png", "svg"), default="png")
    args = parser.parse_args(argv)
    fit_path = args.fit
    if fit_path and not _exists(fit_path):
        sys.stderr.write(f"warning: fit file {fit_path} missing; "
                         "rendering main axes only\n")
        fit_path = None
    try:
        rms = plot_ratio(args.in_path, args.out, fit_path, fmt=args.format)
    except SchemaError as exc:
        sys.stderr.write(f"schema error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2
    if rms is not None:
        print(f"inset residual rms (log space): {rms:.4f}")
    return 0


def _exists(path: str) -> bool:
    from pathlib import Path
    return Path(path).is_file()


if __name__ == "__main__":
    raise SystemExit(main())
