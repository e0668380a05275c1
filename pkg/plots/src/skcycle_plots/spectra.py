"""Multi-panel spectra vs bz, one panel per ray slope chi."""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, ray_slope, read_spectrum


def render_spectra(rows: list[dict], *, max_levels: int | None = 40):
    """Figure with one energy-vs-bz panel per chi; lowest track highlighted.

    The lowest level at large bz is the reference state (it is the unique
    ground state past its critical field), so the k = 0 track is drawn red.
    """
    panels: dict[float, dict] = defaultdict(lambda: defaultdict(dict))
    for row in rows:
        chi = round(ray_slope(row), 9)
        panels[chi][int(row["k"])][row["bz"]] = row["eigenvalue"]

    chis = sorted(panels)
    fig, axes = plt.subplots(1, len(chis), figsize=(4.2 * len(chis), 3.6),
                             sharey=True, squeeze=False)
    for ax, chi in zip(axes[0], chis):
        levels = panels[chi]
        ks = sorted(levels)
        if max_levels is not None:
            ks = ks[:max_levels]
        for k in ks:
            bz = np.array(sorted(levels[k]))
            ev = np.array([levels[k][b] for b in bz])
            if k == 0:
                ax.plot(bz, ev, color="crimson", lw=1.6, zorder=3)
            else:
                ax.plot(bz, ev, color="steelblue", lw=0.7, alpha=0.8)
        ax.set_title(f"chi = {chi:g}")
        ax.set_xlabel("bz / J")
    axes[0][0].set_ylabel("energy / J")
    fig.tight_layout()
    return fig


def plot_spectra(csv_path: str, out_path: str, *, fmt: str = "png",
                 max_levels: int | None = 40) -> int:
    """Render a spectrum CSV to an image; returns the number of panels."""
    rows = read_spectrum(csv_path)
    fig = render_spectra(rows, max_levels=max_levels)
    n_panels = len(fig.axes)
    _save(fig, out_path, fmt)
    return n_panels


def _save(fig, out_path: str, fmt: str) -> None:
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(out_path, format=fmt, dpi=150, metadata=metadata)
    plt.close(fig)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="skcycle-plot-spectra",
        description="render spectrum CSV as per-chi panels")
    parser.add_argument("--in", dest="in_path", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--format", choices=("png", "svg"), default="png")
    parser.add_argument("--max-levels", type=int, default=40,
                        help="levels per panel (0 = all)")
    args = parser.parse_args(argv)
    try:
        plot_spectra(args.in_path, args.out, fmt=args.format,
                     max_levels=args.max_levels or None)
    except SchemaError as exc:
        sys.stderr.write(f"schema error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
