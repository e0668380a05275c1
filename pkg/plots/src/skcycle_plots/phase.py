"""Phase boundary in the (bz, bx) plane with an optional cycle-path overlay."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_phase


def render_phase(rows: list[dict], *, chi: float | None = None,
                 bz_max: float | None = None, extra_warnings: list[str] = ()):
    """Figure plus warnings: boundary line (B_c(chi), chi * B_c(chi)) and the
    cycle rectangle-with-ray for a given (chi, bz_max).

    Rows violating bx = chi * bz get a validation warning annotated on the
    plot; an empty boundary still renders axes with a warning.
    """
    warnings = list(extra_warnings)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    if rows:
        bad = [r for r in rows
               if abs(r["bx"] - r["chi"] * r["bz"]) > 1e-9 * (1 + abs(r["bx"]))]
        if bad:
            warnings.append(f"{len(bad)} rows violate bx = chi * bz")
        bzs = np.array([r["bz"] for r in rows])
        bxs = np.array([r["bx"] for r in rows])
        ax.plot(bzs, bxs, "--", color="crimson", lw=1.6,
                label="first-order boundary")
        ax.plot(bzs, bxs, "o", color="crimson", ms=3)

    if chi is not None and bz_max is not None:
        path_bz = [0.0, bz_max, bz_max, 0.0]
        path_bx = [0.0, 0.0, chi * bz_max, 0.0]
        ax.plot(path_bz, path_bx, "-", color="royalblue", lw=1.4,
                label=f"cycle (chi = {chi:g})")
        ax.annotate("", xy=(bz_max, 0.0), xytext=(bz_max * 0.45, 0.0),
                    arrowprops=dict(arrowstyle="->", color="royalblue"))
        ax.annotate("", xy=(bz_max * 0.45, chi * bz_max * 0.45),
                    xytext=(bz_max * 0.55, chi * bz_max * 0.55),
                    arrowprops=dict(arrowstyle="->", color="royalblue"))

    for i, text in enumerate(warnings):
        ax.text(0.02, 0.97 - 0.06 * i, f"warning: {text}",
                transform=ax.transAxes, fontsize=8, color="darkorange",
                va="top")
        sys.stderr.write(f"warning: {text}\n")

    ax.set_xlabel("bz / J")
    ax.set_ylabel("bx / J")
    if rows or (chi is not None and bz_max is not None):
        ax.legend(frameon=False, fontsize=8, loc="upper right")
    fig.tight_layout()
    return fig, warnings


def plot_phase(csv_path: str, out_path: str, *, chi: float | None = None,
               bz_max: float | None = None, fmt: str = "png") -> list[str]:
    """Render a phase CSV; returns the warnings that were annotated."""
    extra = []
    try:
        rows = read_phase(csv_path)
    except SchemaError as exc:
        if "no data rows" in str(exc):
            rows = []
            extra.append("empty boundary input")
        else:
            raise
    fig, warnings = render_phase(rows, chi=chi, bz_max=bz_max,
                                 extra_warnings=extra)
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(out_path, format=fmt, dpi=150, metadata=metadata)
    plt.close(fig)
    return warnings


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="skcycle-plot-phase",
        description="render a phase-boundary CSV with an optional cycle overlay")
    parser.add_argument("--in", dest="in_path", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--chi", type=float, default=None)
    parser.add_argument("--bz-max", type=float, default=None)
    parser.add_argument("--format", choices=("png", "svg"), default="png")
    args = parser.parse_args(argv)
    try:
        plot_phase(args.in_path, args.out, chi=args.chi, bz_max=args.bz_max,
                   fmt=args.format)
    except SchemaError as exc:
        sys.stderr.write(f"schema error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
