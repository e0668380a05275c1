"""Readers for the skcycle file formats.

CSV files carry '#'-prefixed metadata lines, then a header row, then data.
Readers validate the header exactly and report the mismatch in the error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


class SchemaError(ValueError):
    """Input file does not match the expected column layout."""


SPECTRUM_COLUMNS = ["bz", "bx", "k", "eigenvalue"]
SWEEP_COLUMNS = ["chi", "eps_r", "n_above", "n_below", "ratio", "stderr", "seed"]
PHASE_COLUMNS = ["chi", "bz", "bx"]


def read_table(path: str | Path, expected_columns: list[str]) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [line for line in lines if line and not line.startswith("#")]
    if not body:
        raise SchemaError(f"{path}: empty file, expected columns {expected_columns}")
    reader = csv.reader(body)
    header = next(reader)
    if header != expected_columns:
        raise SchemaError(f"{path}: columns {header} != expected {expected_columns}")
    rows = []
    for rec in reader:
        if len(rec) != len(expected_columns):
            raise SchemaError(f"{path}: row width {len(rec)} != "
                              f"{len(expected_columns)}")
        rows.append({col: float(val) for col, val in zip(expected_columns, rec)})
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_spectrum(path: str | Path) -> list[dict]:
    return read_table(path, SPECTRUM_COLUMNS)


def read_sweep(path: str | Path) -> list[dict]:
    return read_table(path, SWEEP_COLUMNS)


def read_phase(path: str | Path) -> list[dict]:
    return read_table(path, PHASE_COLUMNS)


def read_fit(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = {"gamma", "delta", "chi_c", "eps_gs", "const"} - set(doc)
    if missing:
        raise SchemaError(f"{path}: fit file missing fields {sorted(missing)}")
    return doc


def ray_slope(row: dict) -> float:
    """chi of a spectrum row; bz = 0 only occurs on the chi = 0 ray."""
    if row["bz"] == 0.0:
        return 0.0
    return row["bx"] / row["bz"]
