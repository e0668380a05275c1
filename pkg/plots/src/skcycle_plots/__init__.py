"""Batch figure scripts for skcycle output files.

Pure readers: each script consumes the CSV/JSON artifacts written by the
skcycle CLI and renders a figure; inputs are never modified and identical
inputs produce identical images.
"""

__version__ = "0.1.0"
