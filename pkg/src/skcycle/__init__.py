"""Iterative cyclic-field quantum optimization on SK spin glasses.

Subpackages cover the classical instance layer (`instance`, `classical`),
exact state-vector quantum machinery (`quantum`), the four-step field cycle
(`protocol`), and the statistical isolated-minima model with crossing
counting and exponent fits (`basins`).
"""

__version__ = "0.1.0"
