from __future__ import annotations

import numpy as np
import pytest

from skcycle.instance import SkInstance


def brute_energy(couplings, spins) -> float:
    """Independent double-sum oracle: sum_{i,j} J_ij s_i s_j by explicit loops."""
    n = len(spins)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += couplings[i][j] * spins[i] * spins[j]
    return total


def brute_all_energies(inst: SkInstance) -> np.ndarray:
    """Energies of all 2^n configurations via an independent vectorized route."""
    n = inst.n
    idx = np.arange(1 << n)[:, None]
    spins = 1.0 - 2.0 * ((idx >> np.arange(n)) & 1)
    return ((spins @ inst.couplings) * spins).sum(axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
