"""Shared fixtures: deterministic random clustered samples.

Generators return the raw arrays next to the built dataset so tests can
feed the same rows to the brute-force oracles without round-tripping
through the package containers.  Cluster rows are contiguous, so pooled
order equals row order.
"""

import numpy as np
import pytest

from clustersmooth import from_arrays


def make_case(rng, d_cls=0, g_lo=3, g_hi=8, size_lo=2, size_hi=8):
    """One random clustered sample with smooth signal and noise.

    Returns (ids, y, x, ds): per-row cluster labels, responses, the
    (n, 1 + d_cls) regressor matrix, and the built dataset.
    """
    g = int(rng.integers(g_lo, g_hi + 1))
    sizes = rng.integers(size_lo, size_hi + 1, size=g)
    ids = np.repeat([f"c{i}" for i in range(g)], sizes)
    n = int(sizes.sum())
    x_ind = rng.uniform(-1.0, 1.0, size=n)
    cols = [x_ind]
    if d_cls:
        shared = rng.uniform(-1.0, 1.0, size=g)
        cols.append(np.repeat(shared, sizes))
    x = np.column_stack(cols)
    y = np.sin(2.0 * x_ind) + 0.3 * rng.standard_normal(n)
    if d_cls:
        y = y + 0.5 * x[:, 1]
    return ids, y, x, from_arrays(ids, y, x, d_cls=d_cls)


@pytest.fixture
def rng():
    return np.random.default_rng(20260821)


@pytest.fixture
def anchor_case():
    """The fixed sample behind the frozen expected values in the tests."""
    rng = np.random.default_rng(42)
    g = 5
    sizes = np.array([3, 4, 5, 6, 4])
    ids = np.repeat([f"c{i}" for i in range(g)], sizes)
    n = int(sizes.sum())
    x = rng.uniform(-1.0, 1.0, size=n)
    y = np.sin(2.0 * x) + 0.3 * rng.standard_normal(n)
    return ids, y, x[:, None], from_arrays(ids, y, x)


@pytest.fixture
def toy_clusters():
    """Three clusters of four rows, small enough to pipeline by hand."""
    rng = np.random.default_rng(7)
    ids = np.repeat(["a", "b", "c"], 4)
    x = rng.uniform(-1.0, 1.0, size=12)
    y = 1.0 + 0.8 * x + 0.2 * rng.standard_normal(12)
    return ids, y, x[:, None], from_arrays(ids, y, x)
