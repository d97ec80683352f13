"""Shared test utilities: random instances and error measures."""

import numpy as np

from cpaprkit import SparseTensor


def rel_err(actual, expected):
    """Max absolute difference scaled by max(1, |expected|_inf)."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(1.0, float(np.abs(expected).max()) if expected.size else 0.0)
    return float(np.abs(actual - expected).max()) / scale


def random_instance(rng, nmodes=None, dmax=8, nnzmax=200):
    """Random small count tensor; duplicates possible by construction."""
    n = int(rng.integers(2, 5)) if nmodes is None else nmodes
    dims = tuple(int(rng.integers(1, dmax + 1)) for _ in range(n))
    nnz = int(rng.integers(1, nnzmax + 1))
    coords = np.column_stack([rng.integers(0, d, size=nnz) for d in dims])
    values = (rng.poisson(2.0, size=nnz) + 1).astype(np.float64)
    return SparseTensor(dims, coords, values)


def random_factors(rng, dims, rank):
    return [1.0 - rng.random((d, rank)) for d in dims]
