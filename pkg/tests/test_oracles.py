"""Self-checks for the dense reference implementations.

The oracles are trusted by the equivalence tests, so they get their own
sanity layer: tiny cases verified by hand and a cross-check of the
matricization/Khatri-Rao pair against direct per-entry evaluation.
"""

import numpy as np

from cpaprkit import SparseTensor

from helpers import random_factors
from oracles import (
    dense_khatri_rao,
    dense_matricize,
    dense_phi,
    dense_reconstruct,
)


def test_matricize_hand_case():
    # 2x3 matrix, mode 0: unfolding is the matrix itself
    t = SparseTensor((2, 3), [[0, 0], [1, 2], [0, 1]], [5.0, 7.0, 2.0])
    x = dense_matricize(t, 0)
    assert x.shape == (2, 3)
    assert x[0, 0] == 5.0 and x[1, 2] == 7.0 and x[0, 1] == 2.0
    assert x.sum() == 14.0


def test_matricize_accumulates_duplicates():
    t = SparseTensor((2, 2), [[1, 1], [1, 1]], [3.0, 4.0])
    x = dense_matricize(t, 0)
    assert x[1, 1] == 7.0


def test_khatri_rao_matches_direct_product():
    rng = np.random.default_rng(7)
    dims = (3, 4, 2)
    rank = 3
    factors = random_factors(rng, dims, rank)
    k = dense_khatri_rao(factors, dims, mode=1)
    # column index for (i0, i2) with mode 1 removed: i0 + i2 * dims[0]
    for i0 in range(dims[0]):
        for i2 in range(dims[2]):
            j = i0 + i2 * dims[0]
            expected = factors[0][i0] * factors[2][i2]
            assert np.allclose(k[j], expected, rtol=0, atol=1e-15)


def test_phi_oracle_single_nonzero_by_hand():
    # x=2 at (0, 1), R=1, B[0]=4, other factor row = 3:
    # s = 4*3 = 12, phi = (2/12)*3 = 0.5
    t = SparseTensor((1, 2), [[0, 1]], [2.0])
    b = np.array([[4.0]])
    factors = [np.array([[9.0]]), np.array([[8.0], [3.0]])]
    phi = dense_phi(t, b, factors, mode=0, epsilon=1e-10)
    assert phi.shape == (1, 1)
    assert abs(phi[0, 0] - 0.5) < 1e-15


def test_reconstruct_rank1_outer_product():
    w = np.array([2.0])
    factors = [np.array([[1.0], [3.0]]), np.array([[4.0], [5.0]])]
    full = dense_reconstruct(w, factors, (2, 2))
    expected = 2.0 * np.outer([1.0, 3.0], [4.0, 5.0])
    assert np.allclose(full, expected, rtol=0, atol=1e-15)
