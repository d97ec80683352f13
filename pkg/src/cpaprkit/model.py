"""Kruskal-form factor models and the per-nonzero factor product Pi.

A rank-R model of an order-N tensor is a weight vector lambda of length R
plus N factor matrices A(m) of shape (dims[m], R). The model value at a
coordinate is sum_r lambda[r] * prod_m A(m)[c_m, r].
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class KruskalModel:
    """Weights plus one factor matrix per mode.

    Invariants: ``weights`` has shape (rank,), each factor has ``rank``
    columns and ``dims[m]`` rows, and all entries are nonnegative.
    """

    weights: np.ndarray
    factors: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.factors = [np.asarray(f, dtype=np.float64) for f in self.factors]
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        rank = self.weights.shape[0]
        if rank < 1:
            raise ValueError("rank must be >= 1")
        for m, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != rank:
                raise ValueError(
                    f"factor {m} must have {rank} columns, got shape {f.shape}"
                )

    @property
    def rank(self):
        return self.weights.shape[0]

    @property
    def order(self):
        return len(self.factors)

    @property
    def dims(self):
        return tuple(f.shape[0] for f in self.factors)

    def copy(self):
        return KruskalModel(self.weights.copy(), [f.copy() for f in self.factors])

    def normalize(self, mode):
        """Fold all weight into column sums of factor ``mode``.

        Treats the current factor as an unnormalized matrix B: the new
        weights are B's column sums and the factor becomes column-stochastic
        (columns sum to one). Zero columns are left untouched and reported.

        Returns
        -------
        zero_mask : boolean array marking columns whose sum was zero.
        """
        if not 0 <= mode < self.order:
            raise ValueError(f"mode {mode} out of range")
        weights, stochastic, zero_mask = column_normalize(self.factors[mode])
        self.weights = weights
        self.factors[mode] = stochastic
        return zero_mask

    def normalize_all(self):
        """Make every factor column-stochastic, accumulating weight products."""
        for mode in range(self.order):
            lam, stochastic, zero = column_normalize(self.factors[mode])
            lam = np.where(zero, 1.0, lam)
            self.weights = self.weights * lam
            self.factors[mode] = stochastic

    def reconstruct_at(self, coords):
        """Model values at the given (n, N) coordinate rows."""
        coords = np.asarray(coords, dtype=np.int64)
        vals = np.broadcast_to(self.weights, (coords.shape[0], self.rank)).copy()
        for m, factor in enumerate(self.factors):
            vals *= factor[coords[:, m], :]
        return vals.sum(axis=1)


def column_normalize(matrix):
    """Split a nonnegative matrix B into column sums and a stochastic part.

    Returns (weights, stochastic, zero_mask) with B = stochastic @ diag(weights)
    up to the zero columns, which are passed through unchanged and flagged.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    weights = matrix.sum(axis=0)
    zero_mask = weights == 0.0
    stochastic = matrix.copy()
    cols = ~zero_mask
    if cols.any():
        stochastic[:, cols] /= weights[cols]
    return weights, stochastic, zero_mask


def init_model(dims, rank, seed):
    """Random starting model: unit weights, factors uniform on (0, 1].

    The open interval at zero keeps early multiplicative updates away from
    the absorbing zero state; the same seed always yields the same model.
    """
    dims = tuple(int(d) for d in dims)
    rank = int(rank)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if any(d < 1 for d in dims):
        raise ValueError(f"every dimension must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    factors = [1.0 - rng.random((d, rank)) for d in dims]
    return KruskalModel(np.ones(rank), factors)


def compute_pi(model, tensor, mode):
    """Per-nonzero product of all factors except ``mode``.

    Row j of the result is prod_{m != mode} A(m)[coords[j, m], :], the
    nonzero's row of the Khatri-Rao product of the other factors. Shape
    (nnz, rank). This is the gather stage shared by the Phi and MTTKRP
    kernels; it reads only the factor rows touched by stored nonzeros.
    """
    if not 0 <= mode < tensor.order:
        raise ValueError(f"mode {mode} out of range")
    if model.order != tensor.order:
        raise ValueError(
            f"model order {model.order} does not match tensor order {tensor.order}"
        )
    for m, factor in enumerate(model.factors):
        if factor.shape[0] != tensor.dims[m]:
            raise ValueError(
                f"factor {m} has {factor.shape[0]} rows, tensor dim is {tensor.dims[m]}"
            )
    pi = np.ones((tensor.nnz, model.rank))
    for m in range(tensor.order):
        if m == mode:
            continue
        pi *= model.factors[m][tensor.coords[:, m], :]
    return pi


def save_model(model, path):
    """Write a model as plain text (rank, dims, weights, factor rows)."""
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"rank {model.rank}\n")
        out.write("dims " + " ".join(str(d) for d in model.dims) + "\n")
        out.write("lambda " + " ".join(f"{w:.17g}" for w in model.weights) + "\n")
        for m, factor in enumerate(model.factors):
            out.write(f"factor {m} {factor.shape[0]}\n")
            for row in factor:
                out.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as handle:
        tokens = []
        for raw in handle:
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            tokens.append(text.split())
    pos = 0

    def expect(tag):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos][0] != tag:
            raise ValueError(f"model file: expected {tag!r} line")
        line = tokens[pos]
        pos += 1
        return line

    rank = int(expect("rank")[1])
    dims = [int(t) for t in expect("dims")[1:]]
    weights = np.array([float(t) for t in expect("lambda")[1:]])
    if weights.shape != (rank,):
        raise ValueError("model file: lambda length does not match rank")
    factors = []
    for m, d in enumerate(dims):
        head = expect("factor")
        if int(head[1]) != m or int(head[2]) != d:
            raise ValueError(f"model file: bad factor header {head}")
        rows = []
        for _ in range(d):
            rows.append([float(t) for t in tokens[pos]])
            pos += 1
        factor = np.array(rows)
        if factor.shape != (d, rank):
            raise ValueError(f"model file: factor {m} shape {factor.shape}")
        factors.append(factor)
    return KruskalModel(weights, factors)
