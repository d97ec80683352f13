"""Pure-numpy fallback kernels.

Each kernel is a single deterministic vectorized pass, so this backend is
also the reference for sequential execution order: the atomic strategy
accumulates in raw storage order (np.add.at), the chunked strategy in
permuted order (np.add.reduceat over row segments). Write serialization
does not exist here, which is why the no-atomics perturbation is a no-op
in this backend; the dispatcher still marks such results perturbed.
"""

import numpy as np


def _fixed_indices(schedule, n_items, n_rows, positions):
    worker = (positions // schedule.width) % schedule.workers
    return worker % n_rows, worker % n_items


def phi(tensor, B, pi, mode, epsilon, schedule, no_atomics, fixed_row):
    rows = tensor.mode_coords(mode)
    vals = tensor.values
    In, R = B.shape
    out = np.zeros((In, R))
    nnz = tensor.nnz
    if nnz == 0:
        return out
    if schedule.kind == "atomic":
        if fixed_row:
            brow, prow = _fixed_indices(schedule, nnz, In, np.arange(nnz))
            s = np.einsum("jr,jr->j", B[brow], pi[prow])
            w = vals / np.maximum(s, epsilon)
            np.add.at(out, brow, w[:, np.newaxis] * pi[prow])
        else:
            s = np.einsum("jr,jr->j", B[rows], pi)
            w = vals / np.maximum(s, epsilon)
            np.add.at(out, rows, w[:, np.newaxis] * pi)
        return out
    perm, starts, seg_rows = tensor.ordering(mode)
    if fixed_row:
        # per-chunk pinned rows over the permuted order; the flush pattern
        # degenerates to per-element scatter, which is fine for a fallback
        brow, prow = _fixed_indices(schedule, nnz, In, np.arange(nnz))
        s = np.einsum("jr,jr->j", B[brow], pi[prow])
        w = vals[perm] / np.maximum(s, epsilon)
        np.add.at(out, brow, w[:, np.newaxis] * pi[prow])
        return out
    s = np.einsum("jr,jr->j", B[rows], pi)
    w = vals / np.maximum(s, epsilon)
    contrib = (w[:, np.newaxis] * pi)[perm]
    out[seg_rows] = np.add.reduceat(contrib, starts, axis=0)
    return out


def mttkrp(tensor, factors, mode, schedule):
    rows = tensor.mode_coords(mode)
    R = factors[0].shape[1]
    In = tensor.dims[mode]
    out = np.zeros((In, R))
    nnz = tensor.nnz
    if nnz == 0:
        return out
    contrib = np.broadcast_to(
        tensor.values[:, np.newaxis], (nnz, R)
    ).copy()
    for m in range(tensor.order):
        if m != mode:
            contrib *= factors[m][tensor.coords[:, m], :]
    if schedule.kind == "atomic":
        np.add.at(out, rows, contrib)
        return out
    perm, starts, seg_rows = tensor.ordering(mode)
    out[seg_rows] = np.add.reduceat(contrib[perm], starts, axis=0)
    return out


def stream_table():
    def copy(a, b, c, s):
        a[:] = b

    def scale(a, b, c, s):
        np.multiply(b, s, out=a)

    def add(a, b, c, s):
        np.add(b, c, out=a)

    def triad(a, b, c, s):
        # two passes through a; the reported bytes model stays the nominal
        # one, so fallback triad bandwidth reads lower than the JIT backend
        np.multiply(c, s, out=a)
        a += b

    return {"copy": copy, "scale": scale, "add": add, "triad": triad}
