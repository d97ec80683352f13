"""Parallel JIT kernels. This is the measurement backend.

Every kernel follows the same concurrency scheme: physical slot p of C
processes tiles (or chunks) p, p + C, p + 2C, ... so the work partition is
a pure function of the schedule. Cross-row accumulation goes through
per-slot buffers (atomic strategy) or per-chunk edge slots (chunked
strategy) that are reduced in slot/chunk order afterwards, which makes the
results bitwise reproducible run-to-run at any thread count.

Perturbed variants are separate compiled functions: the hot loops carry no
perturbation branches. The ``_direct`` variants drop write serialization
(racy under real concurrency, for timing only) and the ``_fixed`` variants
pin matrix rows to one row per logical worker while keeping the
instruction mix.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def _phi_atomic_buffered(bufs, rows, vals, B, pi, eps, V, C):
    nnz = rows.shape[0]
    R = pi.shape[1]
    ntiles = (nnz + V - 1) // V
    for p in prange(C):
        buf = bufs[p]
        for t in range(p, ntiles, C):
            j0 = t * V
            j1 = min(j0 + V, nnz)
            for j in range(j0, j1):
                i = rows[j]
                s = 0.0
                for r in range(R):
                    s += B[i, r] * pi[j, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    buf[i, r] += w * pi[j, r]


@njit(parallel=True, cache=True)
def _phi_atomic_direct(out, rows, vals, B, pi, eps, V, C):
    nnz = rows.shape[0]
    R = pi.shape[1]
    ntiles = (nnz + V - 1) // V
    for p in prange(C):
        for t in range(p, ntiles, C):
            j0 = t * V
            j1 = min(j0 + V, nnz)
            for j in range(j0, j1):
                i = rows[j]
                s = 0.0
                for r in range(R):
                    s += B[i, r] * pi[j, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    out[i, r] += w * pi[j, r]


@njit(parallel=True, cache=True)
def _phi_atomic_buffered_fixed(bufs, rows, vals, B, pi, eps, V, W, C):
    nnz = rows.shape[0]
    In = B.shape[0]
    R = pi.shape[1]
    ntiles = (nnz + V - 1) // V
    for p in prange(C):
        buf = bufs[p]
        for t in range(p, ntiles, C):
            ifix = (t % W) % In
            jfix = (t % W) % nnz
            j0 = t * V
            j1 = min(j0 + V, nnz)
            for j in range(j0, j1):
                s = 0.0
                for r in range(R):
                    s += B[ifix, r] * pi[jfix, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    buf[ifix, r] += w * pi[jfix, r]


@njit(parallel=True, cache=True)
def _phi_atomic_direct_fixed(out, rows, vals, B, pi, eps, V, W, C):
    nnz = rows.shape[0]
    In = B.shape[0]
    R = pi.shape[1]
    ntiles = (nnz + V - 1) // V
    for p in prange(C):
        for t in range(p, ntiles, C):
            ifix = (t % W) % In
            jfix = (t % W) % nnz
            j0 = t * V
            j1 = min(j0 + V, nnz)
            for j in range(j0, j1):
                s = 0.0
                for r in range(R):
                    s += B[ifix, r] * pi[jfix, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    out[ifix, r] += w * pi[jfix, r]


@njit(parallel=True, cache=True)
def _reduce_buffers(out, bufs):
    C = bufs.shape[0]
    In = bufs.shape[1]
    R = bufs.shape[2]
    for i in prange(In):
        for p in range(C):
            for r in range(R):
                out[i, r] += bufs[p, i, r]


@njit(parallel=True, cache=True)
def _phi_chunked_edges(out, edge_rows, edge_vals, tmps, rows, vals, perm, B, pi, eps, V, C):
    nnz = perm.shape[0]
    R = pi.shape[1]
    nchunks = (nnz + V - 1) // V
    for p in prange(C):
        tmp = tmps[p]
        for c in range(p, nchunks, C):
            z0 = c * V
            z1 = min(z0 + V, nnz)
            cur = rows[perm[z0]]
            started_inside = z0 == 0 or rows[perm[z0 - 1]] != cur
            for r in range(R):
                tmp[r] = 0.0
            slot = 0
            for z in range(z0, z1):
                j = perm[z]
                i = rows[j]
                if i != cur:
                    if started_inside:
                        for r in range(R):
                            out[cur, r] += tmp[r]
                    else:
                        edge_rows[c, slot] = cur
                        for r in range(R):
                            edge_vals[c, slot, r] = tmp[r]
                        slot += 1
                    for r in range(R):
                        tmp[r] = 0.0
                    cur = i
                    started_inside = True
                s = 0.0
                for r in range(R):
                    s += B[i, r] * pi[j, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    tmp[r] += w * pi[j, r]
            ends_inside = z1 == nnz or rows[perm[z1]] != cur
            if started_inside and ends_inside:
                for r in range(R):
                    out[cur, r] += tmp[r]
            else:
                edge_rows[c, slot] = cur
                for r in range(R):
                    edge_vals[c, slot, r] = tmp[r]


@njit(parallel=True, cache=True)
def _phi_chunked_direct(out, tmps, rows, vals, perm, B, pi, eps, V, C):
    nnz = perm.shape[0]
    R = pi.shape[1]
    nchunks = (nnz + V - 1) // V
    for p in prange(C):
        tmp = tmps[p]
        for c in range(p, nchunks, C):
            z0 = c * V
            z1 = min(z0 + V, nnz)
            cur = rows[perm[z0]]
            for r in range(R):
                tmp[r] = 0.0
            for z in range(z0, z1):
                j = perm[z]
                i = rows[j]
                if i != cur:
                    for r in range(R):
                        out[cur, r] += tmp[r]
                    for r in range(R):
                        tmp[r] = 0.0
                    cur = i
                s = 0.0
                for r in range(R):
                    s += B[i, r] * pi[j, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    tmp[r] += w * pi[j, r]
            for r in range(R):
                out[cur, r] += tmp[r]


@njit(parallel=True, cache=True)
def _phi_chunked_edges_fixed(out, edge_rows, edge_vals, tmps, rows, vals, perm, B, pi, eps, V, W, C):
    nnz = perm.shape[0]
    In = B.shape[0]
    R = pi.shape[1]
    nchunks = (nnz + V - 1) // V
    for p in prange(C):
        tmp = tmps[p]
        for c in range(p, nchunks, C):
            ifix = (c % W) % In
            jfix = (c % W) % nnz
            z0 = c * V
            z1 = min(z0 + V, nnz)
            cur = rows[perm[z0]]
            started_inside = z0 == 0 or rows[perm[z0 - 1]] != cur
            for r in range(R):
                tmp[r] = 0.0
            slot = 0
            for z in range(z0, z1):
                j = perm[z]
                i = rows[j]
                if i != cur:
                    if started_inside:
                        for r in range(R):
                            out[ifix, r] += tmp[r]
                    else:
                        edge_rows[c, slot] = ifix
                        for r in range(R):
                            edge_vals[c, slot, r] = tmp[r]
                        slot += 1
                    for r in range(R):
                        tmp[r] = 0.0
                    cur = i
                    started_inside = True
                s = 0.0
                for r in range(R):
                    s += B[ifix, r] * pi[jfix, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    tmp[r] += w * pi[jfix, r]
            ends_inside = z1 == nnz or rows[perm[z1]] != cur
            if started_inside and ends_inside:
                for r in range(R):
                    out[ifix, r] += tmp[r]
            else:
                edge_rows[c, slot] = ifix
                for r in range(R):
                    edge_vals[c, slot, r] = tmp[r]


@njit(parallel=True, cache=True)
def _phi_chunked_direct_fixed(out, tmps, rows, vals, perm, B, pi, eps, V, W, C):
    nnz = perm.shape[0]
    In = B.shape[0]
    R = pi.shape[1]
    nchunks = (nnz + V - 1) // V
    for p in prange(C):
        tmp = tmps[p]
        for c in range(p, nchunks, C):
            ifix = (c % W) % In
            jfix = (c % W) % nnz
            z0 = c * V
            z1 = min(z0 + V, nnz)
            cur = rows[perm[z0]]
            for r in range(R):
                tmp[r] = 0.0
            for z in range(z0, z1):
                j = perm[z]
                i = rows[j]
                if i != cur:
                    for r in range(R):
                        out[ifix, r] += tmp[r]
                    for r in range(R):
                        tmp[r] = 0.0
                    cur = i
                s = 0.0
                for r in range(R):
                    s += B[ifix, r] * pi[jfix, r]
                w = vals[j] / max(s, eps)
                for r in range(R):
                    tmp[r] += w * pi[jfix, r]
            for r in range(R):
                out[ifix, r] += tmp[r]


@njit(cache=True)
def _merge_edges(out, edge_rows, edge_vals):
    nchunks = edge_rows.shape[0]
    R = edge_vals.shape[2]
    for c in range(nchunks):
        for slot in range(2):
            i = edge_rows[c, slot]
            if i >= 0:
                for r in range(R):
                    out[i, r] += edge_vals[c, slot, r]


@njit(parallel=True, cache=True)
def _mttkrp_atomic(bufs, tprods, coords, vals, fstack, offsets, mode, V, C):
    nnz = coords.shape[0]
    N = coords.shape[1]
    R = fstack.shape[1]
    ntiles = (nnz + V - 1) // V
    for p in prange(C):
        buf = bufs[p]
        tprod = tprods[p]
        for t in range(p, ntiles, C):
            j0 = t * V
            j1 = min(j0 + V, nnz)
            for j in range(j0, j1):
                for r in range(R):
                    tprod[r] = vals[j]
                for m in range(N):
                    if m != mode:
                        base = offsets[m] + coords[j, m]
                        for r in range(R):
                            tprod[r] *= fstack[base, r]
                i = coords[j, mode]
                for r in range(R):
                    buf[i, r] += tprod[r]


@njit(parallel=True, cache=True)
def _mttkrp_chunked(out, edge_rows, edge_vals, tprods, accs, coords, vals, perm, fstack, offsets, mode, V, C):
    nnz = coords.shape[0]
    N = coords.shape[1]
    R = fstack.shape[1]
    nchunks = (nnz + V - 1) // V
    for p in prange(C):
        tprod = tprods[p]
        acc = accs[p]
        for c in range(p, nchunks, C):
            z0 = c * V
            z1 = min(z0 + V, nnz)
            cur = coords[perm[z0], mode]
            started_inside = z0 == 0 or coords[perm[z0 - 1], mode] != cur
            for r in range(R):
                acc[r] = 0.0
            slot = 0
            for z in range(z0, z1):
                j = perm[z]
                i = coords[j, mode]
                if i != cur:
                    if started_inside:
                        for r in range(R):
                            out[cur, r] += acc[r]
                    else:
                        edge_rows[c, slot] = cur
                        for r in range(R):
                            edge_vals[c, slot, r] = acc[r]
                        slot += 1
                    for r in range(R):
                        acc[r] = 0.0
                    cur = i
                    started_inside = True
                for r in range(R):
                    tprod[r] = vals[j]
                for m in range(N):
                    if m != mode:
                        base = offsets[m] + coords[j, m]
                        for r in range(R):
                            tprod[r] *= fstack[base, r]
                for r in range(R):
                    acc[r] += tprod[r]
            ends_inside = z1 == nnz or coords[perm[z1], mode] != cur
            if started_inside and ends_inside:
                for r in range(R):
                    out[cur, r] += acc[r]
            else:
                edge_rows[c, slot] = cur
                for r in range(R):
                    edge_vals[c, slot, r] = acc[r]


@njit(parallel=True, cache=True)
def _stream_copy(a, b):
    for i in prange(a.shape[0]):
        a[i] = b[i]


@njit(parallel=True, cache=True)
def _stream_scale(a, b, s):
    for i in prange(a.shape[0]):
        a[i] = s * b[i]


@njit(parallel=True, cache=True)
def _stream_add(a, b, c):
    for i in prange(a.shape[0]):
        a[i] = b[i] + c[i]


@njit(parallel=True, cache=True)
def _stream_triad(a, b, c, s):
    for i in prange(a.shape[0]):
        a[i] = b[i] + s * c[i]


def phi(tensor, B, pi, mode, epsilon, schedule, no_atomics, fixed_row):
    rows = tensor.mode_coords(mode)
    vals = tensor.values
    In, R = B.shape
    out = np.zeros((In, R))
    if tensor.nnz == 0:
        return out
    V = int(schedule.width)
    W = int(schedule.workers)
    C = int(schedule.concurrency)
    if schedule.kind == "atomic":
        if no_atomics:
            if fixed_row:
                _phi_atomic_direct_fixed(out, rows, vals, B, pi, epsilon, V, W, C)
            else:
                _phi_atomic_direct(out, rows, vals, B, pi, epsilon, V, C)
        else:
            bufs = np.zeros((C, In, R))
            if fixed_row:
                _phi_atomic_buffered_fixed(bufs, rows, vals, B, pi, epsilon, V, W, C)
            else:
                _phi_atomic_buffered(bufs, rows, vals, B, pi, epsilon, V, C)
            _reduce_buffers(out, bufs)
        return out
    perm, _, _ = tensor.ordering(mode)
    tmps = np.zeros((C, R))
    if no_atomics:
        if fixed_row:
            _phi_chunked_direct_fixed(out, tmps, rows, vals, perm, B, pi, epsilon, V, W, C)
        else:
            _phi_chunked_direct(out, tmps, rows, vals, perm, B, pi, epsilon, V, C)
        return out
    nchunks = schedule.n_tiles
    edge_rows = np.full((nchunks, 2), -1, dtype=np.int64)
    edge_vals = np.zeros((nchunks, 2, R))
    if fixed_row:
        _phi_chunked_edges_fixed(
            out, edge_rows, edge_vals, tmps, rows, vals, perm, B, pi, epsilon, V, W, C
        )
    else:
        _phi_chunked_edges(
            out, edge_rows, edge_vals, tmps, rows, vals, perm, B, pi, epsilon, V, C
        )
    _merge_edges(out, edge_rows, edge_vals)
    return out


def mttkrp(tensor, factors, mode, schedule):
    R = factors[0].shape[1]
    In = tensor.dims[mode]
    out = np.zeros((In, R))
    if tensor.nnz == 0:
        return out
    fstack = np.vstack(factors)
    offsets = np.zeros(tensor.order, dtype=np.int64)
    total = 0
    for m in range(tensor.order):
        offsets[m] = total
        total += tensor.dims[m]
    V = int(schedule.width)
    C = int(schedule.concurrency)
    coords = tensor.coords
    vals = tensor.values
    tprods = np.zeros((C, R))
    if schedule.kind == "atomic":
        bufs = np.zeros((C, In, R))
        _mttkrp_atomic(bufs, tprods, coords, vals, fstack, offsets, mode, V, C)
        _reduce_buffers(out, bufs)
        return out
    perm, _, _ = tensor.ordering(mode)
    accs = np.zeros((C, R))
    nchunks = schedule.n_tiles
    edge_rows = np.full((nchunks, 2), -1, dtype=np.int64)
    edge_vals = np.zeros((nchunks, 2, R))
    _mttkrp_chunked(
        out, edge_rows, edge_vals, tprods, accs, coords, vals, perm,
        fstack, offsets, mode, V, C,
    )
    _merge_edges(out, edge_rows, edge_vals)
    return out


def stream_table():
    return {
        "copy": lambda a, b, c, s: _stream_copy(a, b),
        "scale": lambda a, b, c, s: _stream_scale(a, b, s),
        "add": lambda a, b, c, s: _stream_add(a, b, c),
        "triad": lambda a, b, c, s: _stream_triad(a, b, c, s),
    }


def warm(rank=2):
    """Compile every kernel on tiny inputs so timings exclude JIT cost."""
    from ..policy import KernelSchedule
    from ..tensor import SparseTensor

    tiny = SparseTensor(
        (2, 2), np.array([[0, 0], [1, 1], [1, 0]]), np.array([1.0, 2.0, 1.0])
    )
    B = np.ones((2, rank))
    piv = np.ones((3, rank))
    factors = [np.ones((2, rank)), np.ones((2, rank))]
    for kind in ("atomic", "chunked"):
        sched = KernelSchedule(kind=kind, n_items=3, width=2, workers=1, concurrency=1)
        for no_atomics in (False, True):
            for fixed_row in (False, True):
                phi(tiny, B, piv, 0, 1e-10, sched, no_atomics, fixed_row)
        mttkrp(tiny, factors, 0, sched)
    a = np.zeros(8)
    b = np.full(8, 2.0)
    c = np.ones(8)
    for fn in stream_table().values():
        fn(a, b, c, 3.0)
