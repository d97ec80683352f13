"""Instruction-count models of the Phi kernels.

These walkers replay a schedule in pure Python and count work items and
arithmetic, without touching floating-point data. They exist to check two
properties of the perturbed kernel variants: every variant visits exactly
the same nonzeros, and row-pinning leaves the per-nonzero FLOP count
unchanged (4R + 2 for the scatter strategy: R multiplies and R adds for
the inner product, one divide, one clamp, then R multiplies and R adds to
accumulate).
"""

from dataclasses import dataclass

from ..policy import default_policy, map_policy_to_kernel
from . import Perturbation


@dataclass(frozen=True)
class KernelCounts:
    """Work accounting for one Phi launch."""

    nonzeros: int
    arithmetic_flops: int
    flush_adds: int
    serialized_flushes: int
    direct_flushes: int
    tiles: int

    @property
    def flops_per_nonzero(self):
        if self.nonzeros == 0:
            return 0.0
        return self.arithmetic_flops / self.nonzeros


def count_phi(
    tensor,
    mode,
    rank,
    strategy,
    policy=None,
    perturbation=Perturbation.NONE,
    worker_budget=None,
):
    """Count work for one Phi launch without executing it."""
    if policy is None:
        policy = default_policy()
    schedule = map_policy_to_kernel(policy, strategy, tensor.nnz, worker_budget)
    per_nonzero = 4 * rank + 2
    if schedule.kind == "atomic":
        nnz = tensor.nnz
        return KernelCounts(
            nonzeros=nnz,
            arithmetic_flops=per_nonzero * nnz,
            flush_adds=0,
            serialized_flushes=0,
            direct_flushes=0,
            tiles=schedule.n_tiles,
        )
    perm, _, _ = tensor.ordering(mode)
    rows = tensor.mode_coords(mode)
    nnz = tensor.nnz
    serialized = 0
    direct = 0
    for c in range(schedule.n_tiles):
        z0, z1 = schedule.tile_bounds(c)
        cur = rows[perm[z0]]
        started_inside = z0 == 0 or rows[perm[z0 - 1]] != cur
        for z in range(z0, z1):
            i = rows[perm[z]]
            if i != cur:
                if started_inside:
                    direct += 1
                else:
                    serialized += 1
                cur = i
                started_inside = True
        ends_inside = z1 == nnz or rows[perm[z1]] != cur
        if started_inside and ends_inside:
            direct += 1
        else:
            serialized += 1
    if perturbation.removes_serialization:
        direct += serialized
        serialized = 0
    flushes = serialized + direct
    return KernelCounts(
        nonzeros=nnz,
        arithmetic_flops=per_nonzero * nnz,
        flush_adds=rank * flushes,
        serialized_flushes=serialized,
        direct_flushes=direct,
        tiles=schedule.n_tiles,
    )
