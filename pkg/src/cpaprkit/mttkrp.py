"""Sparse MTTKRP benchmark: the bandwidth-bound core of tensor methods.

For mode n, out[i, :] accumulates x_j times the elementwise product of the
other factors' rows at each nonzero with coords[j, n] == i. The kernel is
the same gather/scatter loop as Phi minus the divide, so both accumulation
strategies and all execution policies apply unchanged.
"""

import time
from dataclasses import dataclass, field

from .kernels import ATOMIC_PER_NONZERO, CHUNKED_SORTED, mttkrp_kernel
from .model import init_model


def mttkrp(tensor, factors, mode, strategy=CHUNKED_SORTED, policy=None, backend=None,
           worker_budget=None):
    """Matricized tensor times Khatri-Rao product; shape (dims[mode], R)."""
    return mttkrp_kernel(
        tensor, factors, mode,
        strategy=strategy, policy=policy, backend=backend,
        worker_budget=worker_budget,
    )


def mttkrp_bytes(tensor, rank):
    """Nominal traffic of one launch: per nonzero, read the 8-byte value,
    read (N - 1) factor rows of R doubles, and read-plus-write the R-double
    output row."""
    return tensor.nnz * (8 + (tensor.order - 1) * rank * 8 + rank * 16)


@dataclass
class MttkrpBenchResult:
    """Effective bandwidth of the mode-``mode`` MTTKRP at one rank."""

    mode: int
    rank: int
    nnz: int
    reps: int
    bytes_per_pass: int
    strategy: str
    seconds: list = field(default_factory=list)
    best_gbs: float = 0.0
    mean_gbs: float = 0.0
    validated: bool = False

    def percent_of_peak(self, machine):
        return 100.0 * self.best_gbs / float(machine.bandwidth_gbs)


def mttkrp_bandwidth(
    tensor,
    rank,
    reps=5,
    mode=0,
    strategy=CHUNKED_SORTED,
    policy=None,
    backend=None,
    worker_budget=None,
    seed=0,
):
    """Time repeated MTTKRP launches and convert to effective GB/s.

    ``reps`` must be >= 2; the first launch warms everything and is
    discarded. The bytes model is nominal (perfect reuse inside one
    nonzero, none across), so cache-resident problems can legitimately
    report more than DRAM peak. The result is validated by agreement
    between the two accumulation strategies at 1e-10.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2 (first rep is discarded as warm-up)")
    factors = init_model(tensor.dims, rank, seed).factors
    kwargs = dict(policy=policy, backend=backend, worker_budget=worker_budget)
    out = mttkrp(tensor, factors, mode, strategy=strategy, **kwargs)
    times = []
    for _ in range(reps - 1):
        t0 = time.perf_counter()
        mttkrp(tensor, factors, mode, strategy=strategy, **kwargs)
        times.append(time.perf_counter() - t0)
    other = (
        ATOMIC_PER_NONZERO if strategy.variant == "chunked" else CHUNKED_SORTED
    )
    check = mttkrp(tensor, factors, mode, strategy=other, **kwargs)
    denom = max(abs(out).max(), 1.0)
    validated = bool((abs(out - check) / denom).max() < 1e-10)
    nbytes = mttkrp_bytes(tensor, rank)
    gbs = [nbytes / t / 1e9 for t in times]
    return MttkrpBenchResult(
        mode=mode,
        rank=rank,
        nnz=tensor.nnz,
        reps=reps,
        bytes_per_pass=nbytes,
        strategy=strategy.variant,
        seconds=times,
        best_gbs=max(gbs),
        mean_gbs=sum(gbs) / len(gbs),
        validated=validated,
    )


def mttkrp_to_csv(results, stream, machine=None):
    stream.write("mode,rank,nnz,strategy,bytes_per_pass,best_gbs,mean_gbs,validated")
    if machine is not None:
        stream.write(",percent_of_peak")
    stream.write("\n")
    for r in results:
        stream.write(
            f"{r.mode},{r.rank},{r.nnz},{r.strategy},{r.bytes_per_pass},"
            f"{r.best_gbs:.3f},{r.mean_gbs:.3f},{int(r.validated)}"
        )
        if machine is not None:
            stream.write(f",{r.percent_of_peak(machine):.2f}")
        stream.write("\n")
