"""Pressure-point analysis: price a suspected bottleneck by deleting it.

Instead of profiling counters, run the production kernel against variants
with one cost surgically removed: write serialization dropped, or all
matrix rows pinned to one row per worker (perfect locality, same
instruction mix), or both. The speedup of each variant over the unchanged
kernel bounds how much that pressure point can ever be worth. Perturbed
results are numerically meaningless by construction and are always marked
invalid.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import Perturbation, compute_phi
from .model import compute_pi, init_model
from .policy import default_policy

ALL_PERTURBATIONS = (
    Perturbation.NONE,
    Perturbation.NO_ATOMICS,
    Perturbation.FIXED_ROW,
    Perturbation.BOTH,
)


def perturb_kernel(perturbation):
    """Dispatch flags (drop_serialization, pin_rows) for a perturbation.

    NONE maps to (False, False), which selects the production kernel
    itself: the unperturbed baseline runs the identical code path, not a
    copy of it.
    """
    return (perturbation.removes_serialization, perturbation.fixes_rows)


def geometric_mean(values):
    """Geometric mean of positive numbers.

    Computed as the n-th root of the product: speedup lists are short and
    near one, so overflow is not a concern, and perfect squares come out
    exact (geometric_mean([2, 8]) == 4.0).
    """
    values = list(values)
    if not values:
        raise ValueError("geometric mean of an empty sequence")
    if any(v <= 0 for v in values):
        raise ValueError("geometric mean requires positive values")
    return math.prod(values) ** (1.0 / len(values))


@dataclass
class PpaEntry:
    """Timing of one perturbation on one tensor."""

    label: str
    perturbation: Perturbation
    mean_ms: float
    speedup: float
    numerically_valid: bool


@dataclass
class PpaReport:
    """All entries plus per-perturbation geometric-mean speedups."""

    entries: list = field(default_factory=list)
    geomeans: dict = field(default_factory=dict)
    reps: int = 0
    mode: int = 0

    def to_csv(self, stream):
        stream.write("tensor,perturbation,mean_ms,speedup,valid\n")
        for e in self.entries:
            stream.write(
                f"{e.label},{e.perturbation.value},{e.mean_ms:.6f},"
                f"{e.speedup:.6f},{int(e.numerically_valid)}\n"
            )
        for perturbation, value in self.geomeans.items():
            stream.write(f"GEOMEAN,{perturbation.value},nan,{value:.6f},0\n")


def run_ppa(
    tensors,
    options,
    policy=None,
    reps=5,
    mode=0,
    perturbations=ALL_PERTURBATIONS,
    backend=None,
    worker_budget=None,
):
    """Time the Phi kernel under each perturbation on each tensor.

    ``tensors`` is a mapping label -> SparseTensor (a bare list gets
    labels from dims and nnz). Per tensor: one warm-up call per variant,
    then ``reps`` timed calls; speedup is the unperturbed mean over the
    variant mean, so NONE scores exactly 1.0 by construction. The report
    ends with geometric-mean speedups across tensors.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if isinstance(tensors, dict):
        labeled = list(tensors.items())
    else:
        labeled = [
            (f"{'x'.join(str(d) for d in t.dims)}_nnz{t.nnz}", t) for t in tensors
        ]
    if not labeled:
        raise ValueError("need at least one tensor")
    if policy is None:
        policy = options.policy if options.policy is not None else default_policy()

    report = PpaReport(reps=reps, mode=mode)
    speedups = {p: [] for p in perturbations}
    for label, tensor in labeled:
        model = init_model(tensor.dims, options.rank, options.seed)
        model.normalize_all()
        B = model.factors[mode] * model.weights[np.newaxis, :]
        pi = compute_pi(model, tensor, mode)

        def timed_mean(perturbation):
            kwargs = dict(
                strategy=options.strategy,
                policy=policy,
                perturbation=perturbation,
                backend=backend,
                worker_budget=worker_budget,
            )
            compute_phi(tensor, B, pi, mode, options.epsilon, **kwargs)
            acc = 0.0
            for _ in range(reps):
                t0 = time.perf_counter()
                compute_phi(tensor, B, pi, mode, options.epsilon, **kwargs)
                acc += time.perf_counter() - t0
            return 1e3 * acc / reps

        means = {p: timed_mean(p) for p in perturbations}
        base = means.get(Perturbation.NONE)
        if base is None:
            base = timed_mean(Perturbation.NONE)
        for p in perturbations:
            speedup = base / means[p]
            speedups[p].append(speedup)
            report.entries.append(
                PpaEntry(
                    label=label,
                    perturbation=p,
                    mean_ms=means[p],
                    speedup=speedup,
                    numerically_valid=p is Perturbation.NONE,
                )
            )
    report.geomeans = {p: geometric_mean(s) for p, s in speedups.items()}
    return report
