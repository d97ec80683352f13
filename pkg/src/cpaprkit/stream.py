"""Memory-bandwidth microbenchmark in the classic four-kernel style.

Each kernel streams 8-byte elements with a fixed bytes-and-flops budget
per iteration: copy (16 B, 0 flops), scale (16 B, 1), add (24 B, 1),
triad (24 B, 2). Sources are never written, so results after any number
of repetitions have an exact closed form and every run is content-checked
against it. Arrays should comfortably exceed the last-level cache for the
numbers to mean main-memory bandwidth.
"""

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .kernels import stream_ops


@dataclass(frozen=True)
class StreamKernel:
    """Name plus the per-iteration traffic and arithmetic budget."""

    name: str
    bytes_per_iter: int
    flops_per_iter: int

    @property
    def intensity(self):
        """Exact flops per byte."""
        return Fraction(self.flops_per_iter, self.bytes_per_iter)

    @property
    def intensity_text(self):
        """Conventional display: exact when it terminates within four
        decimals, otherwise rounded to three (0, 0.0625, 0.042, 0.083)."""
        value = self.intensity
        if value == 0:
            return "0"
        if (value * 10**4).denominator == 1:
            return f"{float(value):.4f}".rstrip("0")
        return f"{float(value):.3f}"


STREAM_KERNELS = (
    StreamKernel("copy", 16, 0),
    StreamKernel("scale", 16, 1),
    StreamKernel("add", 24, 1),
    StreamKernel("triad", 24, 2),
)

_B_FILL = 2.0
_C_FILL = 1.0


def expected_value(kernel, scale):
    """Closed-form destination value after any positive number of reps."""
    if kernel == "copy":
        return _B_FILL
    if kernel == "scale":
        return scale * _B_FILL
    if kernel == "add":
        return _B_FILL + _C_FILL
    if kernel == "triad":
        return _B_FILL + scale * _C_FILL
    raise ValueError(f"unknown stream kernel {kernel!r}")


@dataclass
class BandwidthResult:
    """Measured bandwidth for one kernel."""

    kernel: str
    length: int
    reps: int
    bytes_per_iter: int
    seconds: list = field(default_factory=list)
    best_gbs: float = 0.0
    mean_gbs: float = 0.0
    validated: bool = False

    def percent_of_peak(self, machine):
        """Best bandwidth as a percentage of a machine's peak bandwidth."""
        return 100.0 * self.best_gbs / float(machine.bandwidth_gbs)


def run_stream(length=10_000_000, reps=5, kernels=None, backend=None, scale=3.0):
    """Run the four kernels; returns one BandwidthResult each.

    ``reps`` must be >= 2: the first repetition warms caches, allocators,
    and any JIT machinery and is excluded from the statistics. Bandwidth
    uses each kernel's nominal bytes per iteration, best rep for best_gbs
    and the mean of the non-warm-up reps for mean_gbs.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2 (first rep is discarded as warm-up)")
    if length < 1:
        raise ValueError("length must be >= 1")
    names = [k.name for k in STREAM_KERNELS] if kernels is None else list(kernels)
    table = stream_ops(backend)
    by_name = {k.name: k for k in STREAM_KERNELS}
    a = np.zeros(length)
    b = np.full(length, _B_FILL)
    c = np.full(length, _C_FILL)
    results = []
    for name in names:
        kernel = by_name.get(name)
        if kernel is None:
            raise ValueError(f"unknown stream kernel {name!r}")
        fn = table[name]
        times = []
        for rep in range(reps):
            t0 = time.perf_counter()
            fn(a, b, c, scale)
            times.append(time.perf_counter() - t0)
        timed = times[1:]
        gbs = [kernel.bytes_per_iter * length / t / 1e9 for t in timed]
        validated = bool((a == expected_value(name, scale)).all())
        results.append(
            BandwidthResult(
                kernel=name,
                length=length,
                reps=reps,
                bytes_per_iter=kernel.bytes_per_iter,
                seconds=timed,
                best_gbs=max(gbs),
                mean_gbs=sum(gbs) / len(gbs),
                validated=validated,
            )
        )
    return results


def stream_to_csv(results, stream, machine=None):
    stream.write("kernel,length,bytes_per_iter,intensity,best_gbs,mean_gbs,validated")
    if machine is not None:
        stream.write(",percent_of_peak")
    stream.write("\n")
    by_name = {k.name: k for k in STREAM_KERNELS}
    for r in results:
        stream.write(
            f"{r.kernel},{r.length},{r.bytes_per_iter},"
            f"{by_name[r.kernel].intensity_text},"
            f"{r.best_gbs:.3f},{r.mean_gbs:.3f},{int(r.validated)}"
        )
        if machine is not None:
            stream.write(f",{r.percent_of_peak(machine):.2f}")
        stream.write("\n")
