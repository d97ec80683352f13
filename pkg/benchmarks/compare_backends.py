"""Compare the JIT kernels against the pure-numpy fallback.

Times the phi kernel (both strategies), MTTKRP, and the stream kernels on
each available backend at a few sizes and prints a speedup table. Run:

    python benchmarks/compare_backends.py [--nnz 200000] [--rank 16] [--reps 5]
"""

import argparse
import time

import numpy as np

from cpaprkit import (
    ATOMIC_PER_NONZERO,
    CHUNKED_SORTED,
    available_backends,
    compute_phi,
    compute_pi,
    init_model,
    mttkrp,
    random_count_tensor,
    run_stream,
)


def time_call(fn, reps):
    fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nnz", type=int, default=200_000)
    parser.add_argument("--rank", type=int, default=16)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--dims", default="3000x2000x1000")
    parser.add_argument("--stream-length", type=int, default=5_000_000)
    args = parser.parse_args()

    dims = tuple(int(d) for d in args.dims.split("x"))
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    tensor = random_count_tensor(dims, args.nnz, seed=7)
    model = init_model(dims, args.rank, seed=0)
    model.normalize_all()
    B = model.factors[0] * model.weights[np.newaxis, :]
    pi = compute_pi(model, tensor, 0)

    rows = []
    for label, strategy in (("phi/atomic", ATOMIC_PER_NONZERO),
                            ("phi/chunked", CHUNKED_SORTED)):
        ms = {}
        for backend in backends:
            ms[backend] = time_call(
                lambda: compute_phi(tensor, B, pi, 0, 1e-10,
                                    strategy=strategy, backend=backend),
                args.reps,
            )
        rows.append((label, ms))
    ms = {}
    for backend in backends:
        ms[backend] = time_call(
            lambda: mttkrp(tensor, model.factors, 0, backend=backend), args.reps
        )
    rows.append(("mttkrp", ms))

    print(f"\n{'kernel':<14}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
          + ("      speedup" if len(backends) == 2 else ""))
    for label, ms in rows:
        line = f"{label:<14}" + "".join(f"{ms[b]:>14.3f}" for b in backends)
        if len(backends) == 2:
            line += f"{ms[backends[1]] / ms[backends[0]]:>13.2f}x"
        print(line)

    print("\nstream best GB/s")
    header = f"{'kernel':<14}" + "".join(f"{b:>14}" for b in backends)
    print(header)
    per_backend = {
        b: {r.kernel: r.best_gbs
            for r in run_stream(length=args.stream_length, reps=max(2, args.reps),
                                backend=b)}
        for b in backends
    }
    for kernel in ("copy", "scale", "add", "triad"):
        print(f"{kernel:<14}"
              + "".join(f"{per_backend[b][kernel]:>14.2f}" for b in backends))


if __name__ == "__main__":
    main()
