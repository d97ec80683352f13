"""Command-line front end.

One subcommand per workflow: decompose, ppa, gridsearch, roofline,
bench-stream, bench-mttkrp. Everything machine-readable is CSV, written
to --out or standard output; diagnostics go to standard error. Exit
codes: 0 success, 1 usage error, 2 input error, 3 runtime failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .kernels import parse_perturbation, parse_strategy
from .model import save_model
from .mttkrp import mttkrp_bandwidth, mttkrp_to_csv
from .policy import PolicySpace, default_policy, parse_policy
from .ppa import run_ppa
from .roofline import (
    KernelCostModel,
    emit_roofline,
    gnuplot_script,
    load_machine,
)
from .solver import SolverOptions, breakdown_to_csv, cp_apr_mu, report_kernel_breakdown
from .stream import run_stream, stream_to_csv
from .tensor import TensorFormatError, load_tns, random_count_tensor

# store_true flags, named here so --config files can set them as key=true
_BOOL_FLAGS = {"auto-vector", "heatmap", "quoted"}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this CLI reserves 2 for bad
    input data, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_ints(text):
    return [int(tok) for tok in text.split(",") if tok]


def _dims(text):
    dims = tuple(int(tok) for tok in text.lower().split("x"))
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"bad dimension spec {text!r}")
    return dims


def _add_common(parser, *, seed=True, reps=False, policy=True, strategy=True,
                machine=False, threads=True):
    parser.add_argument("--out", metavar="FILE", help="write CSV here instead of stdout")
    parser.add_argument("--config", metavar="FILE",
                        help="key=value lines applied as flag defaults")
    parser.add_argument("--backend", choices=("auto", "numba", "numpy"),
                        default="auto", help="kernel backend (default auto)")
    if seed:
        parser.add_argument("--seed", type=int, default=0)
    if reps:
        parser.add_argument("--reps", type=int, default=5,
                            help="timed repetitions per measurement")
    if threads:
        parser.add_argument("--threads", type=int, default=None,
                            help="cap worker concurrency (default: hardware)")
    if strategy:
        parser.add_argument("--strategy", choices=("atomic", "chunked"),
                            default="chunked")
        parser.add_argument("--chunk-size", type=int, default=None,
                            help="chunk width override (chunked strategy only)")
    if policy:
        parser.add_argument("--policy", type=parse_policy, default=None,
                            metavar="L,T,V", help="league,team,vector sizes")
    if machine:
        parser.add_argument("--machine", metavar="SPEC",
                            help="machine spec name or JSON path")


def _build_parser():
    parser = _Parser(prog="cpaprkit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("decompose", parents=[], help="fit a Poisson Kruskal model")
    p.add_argument("--input", required=True, metavar="TNS")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--max-inner", type=int, default=10)
    p.add_argument("--kkt-tol", type=float, default=1e-4)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--kappa", type=float, default=1e-2)
    p.add_argument("--perturbation", type=parse_perturbation, default="none",
                   metavar="{none,no-atomics,fixed-row,both}",
                   help="PPA variant; anything but none voids the numbers")
    p.add_argument("--model-out", metavar="FILE",
                   help="model file (default: <input stem>.model.txt)")
    p.add_argument("--breakdown", metavar="FILE",
                   help="also write the kernel-time breakdown CSV here")
    _add_common(p)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("ppa", help="pressure-point analysis of the phi kernel")
    p.add_argument("--input", action="append", default=[], metavar="TNS",
                   help="tensor file; repeatable")
    p.add_argument("--synth", type=_dims, default=None, metavar="I1xI2x...",
                   help="add a synthetic tensor of these dimensions")
    p.add_argument("--nnz", type=int, default=100_000,
                   help="nonzeros for --synth")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--mode", type=int, default=0)
    _add_common(p, reps=True)
    p.set_defaults(func=_cmd_ppa)

    p = sub.add_parser("gridsearch", help="time the phi kernel across policies")
    p.add_argument("--input", metavar="TNS")
    p.add_argument("--synth", type=_dims, default=None, metavar="I1xI2x...")
    p.add_argument("--nnz", type=int, default=100_000)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--policy-league", type=_csv_ints, default=[1, 2, 4, 8],
                   metavar="CSV")
    p.add_argument("--policy-team", type=_csv_ints, default=[1, 2, 4], metavar="CSV")
    p.add_argument("--policy-vector", type=_csv_ints, default=[1, 8, 32],
                   metavar="CSV")
    p.add_argument("--auto-vector", action="store_true",
                   help="pick vector sizes automatically per team size")
    p.add_argument("--baseline", type=parse_policy, default=None, metavar="L,T,V")
    p.add_argument("--target", choices=("phi", "full", "both"), default="phi")
    p.add_argument("--heatmap", action="store_true",
                   help="emit gnuplot matrix blocks instead of CSV rows")
    _add_common(p, reps=True)
    p.set_defaults(func=_cmd_gridsearch)

    p = sub.add_parser("roofline", help="emit roofline curve and kernel markers")
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--chunk", type=int, default=32,
                   help="chunk width V for the chunked cost model")
    p.add_argument("--quoted", action="store_true",
                   help="add markers at the conventional round-figure intensities")
    p.add_argument("--gnuplot", metavar="FILE",
                   help="also write a companion gnuplot script")
    _add_common(p, seed=False, policy=False, strategy=False, machine=True,
                threads=False)
    p.set_defaults(func=_cmd_roofline)

    p = sub.add_parser("bench-stream", help="memory-bandwidth microbenchmark")
    p.add_argument("--length", type=int, default=10_000_000)
    p.add_argument("--kernels", default="copy,scale,add,triad",
                   help="comma-separated subset of copy,scale,add,triad")
    p.add_argument("--scale", type=float, default=3.0)
    _add_common(p, seed=False, reps=True, policy=False, strategy=False,
                machine=True)
    p.set_defaults(func=_cmd_bench_stream)

    p = sub.add_parser("bench-mttkrp", help="sparse MTTKRP bandwidth benchmark")
    p.add_argument("--input", metavar="TNS")
    p.add_argument("--synth", type=_dims, default=None, metavar="I1xI2x...")
    p.add_argument("--nnz", type=int, default=100_000)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--mode", type=int, default=0)
    _add_common(p, reps=True, machine=True)
    p.set_defaults(func=_cmd_bench_mttkrp)
    return parser


def _extract_config(argv):
    rest = []
    path = None
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                return rest + [tok], None
            path = argv[i + 1]
            i += 2
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
        else:
            rest.append(tok)
            i += 1
    return rest, path


def _config_flags(path):
    flags = []
    with open(path, "r", encoding="utf-8") as handle:
        for raw in handle:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line must be key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("_", "-")
            value = value.strip()
            if key in _BOOL_FLAGS:
                if value.lower() in ("1", "true", "yes", "on"):
                    flags.append(f"--{key}")
                elif value.lower() not in ("0", "false", "no", "off"):
                    raise ValueError(f"config flag {key} takes true/false")
            else:
                flags.append(f"--{key}={value}")
    return flags


def _open_out(path):
    if path:
        return open(path, "w", encoding="utf-8", newline="")
    return None


def _emit(args, write_fn):
    handle = _open_out(args.out)
    try:
        write_fn(handle if handle else sys.stdout)
    finally:
        if handle:
            handle.close()


def _strategy_of(args):
    return parse_strategy(args.strategy, getattr(args, "chunk_size", None))


def _apply_threads(args):
    threads = getattr(args, "threads", None)
    if threads is None:
        return None
    if threads < 1:
        raise ValueError("--threads must be >= 1")
    try:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass
    return threads


def _input_tensor(args, require=True):
    if getattr(args, "synth", None) is not None:
        return random_count_tensor(args.synth, args.nnz, getattr(args, "seed", 0))
    path = getattr(args, "input", None)
    if not path:
        if require:
            raise ValueError("need --input FILE or --synth DIMS")
        return None
    return load_tns(path)


def _cmd_decompose(args):
    tensor = load_tns(args.input)
    budget = _apply_threads(args)
    options = SolverOptions(
        rank=args.rank,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        epsilon=args.epsilon,
        kappa=args.kappa,
        kkt_tol=args.kkt_tol,
        seed=args.seed,
        strategy=_strategy_of(args),
        policy=args.policy,
        perturbation=args.perturbation,
        backend=None if args.backend == "auto" else args.backend,
        worker_budget=budget,
    )
    model, trace = cp_apr_mu(tensor, options)
    model_path = args.model_out
    if not model_path:
        stem = os.path.splitext(os.path.basename(args.input))[0]
        model_path = stem + ".model.txt"
    save_model(model, model_path)
    _emit(args, trace.to_csv)
    if args.breakdown:
        with open(args.breakdown, "w", encoding="utf-8") as handle:
            breakdown_to_csv(report_kernel_breakdown(trace), handle)
    status = "converged" if trace.converged else "not converged"
    print(
        f"{status} after {trace.n_outer} outer sweeps, "
        f"objective {trace.objectives[-1]:.6g}, model -> {model_path}"
        + (" [PERTURBED: numbers are void]" if trace.perturbed else ""),
        file=sys.stderr,
    )
    return 0


def _cmd_ppa(args):
    budget = _apply_threads(args)
    tensors = {}
    for path in args.input:
        tensors[os.path.basename(path)] = load_tns(path)
    if args.synth is not None:
        label = "synth_" + "x".join(str(d) for d in args.synth)
        tensors[label] = random_count_tensor(args.synth, args.nnz, args.seed)
    if not tensors:
        raise ValueError("need --input FILE or --synth DIMS")
    options = SolverOptions(
        rank=args.rank,
        seed=args.seed,
        strategy=_strategy_of(args),
        policy=args.policy,
    )
    report = run_ppa(
        tensors,
        options,
        policy=args.policy,
        reps=args.reps,
        mode=args.mode,
        backend=None if args.backend == "auto" else args.backend,
        worker_budget=budget,
    )
    _emit(args, report.to_csv)
    return 0


def _cmd_gridsearch(args):
    from .policy import format_heatmaps, grid_search

    tensor = _input_tensor(args)
    budget = _apply_threads(args)
    space = PolicySpace(
        leagues=args.policy_league,
        teams=args.policy_team,
        vectors=args.policy_vector,
        auto_vector=args.auto_vector,
    )
    baseline = args.baseline if args.baseline else default_policy()
    options = SolverOptions(
        rank=args.rank,
        seed=args.seed,
        strategy=_strategy_of(args),
        backend=None if args.backend == "auto" else args.backend,
        worker_budget=budget,
    )
    targets = ("phi", "full") if args.target == "both" else (args.target,)
    result = grid_search(
        tensor, options, space, baseline,
        reps=args.reps, targets=targets, worker_budget=budget,
    )
    if args.heatmap:
        _emit(args, lambda out: out.write(format_heatmaps(result)))
    else:
        _emit(args, result.to_csv)
    return 0


def _cmd_roofline(args):
    if not args.machine:
        print("cpaprkit roofline: --machine is required", file=sys.stderr)
        return 1
    machine = load_machine(args.machine)
    models = [
        KernelCostModel("atomic", args.rank),
        KernelCostModel("chunked", args.rank, args.chunk),
    ]
    _emit(args, lambda out: emit_roofline(machine, models, out, quoted=args.quoted))
    if args.gnuplot:
        csv_name = args.out if args.out else "roofline.csv"
        with open(args.gnuplot, "w", encoding="utf-8") as handle:
            handle.write(gnuplot_script(csv_name, machine.name))
    return 0


def _cmd_bench_stream(args):
    _apply_threads(args)
    machine = load_machine(args.machine) if args.machine else None
    results = run_stream(
        length=args.length,
        reps=args.reps,
        kernels=[k for k in args.kernels.split(",") if k],
        backend=None if args.backend == "auto" else args.backend,
        scale=args.scale,
    )
    _emit(args, lambda out: stream_to_csv(results, out, machine=machine))
    return 0


def _cmd_bench_mttkrp(args):
    budget = _apply_threads(args)
    tensor = _input_tensor(args)
    machine = load_machine(args.machine) if args.machine else None
    result = mttkrp_bandwidth(
        tensor,
        args.rank,
        reps=args.reps,
        mode=args.mode,
        strategy=_strategy_of(args),
        policy=args.policy,
        backend=None if args.backend == "auto" else args.backend,
        worker_budget=budget,
        seed=args.seed,
    )
    _emit(args, lambda out: mttkrp_to_csv([result], out, machine=machine))
    return 0


def main(argv=None):
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    stripped, config_path = _extract_config(argv)
    if config_path is not None:
        try:
            flags = _config_flags(config_path)
        except FileNotFoundError:
            print(f"cpaprkit: config file not found: {config_path}", file=sys.stderr)
            return 2
        except ValueError as exc:
            print(f"cpaprkit: {exc}", file=sys.stderr)
            return 1
        if stripped:
            stripped = [stripped[0]] + flags + stripped[1:]
    try:
        args = parser.parse_args(stripped)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (TensorFormatError, FileNotFoundError, IsADirectoryError,
            PermissionError, json.JSONDecodeError, ValueError) as exc:
        print(f"cpaprkit {args.subcommand}: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("cpaprkit: interrupted", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"cpaprkit {args.subcommand}: internal error: {exc}", file=sys.stderr)
        return 3


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
