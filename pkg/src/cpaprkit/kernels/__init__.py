"""Hot accumulation kernels behind a backend-switchable dispatch layer.

Two strategies compute the same Phi matrix:

* ``atomic``: walk nonzeros in storage order, scatter each contribution to
  its output row immediately. Concurrent writers are serialized through
  per-worker accumulators that are reduced deterministically afterwards
  (the moral equivalent of atomic adds, without nondeterministic update
  order).
* ``chunked``: walk nonzeros sorted by output row in fixed-width chunks,
  accumulate each row run in a local register block, and flush rows owned
  entirely by one chunk without synchronization. Only the at most two rows
  that straddle a chunk boundary go through the serialized edge path.

Backends: ``numba`` (parallel JIT kernels, the measurement backend) and
``numpy`` (vectorized pure-numpy fallback). Selection order: explicit
argument, then the CPAPRKIT_BACKEND environment variable, then numba when
importable. Both backends are deterministic run-to-run for a fixed
schedule.

Perturbed kernel variants exist for pressure-point analysis: they are
separate compiled functions selected at dispatch, never branches inside
the hot loop, so the perturbation itself adds no per-iteration work.
"""

import os
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from ..policy import default_policy, map_policy_to_kernel

_BACKEND_ENV = "CPAPRKIT_BACKEND"


@dataclass(frozen=True)
class PhiStrategy:
    """Accumulation strategy plus an optional chunk-width override.

    ``chunk_size`` applies only to the chunked variant; when unset the
    schedule takes its width from the policy's vector size.
    """

    variant: str
    chunk_size: int = None

    def __post_init__(self):
        if self.variant not in ("atomic", "chunked"):
            raise ValueError(f"unknown strategy variant {self.variant!r}")
        if self.chunk_size is not None:
            if self.variant != "chunked":
                raise ValueError("chunk_size applies only to the chunked strategy")
            if self.chunk_size < 1:
                raise ValueError("chunk_size must be >= 1")


ATOMIC_PER_NONZERO = PhiStrategy("atomic")
CHUNKED_SORTED = PhiStrategy("chunked")


def parse_strategy(name, chunk_size=None):
    """Build a PhiStrategy from CLI-ish text ('atomic' or 'chunked')."""
    if name == "atomic":
        if chunk_size is not None:
            raise ValueError("chunk_size applies only to the chunked strategy")
        return ATOMIC_PER_NONZERO
    if name == "chunked":
        return PhiStrategy("chunked", chunk_size)
    raise ValueError(f"unknown strategy {name!r}")


class Perturbation(Enum):
    """Deliberate kernel distortions used to price synchronization and locality.

    NONE runs the production kernel unchanged. NO_ATOMICS removes write
    serialization (results are racy under concurrency). FIXED_ROW pins all
    matrix reads and writes to one row per worker, keeping the instruction
    mix but collapsing the memory footprint. BOTH applies both. Any value
    other than NONE voids numerical correctness; results are only good for
    timing.
    """

    NONE = "none"
    NO_ATOMICS = "no-atomics"
    FIXED_ROW = "fixed-row"
    BOTH = "both"

    @property
    def removes_serialization(self):
        return self in (Perturbation.NO_ATOMICS, Perturbation.BOTH)

    @property
    def fixes_rows(self):
        return self in (Perturbation.FIXED_ROW, Perturbation.BOTH)


def parse_perturbation(name):
    for p in Perturbation:
        if p.value == name:
            return p
    raise ValueError(f"unknown perturbation {name!r}")


class PhiResult(NamedTuple):
    """Phi matrix plus a marker for deliberately-wrong perturbed runs."""

    matrix: np.ndarray
    perturbed: bool


def available_backends():
    names = ["numpy"]
    if _numba_backend() is not None:
        names.insert(0, "numba")
    return names


def resolve_backend(name=None):
    """Pick the kernel backend: argument, else env var, else best available."""
    choice = name if name is not None else os.environ.get(_BACKEND_ENV, "auto")
    if choice in (None, "", "auto"):
        return "numba" if _numba_backend() is not None else "numpy"
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if _numba_backend() is None:
            raise RuntimeError(
                "numba backend requested but numba is not importable"
            )
        return "numba"
    raise ValueError(f"unknown backend {choice!r} (use numba, numpy, or auto)")


_NUMBA_MOD = None
_NUMBA_FAILED = False


def _numba_backend():
    global _NUMBA_MOD, _NUMBA_FAILED
    if _NUMBA_MOD is None and not _NUMBA_FAILED:
        try:
            from . import backend_numba

            _NUMBA_MOD = backend_numba
        except ImportError:
            _NUMBA_FAILED = True
    return _NUMBA_MOD


def _backend_module(name=None):
    resolved = resolve_backend(name)
    if resolved == "numba":
        return _numba_backend()
    from . import backend_numpy

    return backend_numpy


def compute_phi(
    tensor,
    B,
    pi,
    mode,
    epsilon,
    strategy=CHUNKED_SORTED,
    policy=None,
    perturbation=Perturbation.NONE,
    backend=None,
    worker_budget=None,
):
    """Phi[i, r] = sum over nonzeros j in row i of (x_j / max(<B[i], pi[j]>, eps)) * pi[j, r].

    ``B`` is the weight-folded factor for ``mode`` (shape dims[mode] x R)
    and ``pi`` the matching per-nonzero factor product. The epsilon clamp
    keeps rows with a zero model value from dividing by zero; a zero pi
    row then contributes exactly zero. Output has B's shape and is
    deterministic run-to-run for a fixed schedule and backend.

    With a perturbation other than NONE the result is marked perturbed and
    carries no numerical meaning (timing only).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tensor._check_mode(mode)
    B = np.ascontiguousarray(B, dtype=np.float64)
    pi = np.ascontiguousarray(pi, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != tensor.dims[mode]:
        raise ValueError(
            f"B must have shape ({tensor.dims[mode]}, R), got {B.shape}"
        )
    if pi.shape != (tensor.nnz, B.shape[1]):
        raise ValueError(
            f"pi must have shape ({tensor.nnz}, {B.shape[1]}), got {pi.shape}"
        )
    if policy is None:
        policy = default_policy()
    schedule = map_policy_to_kernel(policy, strategy, tensor.nnz, worker_budget)
    module = _backend_module(backend)
    matrix = module.phi(
        tensor,
        B,
        pi,
        mode,
        float(epsilon),
        schedule,
        perturbation.removes_serialization,
        perturbation.fixes_rows,
    )
    return PhiResult(matrix=matrix, perturbed=perturbation is not Perturbation.NONE)


def mttkrp_kernel(
    tensor,
    factors,
    mode,
    strategy=CHUNKED_SORTED,
    policy=None,
    backend=None,
    worker_budget=None,
):
    """Matricized-tensor times Khatri-Rao product along ``mode``.

    out[i, :] = sum over nonzeros j with coords[j, mode] == i of
    x_j * prod_{m != mode} factors[m][coords[j, m], :]. Reuses the Phi
    scatter machinery, so both strategies and all policies apply.
    """
    tensor._check_mode(mode)
    if len(factors) != tensor.order:
        raise ValueError(
            f"need {tensor.order} factor matrices, got {len(factors)}"
        )
    factors = [np.ascontiguousarray(f, dtype=np.float64) for f in factors]
    rank = factors[0].shape[1]
    for m, f in enumerate(factors):
        if f.ndim != 2 or f.shape != (tensor.dims[m], rank):
            raise ValueError(
                f"factor {m} must have shape ({tensor.dims[m]}, {rank}), got {f.shape}"
            )
    if policy is None:
        policy = default_policy()
    schedule = map_policy_to_kernel(policy, strategy, tensor.nnz, worker_budget)
    module = _backend_module(backend)
    return module.mttkrp(tensor, factors, mode, schedule)


def stream_ops(backend=None):
    """Name -> callable(a, b, c, s) table for the four bandwidth kernels."""
    module = _backend_module(backend)
    return module.stream_table()


_WARMED = set()


def warm_dispatch(strategy, perturbation=Perturbation.NONE, backend=None):
    """Compile (or cache-load) the kernels one dispatch shape will need.

    Runs the requested strategy/perturbation once on a three-nonzero
    tensor so that JIT time is never billed to the first production call.
    No-op for the numpy backend and for already-warmed combinations.
    """
    resolved = resolve_backend(backend)
    key = (
        resolved,
        strategy.variant,
        perturbation.removes_serialization,
        perturbation.fixes_rows,
    )
    if resolved != "numba" or key in _WARMED:
        return
    from ..tensor import SparseTensor

    tiny = SparseTensor(
        (2, 2), np.array([[0, 0], [1, 1], [1, 0]]), np.array([1.0, 2.0, 1.0])
    )
    compute_phi(
        tiny,
        np.ones((2, 2)),
        np.ones((3, 2)),
        0,
        1e-10,
        strategy=PhiStrategy(strategy.variant),
        perturbation=perturbation,
        backend=resolved,
        worker_budget=1,
    )
    _WARMED.add(key)
