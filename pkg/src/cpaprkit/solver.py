"""Alternating Poisson regression with multiplicative updates.

The solver fits a nonnegative Kruskal model to a sparse count tensor by
cycling over modes. For each mode the weight-folded factor B is improved
by a small number of multiplicative steps B <- B * Phi, where Phi plays
the role of the scaled likelihood gradient; B is then split back into a
column-stochastic factor and the weight vector. Convergence is declared
when every mode passes the KKT check at the first inner iteration of an
outer sweep.
"""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import CHUNKED_SORTED, Perturbation, compute_phi, warm_dispatch
from .model import column_normalize, compute_pi, init_model


@dataclass(frozen=True)
class SolverOptions:
    """Everything that determines a solve besides the tensor itself.

    ``kappa`` is the shift applied to factor entries that have collapsed
    to zero while their gradient still pushes them upward; without it the
    multiplicative update can never leave an inadmissible zero.
    """

    rank: int
    max_outer: int = 100
    max_inner: int = 10
    epsilon: float = 1e-10
    kappa: float = 1e-2
    kappa_tol: float = 1e-10
    kkt_tol: float = 1e-4
    seed: int = 0
    strategy: object = CHUNKED_SORTED
    policy: object = None
    perturbation: Perturbation = Perturbation.NONE
    backend: str = None
    worker_budget: int = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.max_inner < 1:
            raise ValueError("max_inner must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.kappa_tol <= 0:
            raise ValueError("kappa_tol must be positive")
        if self.kkt_tol <= 0:
            raise ValueError("kkt_tol must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class TraceEvent:
    """One inner iteration of one mode."""

    outer: int
    mode: int
    inner: int
    phi_seconds: float
    kkt: float


@dataclass
class SolverTrace:
    """Per-iteration progress and where the wall time went."""

    events: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    outer_kkt: list = field(default_factory=list)
    phi_seconds: float = 0.0
    pi_seconds: float = 0.0
    mu_seconds: float = 0.0
    kkt_seconds: float = 0.0
    wall_seconds: float = 0.0
    n_outer: int = 0
    n_inner_total: int = 0
    converged: bool = False
    perturbed: bool = False

    def to_csv(self, stream):
        stream.write("outer,mode,inner,phi_ms,objective,kkt\n")
        for e in self.events:
            objective = (
                self.objectives[e.outer] if e.outer < len(self.objectives) else np.nan
            )
            stream.write(
                f"{e.outer},{e.mode},{e.inner},{1e3 * e.phi_seconds:.6f},"
                f"{objective:.12g},{e.kkt:.6g}\n"
            )


def mu_update(B, phi):
    """One multiplicative step: elementwise B * phi."""
    B = np.asarray(B)
    phi = np.asarray(phi)
    if B.shape != phi.shape:
        raise ValueError(f"shape mismatch: B {B.shape} vs phi {phi.shape}")
    return B * phi


def apply_scooch(A, phi_prev, weights, kappa, kappa_tol):
    """Weight-fold a factor, nudging inadmissible zeros by kappa.

    An entry is an inadmissible zero when it sits below ``kappa_tol`` while
    the previous sweep's Phi exceeds one there (the update wants to grow it
    but multiplication by zero cannot). On the first visit there is no
    previous Phi and no shift is applied.
    """
    A = np.asarray(A, dtype=np.float64)
    if phi_prev is None or kappa == 0.0:
        shifted = A
    else:
        if phi_prev.shape != A.shape:
            raise ValueError(
                f"shape mismatch: A {A.shape} vs phi_prev {phi_prev.shape}"
            )
        mask = (A < kappa_tol) & (phi_prev > 1.0)
        shifted = A + kappa * mask
    return shifted * np.asarray(weights)[np.newaxis, :]


def kkt_violation(B, phi):
    """max |min(B, 1 - phi)|: zero iff the KKT conditions hold exactly.

    Each entry must satisfy either B = 0 with phi <= 1, or B > 0 with
    phi = 1; min(B, 1 - phi) measures the worse of the two residuals.
    """
    B = np.asarray(B)
    phi = np.asarray(phi)
    if B.shape != phi.shape:
        raise ValueError(f"shape mismatch: B {B.shape} vs phi {phi.shape}")
    return float(np.max(np.abs(np.minimum(B, 1.0 - phi))))


def log_likelihood(tensor, model, epsilon=1e-10):
    """Negative Poisson log-likelihood up to the x! constant.

    For a model with column-stochastic factors the total model mass is
    sum(weights), which gives sum_r lambda_r - sum_j x_j log(max(m_j, eps)).
    Lower is better; the MU sweep never increases it.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    m = model.reconstruct_at(tensor.coords)
    return float(
        model.weights.sum() - (tensor.values * np.log(np.maximum(m, epsilon))).sum()
    )


def cp_apr_mu(tensor, options):
    """Fit a rank-R Poisson Kruskal model; returns (model, trace).

    Deterministic: the same tensor, options, and backend give bitwise
    identical factors. With a perturbation other than NONE the solve runs
    at full speed but the trace is marked perturbed and the numbers mean
    nothing.
    """
    if not isinstance(options, SolverOptions):
        raise TypeError("options must be SolverOptions")
    if tensor.nnz == 0:
        raise ValueError("cannot decompose a tensor with no stored entries")
    warm_dispatch(options.strategy, options.perturbation, options.backend)
    t_start = time.perf_counter()
    trace = SolverTrace(perturbed=options.perturbation is not Perturbation.NONE)
    model = init_model(tensor.dims, options.rank, options.seed)
    model.normalize_all()
    phi_prev = [None] * tensor.order

    for outer in range(options.max_outer):
        converged = True
        sweep_kkt = 0.0
        for mode in range(tensor.order):
            B = apply_scooch(
                model.factors[mode],
                phi_prev[mode],
                model.weights,
                options.kappa,
                options.kappa_tol,
            )
            t0 = time.perf_counter()
            pi = compute_pi(model, tensor, mode)
            trace.pi_seconds += time.perf_counter() - t0
            phi = None
            for inner in range(options.max_inner):
                t0 = time.perf_counter()
                phi = compute_phi(
                    tensor,
                    B,
                    pi,
                    mode,
                    options.epsilon,
                    strategy=options.strategy,
                    policy=options.policy,
                    perturbation=options.perturbation,
                    backend=options.backend,
                    worker_budget=options.worker_budget,
                ).matrix
                dt_phi = time.perf_counter() - t0
                trace.phi_seconds += dt_phi
                t0 = time.perf_counter()
                violation = kkt_violation(B, phi)
                trace.kkt_seconds += time.perf_counter() - t0
                trace.events.append(
                    TraceEvent(
                        outer=outer,
                        mode=mode,
                        inner=inner,
                        phi_seconds=dt_phi,
                        kkt=violation,
                    )
                )
                trace.n_inner_total += 1
                sweep_kkt = max(sweep_kkt, violation)
                if violation < options.kkt_tol:
                    break
                converged = False
                t0 = time.perf_counter()
                B = mu_update(B, phi)
                trace.mu_seconds += time.perf_counter() - t0
            phi_prev[mode] = phi
            weights, stochastic, _ = column_normalize(B)
            model.weights = weights
            model.factors[mode] = stochastic
        trace.objectives.append(log_likelihood(tensor, model, options.epsilon))
        trace.outer_kkt.append(sweep_kkt)
        trace.n_outer = outer + 1
        if converged:
            trace.converged = True
            break
    trace.wall_seconds = time.perf_counter() - t_start
    return model, trace


def report_kernel_breakdown(trace):
    """Measured kernel time split across phi, pi, kkt, and mu.

    Returns [(name, seconds, percent)] for the four instrumented kernels;
    percents are shares of their combined time, so they sum to 100 by
    construction. Raises on an empty trace: a breakdown of nothing is a
    bug upstream.
    """
    if not trace.events:
        raise ValueError("empty trace: run the solver first")
    rows = [
        ("phi", trace.phi_seconds),
        ("pi", trace.pi_seconds),
        ("kkt", trace.kkt_seconds),
        ("mu", trace.mu_seconds),
    ]
    total = sum(s for _, s in rows)
    if total <= 0:
        raise ValueError("empty trace: no kernel time recorded")
    return [(name, seconds, 100.0 * seconds / total) for name, seconds in rows]


def breakdown_to_csv(breakdown, stream):
    stream.write("kernel,seconds,percent\n")
    for name, seconds, percent in breakdown:
        stream.write(f"{name},{seconds:.6f},{percent:.4f}\n")
