"""Sparse Poisson tensor decomposition with a performance-analysis toolkit.

The library fits nonnegative Kruskal models to sparse count tensors by
alternating Poisson regression with multiplicative updates, and ships the
measurement tools used to study the hot kernel: roofline cost models,
pressure-point analysis, an execution-policy grid search, and bandwidth
microbenchmarks.
"""

__version__ = "0.1.0"

from .kernels import (
    ATOMIC_PER_NONZERO,
    CHUNKED_SORTED,
    Perturbation,
    PhiResult,
    PhiStrategy,
    available_backends,
    compute_phi,
    parse_perturbation,
    parse_strategy,
    resolve_backend,
)
from .model import (
    KruskalModel,
    column_normalize,
    compute_pi,
    init_model,
    load_model,
    save_model,
)
from .mttkrp import mttkrp, mttkrp_bandwidth, mttkrp_bytes
from .policy import (
    MAX_TEAM_VECTOR,
    KernelSchedule,
    PolicyParams,
    PolicySpace,
    auto_vector_size,
    default_policy,
    enumerate_policies,
    grid_search,
    is_valid_policy,
    map_policy_to_kernel,
    parse_policy,
)
from .ppa import PpaReport, geometric_mean, perturb_kernel, run_ppa
from .roofline import (
    KernelCostModel,
    MachineSpec,
    attainable,
    balance_point,
    emit_roofline,
    list_machines,
    load_machine,
    operational_intensity,
    peak_flops,
    work_and_traffic,
)
from .solver import (
    SolverOptions,
    SolverTrace,
    apply_scooch,
    cp_apr_mu,
    kkt_violation,
    log_likelihood,
    mu_update,
    report_kernel_breakdown,
)
from .stream import STREAM_KERNELS, BandwidthResult, run_stream, stream_to_csv
from .tensor import (
    Permutation,
    SparseTensor,
    TensorFormatError,
    build_permutation,
    load_tns,
    parse_tns,
    random_count_tensor,
    row_segments,
    save_tns,
    serialize_tns,
)

__all__ = [name for name in dir() if not name.startswith("_")]
