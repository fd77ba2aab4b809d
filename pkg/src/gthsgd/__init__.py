"""Decentralized stochastic optimization with gradient tracking and a
hybrid variance-reduced gradient estimator.

The package provides mixing-matrix construction and validation for several
network families, stochastic first-order oracles for logistic and quadratic
models, the tracking-based optimizers (hybrid estimator, fresh-gradient
tracking, recursive-estimator loop, plain decentralized SGD), closed-form
parameter schedules, and a metrics/trace harness with a CLI front end.
"""

__version__ = "0.1.0"

from .algorithms import (
    ALGORITHMS,
    ConfigError,
    InvariantViolation,
    RunConfig,
    RunResult,
    Schedule,
    SwarmState,
    config_from_dict,
    coupled_beta,
    horizon_schedule,
    init_gt_hsgd,
    load_run_config,
    rerun_with,
    run,
    schedule_valid_horizon,
    step_dsgd,
    step_gt_hsgd,
    stepsize_cap,
)
from .dataio import (
    DataFormatError,
    Dataset,
    load_dataset,
    normalize_rows,
    partition_uniform,
    save_csv,
    synthesize_logistic,
)
from .metrics import (
    CSV_COLUMNS,
    CSV_HEADER,
    TraceRecord,
    consensus_error,
    global_gradient,
    global_loss,
    stationary_gap,
    stationary_gap_per_node,
    steady_state_error_bound,
    tail_average,
    tracking_error,
)
from .oracle import (
    LogisticModel,
    OracleError,
    OracleHandle,
    QuadraticModel,
    exact_local_gradient,
    exact_local_loss,
    estimate_noise,
    paired_sample_gradient,
    sample_gradient,
    smoothness_bound,
)
from .topology import (
    FAMILIES,
    MixingMatrixReport,
    Topology,
    TopologyError,
    build_topology,
    load_weight_matrix,
    resolve_topology,
    spectral_gap,
    validate_mixing_matrix,
)

__all__ = [
    "__version__",
    "ALGORITHMS",
    "CSV_COLUMNS",
    "CSV_HEADER",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "FAMILIES",
    "InvariantViolation",
    "LogisticModel",
    "MixingMatrixReport",
    "OracleError",
    "OracleHandle",
    "QuadraticModel",
    "RunConfig",
    "RunResult",
    "Schedule",
    "SwarmState",
    "Topology",
    "TopologyError",
    "TraceRecord",
    "build_topology",
    "config_from_dict",
    "consensus_error",
    "coupled_beta",
    "estimate_noise",
    "exact_local_gradient",
    "exact_local_loss",
    "global_gradient",
    "global_loss",
    "horizon_schedule",
    "init_gt_hsgd",
    "load_dataset",
    "load_run_config",
    "load_weight_matrix",
    "normalize_rows",
    "paired_sample_gradient",
    "partition_uniform",
    "rerun_with",
    "resolve_topology",
    "run",
    "sample_gradient",
    "save_csv",
    "schedule_valid_horizon",
    "smoothness_bound",
    "spectral_gap",
    "stationary_gap",
    "stationary_gap_per_node",
    "steady_state_error_bound",
    "step_dsgd",
    "step_gt_hsgd",
    "stepsize_cap",
    "synthesize_logistic",
    "tail_average",
    "tracking_error",
    "validate_mixing_matrix",
]
