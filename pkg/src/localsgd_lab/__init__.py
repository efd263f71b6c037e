"""Deterministic simulator for local-update distributed SGD.

The package models N workers taking local gradient steps between periodic
synchronization barriers and exposes four update rules on that machinery:
fully synchronous SGD, plain local SGD, elastic averaging, and a
variance-corrected local method whose per-worker correction terms cancel
the drift caused by heterogeneous data.  Runs are bit-reproducible for a
given seed regardless of thread count, and every run can emit a metric
trace for plotting or auditing.
"""

from .core import (
    ALGORITHMS,
    PARTITIONS,
    ConfigError,
    GradientStream,
    GlobalState,
    RunConfig,
    SyncSchedule,
    WorkerState,
    vec_mean,
    vec_sum,
)
from .metrics import TRACE_COLUMNS, TraceRow, sweep_to_csv, trace_to_csv
from .objectives import (
    PartitionedLeastSquares,
    PartitionedLogistic,
    Problem,
    QuadraticPairProblem,
    estimate_lipschitz,
    least_squares_problem,
    load_csv_dataset,
    logistic_problem,
    make_partition,
)
from .oracle import (
    OracleTrajectory,
    localsgd_fixed_point,
    localsgd_limit_variance,
    oracle_run,
)
from .simulator import (
    SWEEP_AXES,
    THREADS_ENV_VAR,
    HyperReport,
    RunResult,
    check_hyperparams,
    resolve_threads,
    run,
    suggested_k,
    sweep,
)

__all__ = [
    "ALGORITHMS",
    "PARTITIONS",
    "SWEEP_AXES",
    "THREADS_ENV_VAR",
    "TRACE_COLUMNS",
    "ConfigError",
    "GlobalState",
    "GradientStream",
    "HyperReport",
    "OracleTrajectory",
    "PartitionedLeastSquares",
    "PartitionedLogistic",
    "Problem",
    "QuadraticPairProblem",
    "RunConfig",
    "RunResult",
    "SyncSchedule",
    "TraceRow",
    "WorkerState",
    "check_hyperparams",
    "estimate_lipschitz",
    "least_squares_problem",
    "load_csv_dataset",
    "localsgd_fixed_point",
    "localsgd_limit_variance",
    "logistic_problem",
    "make_partition",
    "oracle_run",
    "resolve_threads",
    "run",
    "suggested_k",
    "sweep",
    "sweep_to_csv",
    "trace_to_csv",
    "vec_mean",
    "vec_sum",
]

__version__ = "0.1.0"
