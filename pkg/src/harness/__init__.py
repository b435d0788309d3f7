# Harness module
from .experiment_config import CONFIG_KEYS, ExperimentConfig, parse_config, parse_config_text
from .metrics import (
    MetricsRecorder,
    MetricsRow,
    RUN_COLUMNS,
    RunMetrics,
    avg_noise_magnitude,
    cumulative_epsilon,
    evaluate_test_error,
)
from .runner import (
    AUDIT_SAMPLES,
    ExperimentResult,
    aggregate_runs,
    audit_dp,
    audit_failures,
    build_problems,
    check_bounds,
    load_federated_dataset,
    run_experiment,
    run_single,
    training_settings,
)

__all__ = [
    "AUDIT_SAMPLES",
    "CONFIG_KEYS",
    "ExperimentConfig",
    "ExperimentResult",
    "MetricsRecorder",
    "MetricsRow",
    "RUN_COLUMNS",
    "RunMetrics",
    "aggregate_runs",
    "audit_dp",
    "audit_failures",
    "avg_noise_magnitude",
    "build_problems",
    "check_bounds",
    "cumulative_epsilon",
    "evaluate_test_error",
    "load_federated_dataset",
    "parse_config",
    "parse_config_text",
    "run_experiment",
    "run_single",
    "training_settings",
]
