from rrl_lab.harness.config import CellConfig, ConfigError, ExperimentConfig, fingerprint
from rrl_lab.harness.runner import (
    CURVE_COLUMNS,
    FRONTIER_COLUMNS,
    RunError,
    RunRecord,
    check_gates,
    compare_baselines,
    emit_plot_data,
    frontier_sweep,
    load_records,
    oracle_frontier,
    run_experiment,
)

__all__ = [
    "CURVE_COLUMNS",
    "FRONTIER_COLUMNS",
    "CellConfig",
    "ConfigError",
    "ExperimentConfig",
    "RunError",
    "RunRecord",
    "check_gates",
    "compare_baselines",
    "emit_plot_data",
    "fingerprint",
    "frontier_sweep",
    "load_records",
    "oracle_frontier",
    "run_experiment",
]
