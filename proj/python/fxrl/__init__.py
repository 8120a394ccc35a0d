"""FX trading environment with a masked DQN/DDQN agent."""

from ._fxrl import (
    ConfigError,
    ContractError,
    DataError,
    Environment,
    FxrlError,
    TrainingFault,
    backtest,
    compute_metrics,
    flat_dimension,
    generate_synthetic,
    resolve_config,
    run_benchmark,
    run_conformance,
    run_training,
    validate_configs,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "Environment",
    "FxrlError",
    "TrainingFault",
    "backtest",
    "compute_metrics",
    "flat_dimension",
    "generate_synthetic",
    "resolve_config",
    "run_benchmark",
    "run_conformance",
    "run_training",
    "validate_configs",
]
