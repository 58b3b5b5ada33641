"""Byzantine-robust federated learning simulator with the FLTG aggregation rule."""

__version__ = "0.1.0"

from .aggregation import (  # noqa: E402
    AggregationInput,
    AggregationResult,
    aggregate,
    fedavg,
    fltg,
    fltrust,
    krum,
    median,
    trim_mean,
)
from .attacks import AttackSpec, apply_attack  # noqa: E402
from .config import ExperimentConfig, parse_config, parse_config_dict  # noqa: E402
from .data import Dataset, generate_synthetic, load_idx, partition_noniid  # noqa: E402
from .errors import ConfigError, EmptyAggregateError, FLTGError  # noqa: E402
from .model import Model, ModelArch, init_model, loss_and_grad, model_update  # noqa: E402
from .simulator import RoundMetrics, run_experiment, sweep  # noqa: E402

__all__ = [
    "__version__",
    "AggregationInput",
    "AggregationResult",
    "aggregate",
    "fedavg",
    "fltg",
    "fltrust",
    "krum",
    "median",
    "trim_mean",
    "AttackSpec",
    "apply_attack",
    "ExperimentConfig",
    "parse_config",
    "parse_config_dict",
    "Dataset",
    "generate_synthetic",
    "load_idx",
    "partition_noniid",
    "ConfigError",
    "EmptyAggregateError",
    "FLTGError",
    "Model",
    "ModelArch",
    "init_model",
    "loss_and_grad",
    "model_update",
    "RoundMetrics",
    "run_experiment",
    "sweep",
]
