from .config import BenchConfig, ConfigError, load_config, parse_config_text
from .report import EvalReport, ResultRow, aggregate_rows
from .runner import (Splits, parameter_sweep, register_estimator, run_benchmark,
                     split_indices)
from .storage import (ChecksumError, StorageError, VersionError, load_dataset,
                      load_model, save_dataset, save_model)

__all__ = [
    "BenchConfig", "ConfigError", "load_config", "parse_config_text",
    "EvalReport", "ResultRow", "aggregate_rows",
    "Splits", "split_indices", "run_benchmark", "parameter_sweep",
    "register_estimator",
    "StorageError", "ChecksumError", "VersionError",
    "save_dataset", "load_dataset", "save_model", "load_model",
]
