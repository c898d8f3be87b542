"""Joint beacon placement and neural localization (C++ core)."""

from ._core import (
    CheckpointError,
    ConfigError,
    EnvironmentMap,
    MapError,
    PropagationParams,
    Trainer,
    TrainingAborted,
    alpha_at,
    lambda_at,
    load_map,
    make_preset,
    measure,
    received_power,
    selfcheck,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "EnvironmentMap",
    "MapError",
    "PropagationParams",
    "Trainer",
    "TrainingAborted",
    "alpha_at",
    "lambda_at",
    "load_map",
    "make_preset",
    "measure",
    "received_power",
    "selfcheck",
]
