"""Configuration, file formats and experiment runner."""

from .config import ConfigError, ExperimentConfig, load_config, replica_seed, splitmix64
from .io import (
    CheckpointError,
    MetricsRow,
    SnapshotError,
    checkpoint,
    read_snapshot,
    resume,
    write_metrics,
    write_snapshot,
)
from .runner import run_config

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ExperimentConfig",
    "MetricsRow",
    "SnapshotError",
    "checkpoint",
    "load_config",
    "read_snapshot",
    "replica_seed",
    "resume",
    "run_config",
    "splitmix64",
    "write_metrics",
    "write_snapshot",
]
