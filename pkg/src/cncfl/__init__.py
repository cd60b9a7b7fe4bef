"""Federated-learning communication-efficiency simulator for compute-aware networks."""

from .engine import ExperimentConfig, MetricsRecord, preset, run, run_p2p, run_traditional, sweep_clients

__all__ = [
    "ExperimentConfig",
    "MetricsRecord",
    "preset",
    "run",
    "run_p2p",
    "run_traditional",
    "sweep_clients",
]
__version__ = "0.1.0"
