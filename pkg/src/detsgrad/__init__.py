"""Distributed event-triggered stochastic gradient descent over agent graphs."""
from ._accel import BACKEND
from .graph import GraphTopology, build_topology, consensus_quadratic_form, spectral_quantities
from .schedule import PAPER_SCHEDULE, StepSchedule, summability_probe, validate
from .sim import SimConfig, run, run_centralized_baseline

__version__ = "0.1.0"
__all__ = [
    "BACKEND", "GraphTopology", "PAPER_SCHEDULE", "SimConfig", "StepSchedule", "build_topology",
    "consensus_quadratic_form", "run", "run_centralized_baseline", "spectral_quantities",
    "summability_probe", "validate",
]
