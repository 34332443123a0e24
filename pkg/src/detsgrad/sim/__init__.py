from .config import (DirectionSpec, ProblemSpec, ScheduleSpec, SimConfig, Upsilon0Spec,
                     build_problem, pooled)
from .engine import RunResult, agent_rng, run, run_centralized_baseline
from .metrics import MetricsFormatError, RunMetrics, broadcast_accounting

__all__ = [
    "DirectionSpec", "MetricsFormatError", "ProblemSpec", "RunMetrics", "RunResult", "ScheduleSpec",
    "SimConfig", "Upsilon0Spec", "agent_rng", "broadcast_accounting", "build_problem", "pooled",
    "run", "run_centralized_baseline",
]
