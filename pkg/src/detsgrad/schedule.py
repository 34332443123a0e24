"""Diminishing step sizes for the gradient (alpha) and consensus (beta) terms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import GraphTopology

# violation names, stable (used by the CLI and tests)
V_POSITIVE = "a > 0, b > 0, epsilon > 0"
V_ORDER = "0 < 3*delta1 < delta2 <= 1"
V_SUM = "delta1/2 + delta2 > 1"
V_HALF = "delta2 > 1/2"
V_SPECTRAL = "I - bL stable (b*sigma_max < 2)"
V_SPECTRAL_STRICT = "b < 1/sigma_max"
V_WARMUP = "warmup >= 0"


@dataclass(frozen=True)
class StepSchedule:
    """alpha_k = a/(eps*k+1)**delta2, beta_k = b/(eps*k+1)**delta1.

    ``b=None`` means "pick 0.9/sigma_max of whatever topology this gets bound to".
    """
    a: float
    b: float | None
    delta1: float
    delta2: float
    epsilon: float = 1.0
    warmup: int = 0

    def bind(self, topology: GraphTopology) -> "StepSchedule":
        if self.b is not None:
            return self
        return StepSchedule(self.a, 0.9 / topology.sigma_max, self.delta1, self.delta2,
                            self.epsilon, self.warmup)

    def alpha(self, k):
        return self.a / (self.epsilon * k + 1.0) ** self.delta2

    def beta(self, k):
        if self.b is None:
            raise ValueError("schedule has no b; bind() it to a topology first")
        return self.b / (self.epsilon * k + 1.0) ** self.delta1

    def gamma(self, k):
        return self.alpha(k) / self.beta(k)


PAPER_SCHEDULE = StepSchedule(a=0.1, b=0.2525, delta1=0.1, delta2=1.0, epsilon=1e-5)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "pass" if self.ok else "violated: " + "; ".join(self.violations)


def validate(schedule: StepSchedule, topology: GraphTopology | None = None,
             strict_spectral: bool = False) -> ValidationReport:
    """Check the exponent inequalities and, with a topology, the consensus gain b.

    The gain condition is that W0 = I - bL keeps eigenvalue 1 on the
    consensus direction and every other eigenvalue 1 - b*lambda_i strictly
    inside the unit circle, i.e. b*sigma_max < 2 on a connected graph.
    ``strict_spectral`` additionally demands the sufficient bound
    b*sigma_max < 1.
    """
    s = schedule
    out = []
    vals = [s.a, s.delta1, s.delta2, s.epsilon] + ([s.b] if s.b is not None else [])
    if not all(math.isfinite(v) for v in vals) or s.a <= 0 or s.epsilon <= 0 or (
            s.b is not None and s.b <= 0):
        out.append(V_POSITIVE)
    if not (0 < 3 * s.delta1 < s.delta2 <= 1):
        out.append(V_ORDER)
    if not (s.delta1 / 2 + s.delta2 > 1):
        out.append(V_SUM)
    if not (s.delta2 > 0.5):
        out.append(V_HALF)
    if s.warmup < 0:
        out.append(V_WARMUP)
    if topology is not None:
        b = s.bind(topology).b
        if not (b * topology.sigma_max < 2):
            out.append(V_SPECTRAL)
        elif strict_spectral and not (b * topology.sigma_max < 1):
            out.append(V_SPECTRAL_STRICT)
    return ValidationReport(out)


def alpha(schedule: StepSchedule, k):
    return schedule.alpha(k)


def beta(schedule: StepSchedule, k):
    return schedule.beta(k)


def gamma(schedule: StepSchedule, k):
    return schedule.gamma(k)


def summability_probe(schedule: StepSchedule, K: int) -> dict[str, float]:
    """Partial sums over k = 0..K of alpha, beta, alpha**2 and alpha*sqrt(beta)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(K + 1, dtype=np.float64)
    al = schedule.alpha(k)
    be = schedule.beta(k)
    # math.fsum keeps the long harmonic-type sums exact to the last bit
    return {
        "sum_alpha": math.fsum(al),
        "sum_beta": math.fsum(be),
        "sum_alpha_sq": math.fsum(al * al),
        "sum_alpha_sqrt_beta": math.fsum(al * np.sqrt(be)),
    }
