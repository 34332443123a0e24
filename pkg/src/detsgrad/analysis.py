"""Post-run checks: decay-rate fits, the alpha-weighted iterate sampler,
assumption probes, classifier evaluation, and per-property verdicts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonPositiveValues, ShapeMismatch, WindowTooSmall
from .problems.base import GradientDirection, ObjectiveOracle, sample_stochastic_gradient
from .schedule import StepSchedule
from .sim.metrics import RunMetrics, broadcast_accounting

MIN_FIT_POINTS = 30


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple[int, int]
    r_squared: float
    n_points: int


def fit_decay_rate(k, values, window: tuple[float, float] | None = None) -> RateFit:
    """Least-squares line through (log(k+1), log value).

    The default window is the final decade, k in [k_max/10, k_max].
    """
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if window is None:
        window = (k.max() / 10.0, k.max())
    sel = (k >= window[0]) & (k <= window[1])
    if sel.sum() < MIN_FIT_POINTS:
        raise WindowTooSmall(f"{int(sel.sum())} points in window {window}, need {MIN_FIT_POINTS}")
    x, y = np.log(k[sel] + 1.0), v[sel]
    if np.any(~(y > 0)):
        raise NonPositiveValues("decay fit needs strictly positive values")
    y = np.log(y)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, ym * ym) * len(y) else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(slope, intercept, (int(window[0]), int(window[1])), r2, int(sel.sum()))


def zK_weights(schedule: StepSchedule, K: int, ks=None) -> np.ndarray:
    """P(z^K = w_k) proportional to alpha_k, over k = 0..K (or the given ks)."""
    ks = np.arange(K + 1) if ks is None else np.asarray(ks)
    a = np.asarray(schedule.alpha(ks.astype(np.float64)), dtype=np.float64)
    return a / a.sum()


def sample_zK(history: Sequence, schedule: StepSchedule, rng: np.random.Generator, size=None):
    """Draw from an iterate history with probability alpha_k / sum_j alpha_j.

    ``history`` is either a list of iterates indexed 0..K or a list of
    ``(k, iterate)`` pairs. Returns ``(iterate, k)`` (lists of them when ``size``
    is given).
    """
    if not len(history):
        raise ValueError("empty iterate history")
    if isinstance(history[0], tuple):
        ks = np.array([h[0] for h in history])
        items = [h[1] for h in history]
    else:
        ks = np.arange(len(history))
        items = list(history)
    p = zK_weights(schedule, int(ks.max()), ks)
    pick = rng.choice(len(items), size=size, p=p)
    if size is None:
        return items[int(pick)], int(ks[pick])
    return [items[int(j)] for j in pick], ks[pick]


@dataclass
class AssumptionReport:
    unbiasedness_gap: float
    max_second_moment: float
    lipschitz_lower_bound: float
    n_points: int

    def as_dict(self):
        return dict(self.__dict__)


def probe_assumptions(oracles: Sequence[ObjectiveOracle], trajectory: Sequence[np.ndarray],
                      rng: np.random.Generator, direction: GradientDirection | None = None,
                      draws: int = 100) -> AssumptionReport:
    """Monte-Carlo diagnostics along sample points of a trajectory.

    ``trajectory`` is a list of stacked (n, d) iterates (or a list of
    d-vectors shared by all oracles). The Lipschitz figure is the largest
    observed ||grad f(a) - grad f(b)|| / ||a - b||: a lower bound, not the constant.
    """
    if not len(trajectory):
        raise ValueError("empty trajectory sample")
    direction = direction or GradientDirection.single()
    gap = second = lip = 0.0
    for i, o in enumerate(oracles):
        pts = [np.asarray(t)[i] if np.ndim(t) == 2 else np.asarray(t) for t in trajectory]
        fulls = [o.full_gradient(w) for w in pts]
        for w, full in zip(pts, fulls):
            diffs = np.zeros_like(full)
            sq = 0.0
            for _ in range(draws):
                g = sample_stochastic_gradient(o, w, direction, rng)
                diffs += g - full
                sq += float(g @ g)
            gap = max(gap, float(np.linalg.norm(diffs / draws)))
            second = max(second, sq / draws)
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                dw = np.linalg.norm(pts[a] - pts[b])
                if dw > 0:
                    lip = max(lip, float(np.linalg.norm(fulls[a] - fulls[b]) / dw))
    return AssumptionReport(gap, second, lip, len(trajectory))


def evaluate_classifier(model, params: Sequence[np.ndarray], X, y) -> dict:
    """Per-agent test accuracy and the largest pairwise gap between agents."""
    X = np.asarray(X).reshape(len(X), -1)
    if X.shape[1] != model.n_inputs:
        raise ShapeMismatch(f"test inputs have {X.shape[1]} features, model expects {model.n_inputs}")
    acc = [model.accuracy(np.asarray(p), X, np.asarray(y)) for p in params]
    return {"accuracies": acc, "spread": float(max(acc) - min(acc))}


def majority_baseline(y) -> float:
    return float(np.bincount(np.asarray(y)).max() / len(y))


# -- per-property verdicts over recorded metrics -------------------------------

def mean_series(runs: Sequence[RunMetrics], column: str) -> tuple[np.ndarray, np.ndarray]:
    ks = runs[0]["k"]
    for r in runs[1:]:
        if not np.array_equal(r["k"], ks):
            raise ValueError("runs were recorded at different iterations")
    return ks, np.mean([r[column] for r in runs], axis=0)


def check_consensus_decay(runs: Sequence[RunMetrics], delta2: float, margin: float = 0.15,
                          bound: float | None = None) -> dict:
    """Slope of mean consensus error over the final decade against -(delta2 - margin)."""
    ks, v = mean_series(runs, "consensus_error")
    fit = fit_decay_rate(ks, v)
    limit = -(delta2 - margin) if bound is None else bound
    return {"pass": fit.slope <= limit, "slope": fit.slope, "limit": limit,
            "r_squared": fit.r_squared, "window": list(fit.window)}


def check_trigger_soundness(metrics: RunMetrics) -> dict:
    v = int(np.sum(metrics["trigger_violations"]))
    worst = float(np.max(metrics["trigger_ratio_max"])) if len(metrics) else 0.0
    return {"pass": v == 0 and worst < 1.0, "violations": v, "max_ratio": worst}


def check_equivalence(a: RunMetrics, b: RunMetrics) -> dict:
    same = a == b
    diff = [c for c in a.columns if c in b.rows and a.rows[c] != b.rows[c]] if not same else []
    return {"pass": bool(same), "differing_columns": diff}


def check_lyapunov_trend(metrics: RunMetrics, smooth: int = 10, tolerance: float = 0.05) -> dict:
    """Moving-average V over the final half never rises more than ``tolerance``
    (relative to the smoothed value where the final half starts) above its running minimum."""
    v = metrics["lyapunov"]
    if len(v) < 2 * smooth:
        return {"pass": False, "reason": "too few records"}
    s = np.convolve(v, np.ones(smooth) / smooth, mode="valid")
    tail = s[len(s) // 2:]
    run_min = np.minimum.accumulate(tail)
    scale = abs(tail[0]) if tail[0] != 0 else 1.0
    worst = float(np.max(tail - run_min) / scale)
    return {"pass": worst <= tolerance, "max_relative_rise": worst}


def check_increment_decay(metrics: RunMetrics, fraction: float = 0.05, ratio: float = 0.01) -> dict:
    s = metrics["step_sq_mean"][1:]
    m = max(1, int(len(s) * fraction))
    head, tail = float(np.mean(s[:m])), float(np.mean(s[-m:]))
    return {"pass": tail < ratio * head, "head": head, "tail": tail}


def check_broadcasts(metrics: RunMetrics) -> dict:
    acc = broadcast_accounting(metrics)
    b = metrics.broadcasts
    mono = bool(np.all(np.diff(b, axis=0) >= 0))
    bounded = bool(np.all(b <= metrics["k"][:, None] + 1))
    return {"pass": mono and bounded, "monotone": mono, "bounded": bounded,
            "reduction_percent": acc["reduction_percent"], "totals": acc["totals"]}
