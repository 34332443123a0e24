"""Bulk-synchronous simulation of event-triggered distributed SGD.

Every round k: each agent draws a batch and evaluates its stochastic
gradient at w_i(k); each agent checks its trigger and, if it fires, its
current iterate becomes the broadcast value seen by its neighbours; then
every agent applies the consensus + gradient update using broadcast values.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import ConfigInvalid
from ..graph import GraphTopology, build_topology
from ..problems import BatchSampler, NetworkProblem
from ..schedule import StepSchedule, validate
from .config import SimConfig, build_problem, pooled
from .metrics import RunMetrics, broadcast_accounting

TAG_INIT = 1
TAG_SAMPLE = 2


def agent_rng(seed: int, agent: int, tag: int) -> np.random.Generator:
    """Independent stream per (master seed, agent, purpose)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(agent, tag)))


@dataclass
class RunResult:
    config: SimConfig
    metrics: RunMetrics
    W: np.ndarray
    upsilon0: float
    n_parameters: int
    schedule: StepSchedule
    topology: Optional[GraphTopology]
    accuracies: Optional[list[float]] = None
    accuracy_trace: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    wall_clock: float = 0.0
    trigger_violations: int = 0

    @property
    def broadcast_totals(self) -> np.ndarray:
        return self.metrics.broadcasts[-1]

    def summary(self) -> dict:
        out = {
            "algorithm": self.config.algorithm,
            "seed": self.config.seed,
            "iterations": self.config.max_iterations,
            "n_agents": int(self.W.shape[0]),
            "n_parameters": self.n_parameters,
            "upsilon0": self.upsilon0,
            "topology": None if self.topology is None else self.topology.name,
            "final": {c: self.metrics.rows[c][-1] for c in
                      ("consensus_error", "empirical_risk", "avg_grad_norm", "lyapunov")},
            "trigger_violations": self.trigger_violations,
            "accuracies": self.accuracies,
            "accuracy_spread": None if not self.accuracies else
            float(max(self.accuracies) - min(self.accuracies)),
            "wall_clock_seconds": self.wall_clock,
            "wall_clock_per_iteration": self.wall_clock / self.config.max_iterations,
            "config": self.config.model_dump(mode="json"),
        }
        if self.topology is not None:
            acc = broadcast_accounting(self.metrics)
            out["broadcasts"] = {k: acc[k] for k in ("totals", "mean_total", "reduction_percent")}
        return _jsonable(out)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


class _Recorder:
    def __init__(self, n, topology, schedule, problem, samples_per_epoch, centralized=False):
        self.metrics = RunMetrics(n)
        self.topology, self.schedule, self.problem = topology, schedule, problem
        self.samples_per_epoch = samples_per_epoch
        self.centralized = centralized
        self.reset_window()

    def reset_window(self):
        self.step_sq_sum = 0.0
        self.steps = 0
        self.ratio_max = 0.0
        self.violations = 0

    def record(self, k, W, counts):
        n = W.shape[0]
        risks = self.problem.risk(W)
        F = float(math.fsum(risks))
        grads = self.problem.full_grads(W)
        gsum = grads.sum(axis=0)
        avg_grad = float(gsum @ gsum) / n
        if self.centralized:
            cons = lyap = beta = float("nan")
        else:
            dev = W - W.mean(axis=0, keepdims=True)
            cons = float(np.sum(dev * dev))
            quad = float(np.sum(W * (self.topology.laplacian @ W)))
            lyap = F + quad / (2.0 * self.schedule.gamma(k))
            beta = float(self.schedule.beta(k))
        row = dict(k=int(k), epoch=float(k) / self.samples_per_epoch, alpha=float(self.schedule.alpha(k)),
                   beta=beta, consensus_error=cons, empirical_risk=F, avg_grad_norm=avg_grad,
                   lyapunov=lyap, step_sq_mean=self.step_sq_sum / self.steps if self.steps else 0.0,
                   trigger_ratio_max=self.ratio_max, trigger_violations=self.violations)
        for i in range(n):
            row[f"broadcasts_{i}"] = int(counts[i])
        self.metrics.append(**row)
        self.reset_window()


def _check_config(config: SimConfig, topology, schedule):
    if not config.override_validation:
        report = validate(schedule, topology)
        if not report.ok:
            raise ConfigInvalid(f"schedule rejected: {report}")


def run(config: SimConfig, problem: NetworkProblem | None = None) -> RunResult:
    """Execute ``config.max_iterations`` rounds and return metrics and final iterates.

    ``problem`` may be passed to reuse already-built oracles; by default it is
    built from ``config.problem``.
    """
    if config.algorithm == "centralized_sgd":
        return run_centralized_baseline(config, problem)
    try:
        topology = build_topology(config.topology)
    except Exception as exc:
        raise ConfigInvalid(f"topology: {exc}") from exc
    schedule = config.schedule.build().bind(topology)
    _check_config(config, topology, schedule)
    n = topology.n
    if problem is None:
        problem = build_problem(config, n)
    if problem.n != n:
        raise ConfigInvalid(f"problem has {problem.n} agents, topology has {n}")
    direction = config.direction.build(problem.dim)
    upsilon0 = config.upsilon0.resolve(problem.dim)
    continuous = config.algorithm == "dist_sgd_continuous"

    seed = config.seed
    W = np.ascontiguousarray(problem.init_params([agent_rng(seed, i, TAG_INIT) for i in range(n)]))
    W_hat = W.copy()
    G = np.empty_like(W)
    samplers = [BatchSampler(agent_rng(seed, i, TAG_SAMPLE), o.n_samples, direction.batch_size)
                for i, o in enumerate(problem.oracles)]
    fired = np.zeros(n, dtype=np.bool_)
    post_l1 = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    indptr = np.ascontiguousarray(topology.indptr)
    indices = np.ascontiguousarray(topology.indices)
    spe = np.mean([o.n_samples for o in problem.oracles]) / direction.batch_size
    rec = _Recorder(n, topology, schedule, problem, spe)
    result = RunResult(config, rec.metrics, W, upsilon0, problem.dim, schedule, topology)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    K = config.max_iterations
    t0 = time.perf_counter()
    try:
        for k in range(K):
            if k % config.cadence == 0:
                rec.record(k, W, counts)
                if config.keep_iterates:
                    result.iterates.append((k, W.copy()))
            if config.evaluate_every and k % config.evaluate_every == 0:
                result.accuracy_trace.append((k, problem.evaluate(W)))
            batches = [s.next() for s in samplers]
            problem.stochastic_grads(W, batches, G, pool=pool)
            if direction.mode == "scaled":
                G[:] = G @ direction.H.T
            alpha_k = schedule.alpha(k)
            beta_k = schedule.beta(k)
            threshold = upsilon0 * alpha_k
            force = continuous or k == 0 or k < schedule.warmup
            kernels.trigger_broadcast(W, W_hat, threshold, force, fired, post_l1)
            counts += fired
            if not force:
                worst = float(post_l1.max())
                ratio = worst / threshold if threshold > 0 else (0.0 if worst == 0 else math.inf)
                rec.ratio_max = max(rec.ratio_max, ratio)
                rec.violations += int(np.count_nonzero(post_l1 >= threshold) if threshold > 0
                                      else np.count_nonzero(post_l1 > 0))
            rec.step_sq_sum += kernels.consensus_update(W, W_hat, indptr, indices, beta_k, alpha_k, G)
            rec.steps += 1
    finally:
        if pool is not None:
            pool.shutdown()
    result.wall_clock = time.perf_counter() - t0
    rec.record(K, W, counts)
    if config.keep_iterates:
        result.iterates.append((K, W.copy()))
    result.trigger_violations = int(np.sum(rec.metrics["trigger_violations"]))
    result.accuracies = problem.evaluate(W)
    return result


def run_centralized_baseline(config: SimConfig, problem: NetworkProblem | None = None) -> RunResult:
    """Plain SGD on the pooled shards: one node, alpha_k steps, no consensus term.

    ``problem`` may be the distributed problem (it gets pooled) or already a
    single-oracle problem.
    """
    schedule = config.schedule.build()
    if schedule.b is None:
        schedule = StepSchedule(schedule.a, 1.0, schedule.delta1, schedule.delta2,
                                schedule.epsilon, schedule.warmup)
    if problem is None:
        try:
            n = build_topology(config.topology).n
        except Exception:
            n = 10
        problem = build_problem(config, n)
    if problem.n > 1:
        problem = pooled(problem)
    direction = config.direction.build(problem.dim)
    W = np.ascontiguousarray(problem.init_params([agent_rng(config.seed, 0, TAG_INIT)]))
    G = np.empty_like(W)
    sampler = BatchSampler(agent_rng(config.seed, 0, TAG_SAMPLE), problem.oracles[0].n_samples,
                           direction.batch_size)
    no_nbrs = np.zeros(2, dtype=np.int64), np.zeros(0, dtype=np.int64)
    counts = np.zeros(1, dtype=np.int64)
    spe = problem.oracles[0].n_samples / direction.batch_size
    rec = _Recorder(1, None, schedule, problem, spe, centralized=True)
    result = RunResult(config, rec.metrics, W, 0.0, problem.dim, schedule, None)
    K = config.max_iterations
    t0 = time.perf_counter()
    for k in range(K):
        if k % config.cadence == 0:
            rec.record(k, W, counts)
            if config.keep_iterates:
                result.iterates.append((k, W.copy()))
        problem.stochastic_grads(W, [sampler.next()], G)
        if direction.mode == "scaled":
            G[:] = G @ direction.H.T
        rec.step_sq_sum += kernels.consensus_update(W, W, *no_nbrs, 0.0, schedule.alpha(k), G)
        rec.steps += 1
    result.wall_clock = time.perf_counter() - t0
    rec.record(K, W, counts)
    if config.keep_iterates:
        result.iterates.append((K, W.copy()))
    result.accuracies = problem.evaluate(W)
    return result
