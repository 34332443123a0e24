import math

import numpy as np
import pytest

from detsgrad.agent import run_agents
from detsgrad.errors import ConfigInvalid
from detsgrad.graph import ring
from detsgrad.presets import presets
from detsgrad.problems import BatchSampler, make_synthetic
from detsgrad.problems.synthetic import SyntheticOracle, SyntheticProblem
from detsgrad.sim import RunMetrics, SimConfig, broadcast_accounting, run, run_centralized_baseline
from detsgrad.sim.config import build_problem, pooled
from detsgrad.sim.engine import TAG_SAMPLE, agent_rng
from detsgrad.sim.metrics import MetricsFormatError


def quartic(**kw):
    base = dict(topology="ring(10)",
                schedule=dict(a=0.1, b=0.2525, delta1=0.1, delta2=1.0, epsilon=1e-5),
                problem=dict(kind="synthetic", name="quartic-saddle", dim=5),
                upsilon0=dict(mode="per_parameter", value=0.2),
                max_iterations=2000, seed=0, cadence=50)
    base.update(kw)
    return SimConfig.model_validate(base)


def test_zero_threshold_equals_continuous_baseline():
    a = run(quartic(upsilon0=dict(mode="absolute", value=0.0)))
    b = run(quartic(algorithm="dist_sgd_continuous"))
    assert a.metrics == b.metrics
    assert np.array_equal(a.W, b.W)
    assert a.metrics.to_csv() == b.metrics.to_csv()


def test_engine_matches_message_passing_reference():
    cfg = quartic(max_iterations=1500, upsilon0=dict(mode="absolute", value=2.0))
    res = run(cfg.replace(keep_iterates=True))
    problem = build_problem(cfg, 10)
    W0 = res.iterates[0][1]
    samplers = [BatchSampler(agent_rng(0, i, TAG_SAMPLE), o.n_samples, 1) for i, o in enumerate(problem.oracles)]
    W, agents = run_agents(ring(10), res.schedule, W0,
                           lambda k, i, w: problem.oracles[i].grad_at(w, samplers[i].next()),
                           1500, res.upsilon0)
    assert np.max(np.abs(W - res.W)) < 1e-12
    assert [a.broadcast_count for a in agents] == list(res.broadcast_totals)


def test_trigger_soundness_and_saving():
    res = run(quartic(max_iterations=5000))
    assert res.trigger_violations == 0
    assert np.all(res.metrics["trigger_ratio_max"] < 1.0)
    assert np.all(res.broadcast_totals < 5000)


def test_broadcast_counts_monotone_and_bounded():
    m = run(quartic(max_iterations=1000)).metrics
    b = m.broadcasts
    assert np.all(np.diff(b, axis=0) >= 0)
    assert np.all(b <= m["k"][:, None] + 1)
    assert np.all(m["consensus_error"] >= 0)


@pytest.mark.parametrize("threads", [2, 4])
def test_thread_count_does_not_change_csv(threads):
    a = run(quartic(max_iterations=800)).metrics.to_csv()
    b = run(quartic(max_iterations=800, threads=threads)).metrics.to_csv()
    assert a == b


def test_seed_changes_results():
    a = run(quartic(max_iterations=200)).metrics
    b = run(quartic(max_iterations=200, seed=1)).metrics
    assert a != b


def test_recorded_quantities_against_direct_formulas():
    cfg = quartic(max_iterations=300, cadence=100, keep_iterates=True)
    res = run(cfg)
    problem = build_problem(cfg, 10)
    L = ring(10).laplacian
    for row, (k, W) in enumerate(res.iterates):
        assert res.metrics["k"][row] == k
        wbar = W.mean(axis=0)
        cons = sum(float((W[i] - wbar) @ (W[i] - wbar)) for i in range(10))
        F = sum(problem.oracles[i].full_loss(W[i]) for i in range(10))
        gsum = sum(problem.oracles[i].full_gradient(W[i]) for i in range(10))
        # stacked average gradient: n copies of the mean gradient
        avg = np.tile(gsum / 10, 10)
        w = W.ravel()
        quad = w @ np.kron(L, np.eye(5)) @ w
        gamma = res.schedule.alpha(k) / res.schedule.beta(k)
        assert res.metrics["consensus_error"][row] == pytest.approx(cons, rel=1e-12)
        assert res.metrics["empirical_risk"][row] == pytest.approx(F, rel=1e-12)
        assert res.metrics["avg_grad_norm"][row] == pytest.approx(avg @ avg, rel=1e-10)
        assert res.metrics["lyapunov"][row] == pytest.approx(F + quad / (2 * gamma), rel=1e-10)


def test_quartic_consensus_shrinks_by_three_orders():
    cfg = SimConfig.model_validate(dict(presets()["desk-quartic-detsgrad"], max_iterations=50000, cadence=1000))
    c = run(cfg).metrics["consensus_error"]
    assert c[-1] < 1e-3 * c[0]


def test_invalid_schedule_blocks_run_unless_overridden():
    bad = quartic(schedule=dict(a=0.1, b=0.2, delta1=0.4, delta2=1.0), max_iterations=10)
    with pytest.raises(ConfigInvalid, match="3\\*delta1"):
        run(bad)
    assert run(bad.replace(override_validation=True)).metrics["k"][-1] == 10


def test_single_node_topology_rejected():
    with pytest.raises(ConfigInvalid):
        run(quartic(topology="ring(1)", max_iterations=5))


def test_centralized_convex_quadratic_converges():
    # exactly realisable least squares: gradient noise vanishes at the optimum,
    # so with a*mu > 1 the error decays faster than 1/k
    rng = np.random.default_rng(0)
    X = rng.standard_normal((32, 3)) / np.sqrt(3)
    mu = np.linalg.eigvalsh(X.T @ X / 32)[0]
    problem = SyntheticProblem([SyntheticOracle("least-squares", (X, X @ rng.standard_normal(3)))])
    a = 10.0
    assert a * mu > 2
    cfg = SimConfig.model_validate(dict(
        algorithm="centralized_sgd", schedule=dict(a=a, delta1=0.1, delta2=1.0),
        problem=dict(kind="synthetic", name="least-squares", dim=3),
        max_iterations=100000, cadence=10000))
    res = run(cfg, problem)
    m = res.metrics
    assert math.sqrt(m["avg_grad_norm"][-1]) < 1e-6
    assert all(math.isnan(v) for v in m["consensus_error"])
    assert res.topology is None and "broadcasts" not in res.summary()


def test_pooled_size_is_sum_of_shards():
    p = make_synthetic("rastrigin-sum", 2, 5, 0, samples_per_agent=7)
    assert pooled(p).oracles[0].n_samples == 35


def test_centralized_entry_points_agree():
    cfg = quartic(algorithm="centralized_sgd", max_iterations=300)
    assert run(cfg).metrics == run_centralized_baseline(cfg).metrics


def test_increment_decay_and_lyapunov_trend():
    from detsgrad.analysis import check_increment_decay, check_lyapunov_trend
    m = run(quartic(schedule=dict(a=0.1, b=0.2525, delta1=0.1, delta2=1.0, epsilon=1.0),
                    max_iterations=20000, cadence=20)).metrics
    assert check_increment_decay(m)["pass"]
    assert check_lyapunov_trend(m)["pass"]

# -- metrics --------------------------------------------------------------------


def test_csv_round_trip_exact(tmp_path):
    m = run(quartic(max_iterations=300)).metrics
    p = tmp_path / "m.csv"
    m.to_csv(p)
    back = RunMetrics.from_csv(p)
    assert back == m and back.to_csv() == m.to_csv()


def test_csv_round_trip_nan():
    m = run(quartic(algorithm="centralized_sgd", max_iterations=100)).metrics
    assert RunMetrics.parse_csv(m.to_csv()) == m


def test_csv_corruption_reports_row():
    text = run(quartic(max_iterations=300)).metrics.to_csv().splitlines()
    text[3] = text[3].replace(",", ",x", 1)
    with pytest.raises(MetricsFormatError) as ei:
        RunMetrics.parse_csv("\n".join(text))
    assert ei.value.row == 4
    with pytest.raises(MetricsFormatError):
        RunMetrics.parse_csv("")


def test_accounting_zero_threshold_is_zero_reduction():
    m = run(quartic(max_iterations=400, upsilon0=dict(mode="absolute", value=0.0))).metrics
    assert broadcast_accounting(m)["reduction_percent"] == 0.0


@pytest.mark.parametrize("warmup", [0, 1, 37])
def test_accounting_agent_that_never_triggers(warmup):
    cfg = quartic(max_iterations=500, upsilon0=dict(mode="absolute", value=1e12),
                  schedule=dict(a=0.1, b=0.2525, delta1=0.1, delta2=1.0, epsilon=1e-5, warmup=warmup))
    totals = broadcast_accounting(run(cfg).metrics)["totals"]
    # rounds 0..warmup-1 are forced, and round 0 always sends
    assert totals == [max(warmup, 1)] * 10


def test_accounting_paper_inputs():
    acc = broadcast_accounting(totals=[61702] * 10, iterations=240000)
    assert abs(acc["reduction_percent"] - 74.2) <= 0.1


def test_thread_pool_path_with_unequal_shards():
    rng = np.random.default_rng(4)
    oracles = [SyntheticOracle("rastrigin-sum", (rng.standard_normal((10 + i, 3)),)) for i in range(6)]
    cfg = quartic(topology="ring(6)", max_iterations=500,
                  problem=dict(kind="synthetic", name="rastrigin-sum", dim=3))
    a = run(cfg, SyntheticProblem(oracles))
    b = run(cfg.replace(threads=3), SyntheticProblem(oracles))
    assert SyntheticProblem(oracles)._stacked is None
    assert a.metrics.to_csv() == b.metrics.to_csv()
