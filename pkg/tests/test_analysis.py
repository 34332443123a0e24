import numpy as np
import pytest
from scipy import stats

from detsgrad.analysis import (check_broadcasts, check_consensus_decay, check_equivalence,
                               check_lyapunov_trend, evaluate_classifier, fit_decay_rate,
                               majority_baseline, probe_assumptions, sample_zK, zK_weights)
from detsgrad.errors import NonPositiveValues, ShapeMismatch, WindowTooSmall
from detsgrad.problems import MLPClassifier, make_synthetic
from detsgrad.problems.base import GradientDirection, ObjectiveOracle
from detsgrad.problems.synthetic import SyntheticOracle
from detsgrad.schedule import StepSchedule
from detsgrad.sim import RunMetrics

K = np.arange(1, 10001, 10)


def test_exact_power_law():
    f = fit_decay_rate(K, (K + 1.0) ** -1)
    assert abs(f.slope + 1) < 1e-10 and f.r_squared == pytest.approx(1.0, abs=1e-12)


def test_perturbed_power_law():
    f = fit_decay_rate(K, 5 * (K + 1.0) ** -0.7 * (1 + 0.01 * np.sin(K)))
    assert -0.75 <= f.slope <= -0.65


def test_constant_series():
    f = fit_decay_rate(K, np.full(len(K), 3.0))
    assert abs(f.slope) < 1e-10 and 0 <= f.r_squared <= 1


@pytest.mark.parametrize("p", [0.3, 0.7, 1.0, 1.7])
def test_recovers_exponent_under_noise(p):
    rng = np.random.default_rng(int(p * 10))
    v = (K + 1.0) ** -p * (1 + 0.01 * rng.standard_normal(len(K)))
    assert abs(fit_decay_rate(K, v).slope + p) < 0.05


def test_fit_errors():
    with pytest.raises(WindowTooSmall):
        fit_decay_rate(np.arange(20), np.ones(20))
    v = (K + 1.0) ** -1
    v[-1] = 0
    with pytest.raises(NonPositiveValues):
        fit_decay_rate(K, v)


def test_explicit_window():
    f = fit_decay_rate(K, (K + 1.0) ** -2, window=(100, 2000))
    assert f.window == (100, 2000) and f.slope == pytest.approx(-2, abs=1e-10)


# -- z^K sampler ---------------------------------------------------------------

def test_zK_single_iterate():
    s = StepSchedule(0.1, 0.2, 0.1, 1.0)
    rng = np.random.default_rng(0)
    assert all(sample_zK(["w0"], s, rng) == ("w0", 0) for _ in range(20))


def test_zK_uniform_for_constant_alpha():
    s = StepSchedule(0.1, 0.2, 0.0, 0.0)  # degenerate: alpha constant
    rng = np.random.default_rng(1)
    _, ks = sample_zK(list(range(10)), s, rng, size=100000)
    assert stats.chisquare(np.bincount(ks, minlength=10)).pvalue > 0.01


def test_zK_harmonic_weight():
    s = StepSchedule(1.0, 0.2, 0.1, 1.0)
    w = zK_weights(s, 9)
    H10 = sum(1 / j for j in range(1, 11))
    assert w[0] == pytest.approx(1 / H10, abs=1e-12)
    assert abs(w.sum() - 1) < 1e-12


def test_zK_pairs_history():
    s = StepSchedule(1.0, 0.2, 0.1, 1.0)
    hist = [(0, "a"), (10, "b"), (20, "c")]
    it, k = sample_zK(hist, s, np.random.default_rng(0))
    assert (k, it) in {(0, "a"), (10, "b"), (20, "c")}
    with pytest.raises(ValueError):
        sample_zK([], s, np.random.default_rng(0))

# -- assumption probes ------------------------------------------------------------


class _Deterministic(ObjectiveOracle):
    dim, n_samples = 2, 1

    def _loss(self, w, idx):
        return float(w @ w)

    def _grad(self, w, idx):
        return 2 * w


class _Biased(ObjectiveOracle):
    """Stochastic gradient = base oracle's plus a constant c on every draw,
    while the full gradient stays unbiased."""

    def __init__(self, base, c):
        self.base, self.c = base, c
        self.dim, self.n_samples = base.dim, base.n_samples

    def _loss(self, w, idx):
        return self.base.loss_at(w, idx)

    def _grad(self, w, idx):
        g = self.base.grad_at(w, idx)
        return g if len(idx) == self.n_samples else g + self.c

    def full_gradient(self, w):
        return self.base.full_gradient(w)


def test_deterministic_oracle_zero_gap():
    r = probe_assumptions([_Deterministic()], [np.ones(2), np.zeros(2)], np.random.default_rng(0))
    assert r.unbiasedness_gap == 0.0
    assert r.lipschitz_lower_bound == pytest.approx(2.0)


def test_least_squares_lipschitz_below_hessian_norm():
    p = make_synthetic("least-squares", 4, 2, 0, samples_per_agent=30)
    rng = np.random.default_rng(2)
    traj = [rng.standard_normal((2, 4)) for _ in range(15)]
    r = probe_assumptions(p.oracles, traj, rng, draws=20)
    bound = max(np.linalg.svd(o.data[0].T @ o.data[0], compute_uv=False)[0] / o.n_samples for o in p.oracles)
    assert r.lipschitz_lower_bound <= bound + 1e-9
    assert np.isfinite(r.max_second_moment) and r.max_second_moment > 0


def test_injected_bias_detected():
    base = make_synthetic("rastrigin-sum", 3, 1, 0, samples_per_agent=50).oracles[0]
    c = np.array([0.3, -0.2, 0.1])
    r = probe_assumptions([_Biased(base, c)], [np.zeros(3)], np.random.default_rng(0), draws=20000)
    assert r.unbiasedness_gap == pytest.approx(np.linalg.norm(c), abs=0.03)
    r0 = probe_assumptions([base], [np.zeros(3)], np.random.default_rng(0), draws=20000)
    assert r0.unbiasedness_gap < 0.03

# -- classifier evaluation ----------------------------------------------------------


def test_untrained_model_near_chance():
    rng = np.random.default_rng(0)
    m = MLPClassifier((8, 6, 5))
    theta = m.init_params(rng)
    W, b = m.unpack(theta)[-1]
    W[:] = 0
    X = rng.random((1000, 8))
    y = np.repeat(np.arange(5), 200)
    rep = evaluate_classifier(m, [theta], X, y)
    assert abs(rep["accuracies"][0] - 0.2) <= 0.05


def test_identical_agents_zero_spread_and_permutation_invariance():
    rng = np.random.default_rng(1)
    m = MLPClassifier((8, 6, 3))
    theta = m.init_params(rng)
    X, y = rng.random((300, 8)), rng.integers(0, 3, 300)
    rep = evaluate_classifier(m, [theta] * 4, X, y)
    assert rep["spread"] == 0.0
    perm = rng.permutation(300)
    assert evaluate_classifier(m, [theta], X[perm], y[perm])["accuracies"][0] == rep["accuracies"][0]
    with pytest.raises(ShapeMismatch):
        evaluate_classifier(m, [theta], X[:, :5], y)
    assert majority_baseline(np.array([0, 0, 1, 2])) == 0.5

# -- verdicts ------------------------------------------------------------------------


def _metrics(ks, cons, lyap=None, n=1):
    m = RunMetrics(n)
    for i, k in enumerate(ks):
        m.append(k=int(k), epoch=0.0, alpha=0.1, beta=0.1, consensus_error=float(cons[i]),
                 empirical_risk=0.0, avg_grad_norm=0.0,
                 lyapunov=float(lyap[i]) if lyap is not None else 0.0,
                 step_sq_mean=0.0, trigger_ratio_max=0.5, trigger_violations=0,
                 **{f"broadcasts_{j}": min(int(k), 10) for j in range(n)})
    return m


def test_consensus_verdict():
    ks = np.arange(0, 100001, 100)
    good = [_metrics(ks, (ks + 1.0) ** -1.0)]
    bad = [_metrics(ks, (ks + 1.0) ** -0.5)]
    assert check_consensus_decay(good, 1.0)["pass"]
    assert not check_consensus_decay(bad, 1.0)["pass"]


def test_lyapunov_verdict():
    ks = np.arange(200)
    assert check_lyapunov_trend(_metrics(ks, np.ones(200), 1 / (ks + 1.0) + 1))["pass"]
    assert not check_lyapunov_trend(_metrics(ks, np.ones(200), 1 + ks / 100.0))["pass"]


def test_equivalence_and_broadcast_verdicts():
    ks = np.arange(0, 50)
    a = _metrics(ks, np.ones(50), n=2)
    assert check_equivalence(a, _metrics(ks, np.ones(50), n=2))["pass"]
    diff = check_equivalence(a, _metrics(ks, np.full(50, 2.0), n=2))
    assert not diff["pass"] and diff["differing_columns"] == ["consensus_error"]
    assert check_broadcasts(a)["pass"]
