"""Small non-convex test problems with analytic gradients.

Each agent holds a shard of samples; the loss of one sample is cheap and
the shard mean is the local objective. All problems are bounded below.
"""
from __future__ import annotations

import numpy as np

from ..errors import UnknownProblem
from .base import NetworkProblem, ObjectiveOracle

RASTRIGIN_AMPLITUDE = 0.1
TWO_PI = 2.0 * np.pi


# Kernels take stacked inputs: W (n, d) and selected samples (n, b, ...).

def quartic_loss(W, S):
    Wb = W[:, None, :]
    return np.mean(np.sum(0.25 * Wb**4 - 0.5 * S * Wb**2, axis=-1), axis=-1)


def quartic_grad(W, S):
    return W**3 - np.mean(S, axis=1) * W


def rastrigin_loss(W, C):
    r = W[:, None, :] - C
    per = 0.5 * r * r + RASTRIGIN_AMPLITUDE * (1.0 - np.cos(TWO_PI * r))
    return np.mean(np.sum(per, axis=-1), axis=-1)


def rastrigin_grad(W, C):
    r = W[:, None, :] - C
    return np.mean(r + RASTRIGIN_AMPLITUDE * TWO_PI * np.sin(TWO_PI * r), axis=1)


def _residual(W, X, y):
    return y - np.einsum("nbd,nd->nb", X, W)


def cauchy_loss(W, X, y):
    r = _residual(W, X, y)
    return np.mean(0.5 * np.log1p(r * r), axis=-1)


def cauchy_grad(W, X, y):
    r = _residual(W, X, y)
    coef = -r / (1.0 + r * r)
    return np.einsum("nb,nbd->nd", coef, X) / X.shape[1]


def lsq_loss(W, X, y):
    r = _residual(W, X, y)
    return np.mean(0.5 * r * r, axis=-1)


def lsq_grad(W, X, y):
    r = _residual(W, X, y)
    return np.einsum("nb,nbd->nd", -r, X) / X.shape[1]


_KERNELS = {
    "quartic-saddle": (quartic_loss, quartic_grad),
    "rastrigin-sum": (rastrigin_loss, rastrigin_grad),
    "nonconvex-regression": (cauchy_loss, cauchy_grad),
    "least-squares": (lsq_loss, lsq_grad),
}
SYNTHETIC_NAMES = tuple(_KERNELS)


class SyntheticOracle(ObjectiveOracle):
    """One agent's shard of a synthetic problem.

    ``data`` is a tuple of arrays sharing a leading sample axis:
    ``(S,)`` for quartic-saddle, ``(C,)`` for rastrigin-sum and ``(X, y)``
    for the regression problems.
    """

    def __init__(self, name: str, data: tuple, init_scale: float = 1.0):
        if name not in _KERNELS:
            raise UnknownProblem(f"unknown synthetic problem {name!r}; known: {SYNTHETIC_NAMES}")
        self.name = name
        self.data = tuple(np.asarray(a, dtype=np.float64) for a in data)
        self.n_samples = self.data[0].shape[0]
        self.dim = self.data[0].shape[1]
        self.init_scale = init_scale
        self._loss_k, self._grad_k = _KERNELS[name]

    def _sel(self, idx):
        return tuple(a[idx][None] for a in self.data)

    def _loss(self, w, idx):
        return float(self._loss_k(w[None], *self._sel(idx))[0])

    def _grad(self, w, idx):
        return self._grad_k(w[None], *self._sel(idx))[0]

    def init_params(self, rng):
        return self.init_scale * rng.standard_normal(self.dim)


class SyntheticProblem(NetworkProblem):
    """Vectorises the per-round gradient across agents when shards are equal-sized."""

    def __init__(self, oracles, name=""):
        super().__init__(oracles, name=name)
        self._grad_k = oracles[0]._grad_k
        sizes = {o.n_samples for o in oracles}
        self._stacked = tuple(np.stack(arrs) for arrs in zip(*(o.data for o in oracles))) \
            if len(sizes) == 1 else None

    def stochastic_grads(self, W, batches, out, agents=None, pool=None):
        if self._stacked is None or agents is not None:
            return super().stochastic_grads(W, batches, out, agents, pool)
        B = np.asarray(batches)
        rows = np.arange(self.n)[:, None]
        out[:] = self._grad_k(W, *(a[rows, B] for a in self._stacked))


def make_synthetic(name: str, dim: int, n_agents: int, seed: int,
                   samples_per_agent: int = 64) -> SyntheticProblem:
    """Build ``n_agents`` heterogeneous shards of a named synthetic problem.

    * quartic-saddle: loss(w; s) = sum_d w_d^4/4 - s_d w_d^2/2. The origin is a
      critical point of every f_i; agents differ in their curvature centres.
    * rastrigin-sum: loss(w; c) = sum_d (w_d-c_d)^2/2 + A(1 - cos 2pi(w_d-c_d)).
    * nonconvex-regression: Cauchy loss log(1 + r^2)/2 of a linear model whose
      true coefficients differ per agent.
    * least-squares: r^2/2 of an exactly realisable linear model (convex sanity case).
    """
    if name not in _KERNELS:
        raise UnknownProblem(f"unknown synthetic problem {name!r}; known: {SYNTHETIC_NAMES}")
    if dim < 1 or n_agents < 1:
        raise ValueError("dim and n_agents must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xD47A,)))
    m = samples_per_agent
    oracles = []
    for _ in range(n_agents):
        if name == "quartic-saddle":
            centre = rng.uniform(-0.5, 1.5, size=dim)
            data = (centre + 0.5 * rng.standard_normal((m, dim)),)
        elif name == "rastrigin-sum":
            centre = rng.uniform(-1.0, 1.0, size=dim)
            data = (centre + 0.3 * rng.standard_normal((m, dim)),)
        else:
            theta = rng.standard_normal(dim)
            X = rng.standard_normal((m, dim)) / np.sqrt(dim)
            y = X @ theta
            if name == "nonconvex-regression":
                y = y + 0.1 * rng.standard_normal(m)
            data = (X, y)
        oracles.append(SyntheticOracle(name, data))
    return SyntheticProblem(oracles, name=name)
