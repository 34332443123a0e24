"""Objective oracles, gradient directions and per-agent batch sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyShard


class ObjectiveOracle:
    """Local objective f_i(w) = mean over the shard of loss(w, sample).

    Subclasses implement ``_loss(w, idx)`` and ``_grad(w, idx)`` for a sorted
    index array into the local shard.
    """

    dim: int
    n_samples: int

    def loss_at(self, w: np.ndarray, idx) -> float:
        return self._loss(np.asarray(w), np.asarray(idx, dtype=np.int64))

    def grad_at(self, w: np.ndarray, idx) -> np.ndarray:
        w = np.asarray(w)
        if w.shape != (self.dim,):
            raise DimensionMismatch(f"expected w of shape ({self.dim},), got {w.shape}")
        return self._grad(w, np.asarray(idx, dtype=np.int64))

    def full_loss(self, w: np.ndarray) -> float:
        return self.loss_at(w, self.all_indices)

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.grad_at(w, self.all_indices)

    @property
    def all_indices(self) -> np.ndarray:
        return np.arange(self.n_samples, dtype=np.int64)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def _loss(self, w, idx):  # pragma: no cover
        raise NotImplementedError

    def _grad(self, w, idx):  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class GradientDirection:
    """How g_i is formed: one sample, a mini-batch mean, or a scaled mini-batch mean."""
    mode: str = "single"
    batch_size: int = 1
    H: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("single", "minibatch", "scaled"):
            raise ValueError(f"unknown direction mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode == "single" and self.batch_size != 1:
            raise ValueError("single mode uses exactly one sample")
        if self.mode == "scaled":
            if self.H is None:
                raise ValueError("scaled mode needs H")
            H = np.asarray(self.H, dtype=np.float64)
            if H.ndim != 2 or H.shape[0] != H.shape[1] or not np.array_equal(H, H.T):
                raise ValueError("H must be a symmetric square matrix")
            try:
                np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise ValueError("H must be positive definite") from None

    @classmethod
    def single(cls):
        return cls("single", 1)

    @classmethod
    def minibatch(cls, n: int):
        return cls("minibatch", n)

    @classmethod
    def scaled(cls, n: int, H):
        return cls("scaled", n, np.asarray(H, dtype=np.float64))


def draw_batch(rng: np.random.Generator, m: int, b: int) -> np.ndarray:
    """Sorted sample indices: without replacement inside the batch."""
    if m < 1:
        raise EmptyShard("cannot sample from an empty shard")
    if b == 1:
        return rng.integers(0, m, size=1)
    if b > m:
        raise ValueError(f"batch of {b} exceeds shard of {m}")
    return np.sort(rng.choice(m, size=b, replace=False))


class BatchSampler:
    """Per-agent index stream; single-sample draws are pre-drawn in blocks."""

    BLOCK = 1024

    def __init__(self, rng: np.random.Generator, m: int, b: int):
        if m < 1:
            raise EmptyShard("cannot sample from an empty shard")
        if b > m:
            raise ValueError(f"batch of {b} exceeds shard of {m}")
        self.rng, self.m, self.b = rng, m, b
        self._buf = np.empty((0, 1), dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self.b != 1:
            return draw_batch(self.rng, self.m, self.b)
        if self._pos == len(self._buf):
            self._buf = self.rng.integers(0, self.m, size=(self.BLOCK, 1))
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


def apply_direction(direction: GradientDirection, g: np.ndarray) -> np.ndarray:
    if direction.mode == "scaled":
        return direction.H @ g
    return g


def sample_stochastic_gradient(oracle: ObjectiveOracle, w: np.ndarray,
                               direction: GradientDirection,
                               rng: np.random.Generator) -> np.ndarray:
    idx = draw_batch(rng, oracle.n_samples, direction.batch_size)
    return apply_direction(direction, oracle.grad_at(w, idx))


class NetworkProblem:
    """The n local oracles of one experiment plus optional test data.

    ``stochastic_grads`` is the engine's entry point; subclasses may override it
    with a vectorised path across agents.
    """

    def __init__(self, oracles: Sequence[ObjectiveOracle], test_data=None, name: str = ""):
        if len(oracles) < 1:
            raise ValueError("need at least one oracle")
        dims = {o.dim for o in oracles}
        if len(dims) != 1:
            raise DimensionMismatch(f"oracles disagree on dimension: {sorted(dims)}")
        self.oracles = list(oracles)
        self.dim = dims.pop()
        self.test_data = test_data
        self.name = name

    @property
    def n(self) -> int:
        return len(self.oracles)

    def stochastic_grads(self, W: np.ndarray, batches: Sequence[np.ndarray], out: np.ndarray,
                         agents=None, pool=None) -> None:
        agents = range(self.n) if agents is None else agents

        def one(i):
            out[i] = self.oracles[i].grad_at(W[i], batches[i])

        if pool is None:
            for i in agents:
                one(i)
        else:
            list(pool.map(one, agents))

    def risk(self, W: np.ndarray) -> np.ndarray:
        """Per-agent f_i(w_i) on full shards."""
        return np.array([o.full_loss(W[i]) for i, o in enumerate(self.oracles)])

    def full_grads(self, W: np.ndarray) -> np.ndarray:
        return np.stack([o.full_gradient(W[i]) for i, o in enumerate(self.oracles)])

    def init_params(self, rngs) -> np.ndarray:
        return np.stack([o.init_params(r) for o, r in zip(self.oracles, rngs)])

    def evaluate(self, W: np.ndarray):
        """Per-agent test accuracy, or None when the problem has no test set."""
        return None
