"""Fully connected softmax classifier with hand-written backprop.

Parameters live in one flat vector, layer-major; within a layer the weight
matrix (fan_in x fan_out, row-major) comes before the bias.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ShapeMismatch
from .base import NetworkProblem, ObjectiveOracle


def _relu(z):
    return np.maximum(z, 0.0)


def _tanh(z):
    return np.tanh(z)


class MLPClassifier:
    """Architecture and parameter layout; :meth:`bind` attaches a data shard."""

    def __init__(self, layer_sizes: Sequence[int], activation: str = "relu",
                 dtype=np.float64, seed: int | None = None):
        if len(layer_sizes) < 2:
            raise ShapeMismatch("need at least an input and an output layer")
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.activation = activation
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.shapes = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.shapes.append((offset, fan_in, fan_out))
            offset += fan_in * fan_out + fan_out
        self.dim = offset

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    def unpack(self, theta: np.ndarray):
        """List of (W, b) views into ``theta``."""
        out = []
        for off, fi, fo in self.shapes:
            W = theta[off:off + fi * fo].reshape(fi, fo)
            b = theta[off + fi * fo:off + fi * fo + fo]
            out.append((W, b))
        return out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        theta = np.zeros(self.dim, dtype=self.dtype)
        for W, _ in self.unpack(theta):
            fi, fo = W.shape
            lim = np.sqrt(6.0 / (fi + fo))
            W[:] = rng.uniform(-lim, lim, size=W.shape)
        return theta

    def logits(self, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
        act = _relu if self.activation == "relu" else _tanh
        h = X
        layers = self.unpack(theta)
        for W, b in layers[:-1]:
            h = act(h @ W + b)
        W, b = layers[-1]
        return h @ W + b

    def predict(self, theta, X):
        return np.argmax(self.logits(theta, X), axis=1)

    def loss_and_grad(self, theta, X, y, need_grad=True):
        """Mean softmax cross-entropy over the rows of X and, optionally, its gradient."""
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ShapeMismatch(f"expected inputs of shape (*, {self.n_inputs}), got {X.shape}")
        layers = self.unpack(theta)
        hs, zs = [X], []
        h = X
        for li, (W, b) in enumerate(layers):
            z = h @ W + b
            zs.append(z)
            if li < len(layers) - 1:
                h = _relu(z) if self.activation == "relu" else np.tanh(z)
                hs.append(h)
        z = zs[-1]
        zmax = z.max(axis=1, keepdims=True)
        ez = np.exp(z - zmax)
        sez = ez.sum(axis=1, keepdims=True)
        rows = np.arange(len(y))
        lse = zmax[:, 0] + np.log(sez[:, 0])
        loss = float(np.mean(lse - z[rows, y]))
        if not need_grad:
            return loss, None
        grad = np.empty(self.dim, dtype=self.dtype)
        glayers = self.unpack(grad)
        dz = ez / sez
        dz[rows, y] -= 1.0
        dz /= len(y)
        for li in range(len(layers) - 1, -1, -1):
            gW, gb = glayers[li]
            np.matmul(hs[li].T, dz, out=gW)
            np.sum(dz, axis=0, out=gb)
            if li:
                dh = dz @ layers[li][0].T
                if self.activation == "relu":
                    dz = dh * (zs[li - 1] > 0)
                else:
                    dz = dh * (1.0 - hs[li] ** 2)
        return loss, grad

    def bind(self, X: np.ndarray, y: np.ndarray) -> "MLPOracle":
        return MLPOracle(self, X, y)

    def accuracy(self, theta, X, y) -> float:
        if X.shape[1] != self.n_inputs:
            raise ShapeMismatch(f"test inputs have {X.shape[1]} features, model expects {self.n_inputs}")
        if len(y) and int(np.max(y)) >= self.n_classes:
            raise ShapeMismatch("test labels exceed the model's class count")
        return float(np.mean(self.predict(theta, X) == y))


class MLPOracle(ObjectiveOracle):
    def __init__(self, model: MLPClassifier, X, y):
        X = np.asarray(X, dtype=model.dtype).reshape(len(X), -1)
        if X.shape[1] != model.n_inputs:
            raise ShapeMismatch(f"shard has {X.shape[1]} features, model expects {model.n_inputs}")
        y = np.asarray(y, dtype=np.int64)
        if len(y) != len(X):
            raise ShapeMismatch("feature and label counts differ")
        if len(y) and (y.min() < 0 or y.max() >= model.n_classes):
            raise ShapeMismatch("labels outside the model's class range")
        self.model, self.X, self.y = model, X, y
        self.dim = model.dim
        self.n_samples = len(y)

    def _loss(self, w, idx):
        return self.model.loss_and_grad(w, self.X[idx], self.y[idx], need_grad=False)[0]

    def _grad(self, w, idx):
        return self.model.loss_and_grad(w, self.X[idx], self.y[idx])[1]

    def init_params(self, rng):
        return self.model.init_params(rng)


class ClassificationProblem(NetworkProblem):
    """Agents sharing one architecture; per-round gradients run as stacked matmuls."""

    def __init__(self, model: MLPClassifier, shards, test_data=None, name="mlp"):
        super().__init__([model.bind(X, y) for X, y in shards], test_data=test_data, name=name)
        self.model = model
        sizes = {o.n_samples for o in self.oracles}
        self._X = np.stack([o.X for o in self.oracles]) if len(sizes) == 1 else None
        self._y = np.stack([o.y for o in self.oracles]) if len(sizes) == 1 else None

    def stochastic_grads(self, W, batches, out, agents=None, pool=None):
        if self._X is None or agents is not None:
            return super().stochastic_grads(W, batches, out, agents, pool)
        B = np.asarray(batches)
        rows = np.arange(self.n)[:, None]
        batched_grad(self.model, W, self._X[rows, B], self._y[rows, B], out)

    def evaluate(self, W):
        if self.test_data is None:
            return None
        X, y = self.test_data
        return [self.model.accuracy(W[i], X, y) for i in range(len(W))]


def batched_grad(model: MLPClassifier, W: np.ndarray, X: np.ndarray, y: np.ndarray,
                 out: np.ndarray) -> None:
    """Gradients for n parameter vectors at once.

    W: (n, dim) stacked parameters, X: (n, b, inputs), y: (n, b); writes
    (n, dim) into ``out``.
    """
    n, b = y.shape
    layers = [(W[:, off:off + fi * fo].reshape(n, fi, fo), W[:, off + fi * fo:off + fi * fo + fo])
              for off, fi, fo in model.shapes]
    hs, zs = [X], []
    h = X
    for li, (Wl, bl) in enumerate(layers):
        z = np.matmul(h, Wl) + bl[:, None, :]
        zs.append(z)
        if li < len(layers) - 1:
            h = _relu(z) if model.activation == "relu" else np.tanh(z)
            hs.append(h)
    z = zs[-1]
    ez = np.exp(z - z.max(axis=2, keepdims=True))
    dz = ez / ez.sum(axis=2, keepdims=True)
    ai, bi = np.meshgrid(np.arange(n), np.arange(b), indexing="ij")
    dz[ai, bi, y] -= 1.0
    dz /= b
    for li in range(len(layers) - 1, -1, -1):
        off, fi, fo = model.shapes[li]
        out[:, off:off + fi * fo] = np.matmul(hs[li].transpose(0, 2, 1), dz).reshape(n, fi * fo)
        out[:, off + fi * fo:off + fi * fo + fo] = dz.sum(axis=1)
        if li:
            dh = np.matmul(dz, layers[li][0].transpose(0, 2, 1))
            if model.activation == "relu":
                dz = dh * (zs[li - 1] > 0)
            else:
                dz = dh * (1.0 - hs[li] ** 2)


def make_mlp_classifier(layer_sizes=(784, 64, 32, 10), activation="relu", seed=None,
                        dtype=np.float64) -> MLPClassifier:
    return MLPClassifier(layer_sizes, activation, dtype=dtype, seed=seed)
