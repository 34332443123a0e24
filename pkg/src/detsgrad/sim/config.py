"""Run configuration and problem construction."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DataError
from ..problems import (ClassificationProblem, GradientDirection, MLPClassifier, NetworkProblem,
                        load_idx, make_synthetic, partition)
from ..problems.idx import Dataset
from ..problems.synthetic import SYNTHETIC_NAMES, SyntheticOracle, SyntheticProblem
from ..schedule import StepSchedule


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleSpec(_Strict):
    a: float = 0.1
    b: Optional[float] = None
    delta1: float = 0.1
    delta2: float = 1.0
    epsilon: float = 1.0
    warmup: int = 0

    def build(self) -> StepSchedule:
        return StepSchedule(self.a, self.b, self.delta1, self.delta2, self.epsilon, self.warmup)


class ProblemSpec(_Strict):
    kind: Literal["synthetic", "dataset"] = "synthetic"
    # synthetic
    name: str = "quartic-saddle"
    dim: int = Field(10, ge=1)
    samples_per_agent: int = Field(64, ge=1)
    init_scale: float = 1.0
    # dataset
    source: Literal["idx", "digits"] = "idx"
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_subset: Optional[int] = Field(None, ge=1)
    test_subset: Optional[int] = Field(None, ge=1)
    partition: Literal["random_iid", "single_class"] = "random_iid"
    per_agent_count: Optional[int] = Field(None, ge=1)
    hidden: list[int] = [64, 32]
    activation: Literal["relu", "tanh"] = "relu"

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "synthetic" and self.name not in SYNTHETIC_NAMES:
            raise ValueError(f"unknown synthetic problem {self.name!r}; known: {list(SYNTHETIC_NAMES)}")
        if self.kind == "dataset" and self.source == "idx" and not (self.images and self.labels):
            raise ValueError("dataset problems with source='idx' need 'images' and 'labels' paths")
        return self


class DirectionSpec(_Strict):
    mode: Literal["single", "minibatch", "scaled"] = "single"
    batch_size: int = Field(1, ge=1)
    H: Optional[list[list[float]]] = None

    def build(self, dim: int) -> GradientDirection:
        if self.mode == "scaled":
            H = np.eye(dim) if self.H is None else np.asarray(self.H, dtype=np.float64)
            if H.shape != (dim, dim):
                raise ValueError(f"H must be {dim}x{dim}, got {H.shape}")
            return GradientDirection("scaled", self.batch_size, H)
        return GradientDirection(self.mode, self.batch_size)


class Upsilon0Spec(_Strict):
    mode: Literal["absolute", "per_parameter"] = "per_parameter"
    value: float = Field(0.2, ge=0.0)

    def resolve(self, n_parameters: int) -> float:
        return self.value if self.mode == "absolute" else self.value * n_parameters


Algorithm = Literal["detsgrad", "dist_sgd_continuous", "centralized_sgd"]


class SimConfig(_Strict):
    topology: Union[str, dict] = "ring(10)"
    schedule: ScheduleSpec = ScheduleSpec()
    problem: ProblemSpec = ProblemSpec()
    direction: DirectionSpec = DirectionSpec()
    upsilon0: Upsilon0Spec = Upsilon0Spec()
    algorithm: Algorithm = "detsgrad"
    max_iterations: int = Field(1000, ge=1)
    seed: int = 0
    cadence: int = Field(100, ge=1)
    threads: int = Field(1, ge=1)
    override_validation: bool = False
    keep_iterates: bool = False
    evaluate_every: int = Field(0, ge=0)

    def replace(self, **changes) -> "SimConfig":
        return self.model_validate({**self.model_dump(), **changes})


def _load_digits() -> tuple[Dataset, Dataset]:
    """scikit-learn's bundled 8x8 handwritten digits, split 1000/797 by a fixed permutation."""
    from sklearn.datasets import load_digits

    d = load_digits()
    images = d.images / 16.0
    labels = d.target.astype(np.uint8)
    perm = np.random.default_rng(0).permutation(len(labels))
    tr, te = perm[:1000], perm[1000:]
    return Dataset(images[tr], labels[tr]), Dataset(images[te], labels[te])


def _resolve(path: str) -> Path:
    """The path itself, else its ``.gz`` sibling."""
    p = Path(path)
    if p.exists():
        return p
    gz = p.with_name(p.name + ".gz")
    if gz.exists():
        return gz
    raise DataError(f"dataset file not found: {path}")


def load_datasets(spec: ProblemSpec, seed: int) -> tuple[Dataset, Optional[Dataset]]:
    if spec.source == "digits":
        train, test = _load_digits()
    else:
        train = load_idx(_resolve(spec.images), _resolve(spec.labels))
        test = None
        if spec.test_images and spec.test_labels:
            test = load_idx(_resolve(spec.test_images), _resolve(spec.test_labels))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5B5E,)))
    if spec.train_subset is not None and spec.train_subset < len(train):
        train = train.subset(np.sort(rng.choice(len(train), spec.train_subset, replace=False)))
    if test is not None and spec.test_subset is not None and spec.test_subset < len(test):
        test = test.subset(np.sort(rng.choice(len(test), spec.test_subset, replace=False)))
    return train, test


def build_problem(config: SimConfig, n_agents: int) -> NetworkProblem:
    """Instantiate the local oracles described by ``config.problem``.

    The data split depends only on ``config.seed``, so every algorithm run with
    the same seed sees the same shards.
    """
    spec = config.problem
    if spec.kind == "synthetic":
        prob = make_synthetic(spec.name, spec.dim, n_agents, config.seed, spec.samples_per_agent)
        for o in prob.oracles:
            o.init_scale = spec.init_scale
        return prob
    train, test = load_datasets(spec, config.seed)
    X = train.features
    n_classes = int(train.labels.max()) + 1
    model = MLPClassifier([X.shape[1], *spec.hidden, n_classes], spec.activation)
    part = partition(train.labels, spec.partition, n_agents, config.seed,
                     per_agent_count=spec.per_agent_count, n_classes=n_classes)
    shards = [(X[ix], train.labels[ix]) for ix in part.shards]
    test_data = (test.features, test.labels) if test is not None else None
    return ClassificationProblem(model, shards, test_data=test_data, name=f"mlp-{spec.partition}")


def pooled(problem: NetworkProblem) -> NetworkProblem:
    """Single-oracle problem over the union of all shards (for the centralized baseline)."""
    if isinstance(problem, ClassificationProblem):
        X = np.concatenate([o.X for o in problem.oracles])
        y = np.concatenate([o.y for o in problem.oracles])
        return ClassificationProblem(problem.model, [(X, y)], problem.test_data, name=problem.name + "-pooled")
    if isinstance(problem, SyntheticProblem):
        o0 = problem.oracles[0]
        data = tuple(np.concatenate(parts) for parts in zip(*(o.data for o in problem.oracles)))
        return SyntheticProblem([SyntheticOracle(o0.name, data, o0.init_scale)], name=problem.name + "-pooled")
    raise TypeError(f"cannot pool {type(problem).__name__}")
