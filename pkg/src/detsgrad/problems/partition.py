"""Splitting a labelled dataset into per-agent shards."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ClassCountMismatch, InsufficientData


@dataclass
class DataPartition:
    scheme: str
    shards: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]


def partition(labels: np.ndarray, scheme: str, n_agents: int, seed: int,
              per_agent_count: int | None = None, n_classes: int | None = None) -> DataPartition:
    """Disjoint shards of sample indices.

    ``random_iid`` draws ``per_agent_count`` indices per agent without
    replacement from the whole set. ``single_class`` gives agent i the samples
    of label i, every class cut down to the smallest class count.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5A4D,)))
    if scheme == "random_iid":
        if per_agent_count is None:
            per_agent_count = len(labels) // n_agents
        need = per_agent_count * n_agents
        if per_agent_count < 1 or need > len(labels):
            raise InsufficientData(
                f"{n_agents} agents x {per_agent_count} samples needs {need}, dataset has {len(labels)}")
        perm = rng.permutation(len(labels))[:need]
        return DataPartition(scheme, [np.sort(perm[i * per_agent_count:(i + 1) * per_agent_count])
                                      for i in range(n_agents)])
    if scheme == "single_class":
        classes = n_classes if n_classes is not None else int(labels.max()) + 1
        if n_agents != classes:
            raise ClassCountMismatch(f"single_class needs one agent per class: {n_agents} agents, {classes} classes")
        by_class = [np.nonzero(labels == c)[0] for c in range(classes)]
        keep = min(len(ix) for ix in by_class)
        if keep == 0:
            raise InsufficientData("some class has no samples")
        if per_agent_count is not None:
            if per_agent_count > keep:
                raise InsufficientData(f"per_agent_count {per_agent_count} exceeds smallest class ({keep})")
            keep = per_agent_count
        return DataPartition(scheme, [np.sort(rng.choice(ix, size=keep, replace=False)) if len(ix) > keep
                                      else ix for ix in by_class])
    raise ValueError(f"unknown partition scheme {scheme!r}")
