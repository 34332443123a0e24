"""One agent's view of the event-triggered update.

The simulation engine runs the same rules on stacked arrays; this class is
the per-agent reference used for inspection and cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .graph import GraphTopology
from .schedule import StepSchedule


def trigger_fires(l1: float, k: int, upsilon0: float, alpha_k: float, warmup: int = 0) -> bool:
    """Broadcast at k if still warming up or ||e_i||_1 >= upsilon0 * alpha_k (ties fire)."""
    return k < warmup or l1 >= upsilon0 * alpha_k


@dataclass
class AgentState:
    id: int
    w: np.ndarray
    neighbors: tuple[int, ...]
    w_hat_self: np.ndarray = None
    w_hat_neighbors: dict[int, np.ndarray] = field(default_factory=dict)
    broadcast_count: int = 0
    rng: np.random.Generator | None = None

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64)
        if self.w_hat_self is None:
            self.w_hat_self = self.w.copy()

    @classmethod
    def for_topology(cls, topology: GraphTopology, i: int, w0, rng=None) -> "AgentState":
        return cls(id=i, w=w0, neighbors=tuple(int(j) for j in topology.neighbors(i)), rng=rng)

    # -- trigger ------------------------------------------------------------
    def error_vector(self) -> tuple[np.ndarray, float]:
        e = self.w - self.w_hat_self
        return e, float(np.abs(e).sum())

    def trigger_check(self, k: int, upsilon0: float, alpha_k: float, warmup: int = 0) -> bool:
        return trigger_fires(self.error_vector()[1], k, upsilon0, alpha_k, warmup)

    def broadcast(self) -> np.ndarray:
        """Record a send: w_hat_self <- w. Returns the payload."""
        self.w_hat_self = self.w.copy()
        self.broadcast_count += 1
        return self.w_hat_self

    def receive(self, j: int, payload: np.ndarray) -> None:
        if j not in self.neighbors:
            raise KeyError(f"agent {self.id} has no neighbour {j}")
        self.w_hat_neighbors[j] = np.array(payload, dtype=np.float64)

    # -- update -------------------------------------------------------------
    def local_update(self, k: int, schedule: StepSchedule, neighbor_hats: dict[int, np.ndarray] | None,
                     g: np.ndarray) -> np.ndarray:
        """w <- w - beta_k sum_j (w_hat_i - w_hat_j) - alpha_k g, using broadcast values only."""
        hats = self.w_hat_neighbors if neighbor_hats is None else neighbor_hats
        missing = set(self.neighbors) - set(hats)
        if missing:
            raise KeyError(f"agent {self.id}: no broadcast value for neighbours {sorted(missing)}")
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.w.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} != parameter shape {self.w.shape}")
        acc = np.zeros_like(self.w)
        for j in self.neighbors:
            acc += self.w_hat_self - hats[j]
        self.w = self.w - schedule.beta(k) * acc - schedule.alpha(k) * g
        return self.w


def trigger_check(agent: AgentState, k: int, upsilon0: float, alpha_k: float, warmup: int = 0) -> bool:
    return agent.trigger_check(k, upsilon0, alpha_k, warmup)


def local_update(agent: AgentState, k: int, schedule: StepSchedule, neighbor_hats, g) -> np.ndarray:
    return agent.local_update(k, schedule, neighbor_hats, g)


def error_vector(agent: AgentState) -> tuple[np.ndarray, float]:
    return agent.error_vector()


def run_agents(topology: GraphTopology, schedule: StepSchedule, W0: np.ndarray, grad_fn,
               iterations: int, upsilon0: float) -> tuple[np.ndarray, list[AgentState]]:
    """Message-passing reference loop over :class:`AgentState` objects.

    ``grad_fn(k, i, w_i)`` returns agent i's stochastic gradient. Returns the
    final stacked iterates and the agents.
    """
    agents = [AgentState.for_topology(topology, i, W0[i]) for i in range(topology.n)]
    for k in range(iterations):
        grads = [grad_fn(k, a.id, a.w) for a in agents]
        alpha_k = schedule.alpha(k)
        sent = {}
        for a in agents:
            if k == 0 or a.trigger_check(k, upsilon0, alpha_k, schedule.warmup):
                sent[a.id] = a.broadcast()
        for a in agents:
            for j in a.neighbors:
                if j in sent:
                    a.receive(j, sent[j])
        for a, g in zip(agents, grads):
            a.local_update(k, schedule, None, g)
    return np.stack([a.w for a in agents]), agents
