"""Recorded time series, their CSV form, and broadcast accounting.

CSV column order (one row per recorded iteration k, state w_k):

    k, epoch, alpha, beta, consensus_error, empirical_risk, avg_grad_norm,
    lyapunov, step_sq_mean, trigger_ratio_max, trigger_violations,
    broadcasts_0 .. broadcasts_{n-1}

``broadcasts_i`` counts agent i's sends in rounds 0..k-1. ``step_sq_mean``,
``trigger_ratio_max`` and ``trigger_violations`` summarise the rounds since
the previous row. Floats are written with ``repr`` so they parse back exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_COLUMNS = ("epoch", "alpha", "beta", "consensus_error", "empirical_risk", "avg_grad_norm",
                 "lyapunov", "step_sq_mean", "trigger_ratio_max")
INT_COLUMNS = ("k", "trigger_violations")
BASE_COLUMNS = ("k", "epoch", "alpha", "beta", "consensus_error", "empirical_risk", "avg_grad_norm",
                "lyapunov", "step_sq_mean", "trigger_ratio_max", "trigger_violations")


class MetricsFormatError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass
class RunMetrics:
    n_agents: int
    rows: dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        for c in self.columns:
            self.rows.setdefault(c, [])

    @property
    def columns(self) -> list[str]:
        return list(BASE_COLUMNS) + [f"broadcasts_{i}" for i in range(self.n_agents)]

    def append(self, **values):
        for c in self.columns:
            self.rows[c].append(values[c])

    def __len__(self):
        return len(self.rows["k"])

    def __getitem__(self, col) -> np.ndarray:
        return np.asarray(self.rows[col])

    @property
    def broadcasts(self) -> np.ndarray:
        """(records, n_agents) cumulative broadcast counts."""
        if not len(self):
            return np.zeros((0, self.n_agents), dtype=np.int64)
        return np.stack([self[f"broadcasts_{i}"] for i in range(self.n_agents)], axis=1)

    def __eq__(self, other):
        if not isinstance(other, RunMetrics) or other.n_agents != self.n_agents:
            return False
        return all(_same(self.rows[c], other.rows[c]) for c in self.columns)

    # -- CSV ----------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for r in range(len(self)):
            w.writerow([_fmt(self.rows[c][r]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "RunMetrics":
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text: str) -> "RunMetrics":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise MetricsFormatError("empty metrics file", row=1) from None
        if tuple(header[:len(BASE_COLUMNS)]) != BASE_COLUMNS:
            raise MetricsFormatError("unexpected header", row=1)
        extra = header[len(BASE_COLUMNS):]
        n = len(extra)
        if extra != [f"broadcasts_{i}" for i in range(n)]:
            raise MetricsFormatError("unexpected broadcast columns", row=1)
        m = cls(n)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise MetricsFormatError(f"expected {len(header)} fields, got {len(rec)}", row=lineno)
            try:
                vals = {}
                for c, v in zip(header, rec):
                    vals[c] = float(v) if c in FLOAT_COLUMNS else int(v)
            except ValueError as exc:
                raise MetricsFormatError(str(exc), row=lineno) from None
            m.append(**vals)
        return m


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _same(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if x != y:
            return False
    return True


def broadcast_accounting(metrics: RunMetrics | None = None, *, totals=None, iterations=None) -> dict:
    """Per-agent broadcast totals and the network-wide reduction versus
    broadcasting every iteration.

    Either pass run ``metrics`` (the last row must be the final iteration) or
    raw ``totals`` and ``iterations``. Warm-up broadcasts count as broadcasts.
    """
    if metrics is not None:
        totals = metrics.broadcasts[-1]
        iterations = int(metrics["k"][-1])
    totals = np.atleast_1d(np.asarray(totals, dtype=np.float64))
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    n = len(totals)
    reduction = 1.0 - float(totals.sum()) / (n * iterations)
    return {
        "totals": [int(t) if float(t).is_integer() else float(t) for t in totals],
        "iterations": int(iterations),
        "mean_total": float(totals.mean()),
        "fractions": (totals / iterations).tolist(),
        "reduction": reduction,
        "reduction_percent": 100.0 * reduction,
    }
