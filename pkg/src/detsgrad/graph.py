"""Undirected agent topologies and the Laplacian spectra the step-size
conditions depend on."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DisconnectedGraph, InvalidEdge, NumericalFailure

CONNECTIVITY_TOL = 1e-9
DENSE_LIMIT = 512

_DESCRIPTOR = re.compile(r"^\s*(ring|complete|path)\s*\(\s*(\d+)\s*\)\s*$")


@dataclass(frozen=True)
class GraphTopology:
    n: int
    adjacency: np.ndarray
    laplacian: np.ndarray
    lambda2: float
    sigma_max: float
    name: str = "custom"
    # CSR neighbour lists, ascending within each row
    indptr: np.ndarray = field(repr=False, default=None)
    indices: np.ndarray = field(repr=False, default=None)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(iu.tolist(), ju.tolist()))

    def quadratic_form(self, x: np.ndarray) -> float:
        return consensus_quadratic_form(self, x)


def spectral_quantities(laplacian: np.ndarray) -> tuple[float, float]:
    """Return (lambda2, sigma_max) of a symmetric Laplacian.

    For a symmetric PSD matrix the singular values are the eigenvalues, so
    both come from one symmetric eigensolve.
    """
    L = np.asarray(laplacian, dtype=np.float64)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError("laplacian must be square")
    if n == 1:
        return 0.0, float(abs(L[0, 0]))
    try:
        if n <= DENSE_LIMIT:
            ev = np.linalg.eigvalsh(L)
            return float(ev[1]), float(max(abs(ev[0]), abs(ev[-1])))
        from scipy.sparse import csr_matrix
        from scipy.sparse.linalg import ArpackNoConvergence, eigsh

        S = csr_matrix(L)
        try:
            top = eigsh(S, k=1, which="LA", return_eigenvectors=False)[0]
            # shift-invert around a small negative sigma keeps the factorisation nonsingular
            low = np.sort(eigsh(S, k=2, sigma=-1e-3, which="LM", return_eigenvectors=False))
        except ArpackNoConvergence as exc:
            raise NumericalFailure(str(exc)) from exc
        return float(low[1]), float(top)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc


def _from_adjacency(A: np.ndarray, name: str) -> GraphTopology:
    n = A.shape[0]
    A = A.astype(np.float64)
    L = np.diag(A.sum(axis=1)) - A
    lam2, smax = spectral_quantities(L)
    if lam2 <= CONNECTIVITY_TOL:
        raise DisconnectedGraph(f"{name}: lambda2 = {lam2:.3e} (graph is not connected)")
    indptr = np.zeros(n + 1, dtype=np.int64)
    rows = [np.nonzero(A[i])[0] for i in range(n)]
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows).astype(np.int64) if n else np.zeros(0, np.int64)
    for arr in (A, L, indptr, indices):
        arr.setflags(write=False)
    return GraphTopology(n=n, adjacency=A, laplacian=L, lambda2=lam2, sigma_max=smax,
                         name=name, indptr=indptr, indices=indices)


def custom(n: int, edges: Iterable[Sequence[int]], name: str | None = None) -> GraphTopology:
    if n < 2:
        raise InvalidEdge(f"need at least 2 agents, got n={n}")
    A = np.zeros((n, n), dtype=np.int8)
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidEdge(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise InvalidEdge(f"self-loop at {i}")
        if A[i, j]:
            raise InvalidEdge(f"duplicate edge ({i}, {j})")
        A[i, j] = A[j, i] = 1
    return _from_adjacency(A, name or f"custom({n})")


def ring(n: int) -> GraphTopology:
    if n < 2:
        raise InvalidEdge(f"need at least 2 agents, got n={n}")
    if n == 2:
        return custom(2, [(0, 1)], name="ring(2)")
    return custom(n, [(i, (i + 1) % n) for i in range(n)], name=f"ring({n})")


def complete(n: int) -> GraphTopology:
    return custom(n, [(i, j) for i in range(n) for j in range(i + 1, n)], name=f"complete({n})")


def path(n: int) -> GraphTopology:
    return custom(n, [(i, i + 1) for i in range(n - 1)], name=f"path({n})")


def load_edge_list(path_: str | Path, n: int | None = None) -> GraphTopology:
    """Read a topology from a text file of ``i j`` pairs (0-indexed, one per line).

    Blank lines and ``#`` comments are skipped. ``n`` defaults to the
    largest endpoint + 1.
    """
    edges = []
    for lineno, line in enumerate(Path(path_).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidEdge(f"{path_}:{lineno}: expected 'i j', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise InvalidEdge(f"{path_}:{lineno}: non-integer endpoint in {line!r}") from None
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
    return custom(n, edges, name=f"file({Path(path_).name})")


def build_topology(spec) -> GraphTopology:
    """Build a topology from a descriptor.

    Accepts ``"ring(10)"``, ``"complete(n)"``, ``"path(n)"``, an existing
    :class:`GraphTopology`, or a mapping ``{"kind": "custom", "n": .., "edges": [[i, j], ..]}``
    (``{"kind": "file", "path": ..}`` reads an edge-list file).
    """
    if isinstance(spec, GraphTopology):
        return spec
    if isinstance(spec, str):
        m = _DESCRIPTOR.match(spec)
        if not m:
            raise InvalidEdge(f"unrecognised topology descriptor {spec!r}")
        kind, n = m.group(1), int(m.group(2))
        return {"ring": ring, "complete": complete, "path": path}[kind](n)
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind in ("ring", "complete", "path"):
            return build_topology(f"{kind}({spec['n']})")
        if kind == "custom":
            return custom(int(spec["n"]), spec["edges"])
        if kind == "file":
            return load_edge_list(spec["path"], spec.get("n"))
    raise InvalidEdge(f"unrecognised topology descriptor {spec!r}")


def consensus_quadratic_form(topology: GraphTopology, x: np.ndarray) -> float:
    """x^T (L kron I) x for x of shape (n,) or stacked (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != topology.n:
        raise ValueError(f"expected leading dimension {topology.n}, got {x.shape[0]}")
    if x.ndim == 1:
        return float(x @ topology.laplacian @ x)
    return float(np.sum(x * (topology.laplacian @ x)))


def mean_deviation(x: np.ndarray) -> np.ndarray:
    """(I - 11^T/n) x along the agent axis."""
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean(axis=0, keepdims=True)
