"""Measurement graphs and the linear algebra built on them.

Nodes are 0-based throughout the package. An edge ``(v, u)`` carries the
measurement of ``x[u] - x[v]``: its incidence row has ``+1`` in column ``u``
and ``-1`` in column ``v``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "DisconnectedGraphError",
    "incidence_matrix",
    "is_connected",
    "weighted_laplacian",
    "pinv_laplacian",
    "spectral_norm",
    "kernel_dimension",
    "load_graph",
    "save_graph",
]

PINV_REL_CUTOFF = 1e-12
KERNEL_REL_TOL = 1e-10


class GraphError(ValueError):
    """Invalid graph or graph-derived input."""


class DisconnectedGraphError(GraphError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected measurement topology with a fixed orientation per edge.

    Parameters
    ----------
    n_nodes : int
        Number of nodes, indexed ``0 .. n_nodes - 1``.
    edges : sequence of (v, u) pairs
        Edge ``e`` is ``edges[e]``; its position is its incidence row.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    _tails: np.ndarray = field(init=False, repr=False, compare=False)
    _heads: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise GraphError(f"n_nodes must be positive, got {self.n_nodes}")
        edges = tuple((int(v), int(u)) for v, u in self.edges)
        seen = set()
        for e, (v, u) in enumerate(edges):
            if not (0 <= v < n and 0 <= u < n):
                raise GraphError(f"edge {e} = ({v}, {u}) has a node outside [0, {n})")
            if v == u:
                raise GraphError(f"edge {e} is a self-loop on node {v}")
            key = (min(v, u), max(v, u))
            if key in seen:
                raise GraphError(f"edge {e} = ({v}, {u}) duplicates an earlier edge")
            seen.add(key)
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", edges)
        tails = np.array([v for v, _ in edges], dtype=np.intp)
        heads = np.array([u for _, u in edges], dtype=np.intp)
        tails.setflags(write=False)
        heads.setflags(write=False)
        object.__setattr__(self, "_tails", tails)
        object.__setattr__(self, "_heads", heads)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        """Node ``v`` of every edge ``(v, u)`` (the ``-1`` column)."""
        return self._tails

    @property
    def heads(self) -> np.ndarray:
        """Node ``u`` of every edge ``(v, u)`` (the ``+1`` column)."""
        return self._heads

    def neighbors(self, node: int) -> list[int]:
        out = []
        for v, u in self.edges:
            if v == node:
                out.append(u)
            elif u == node:
                out.append(v)
        return out

    def incident_edges(self, node: int) -> list[int]:
        """Indices of edges touching ``node``, in edge-list order."""
        return [e for e, (v, u) in enumerate(self.edges) if node in (v, u)]

    def to_dict(self) -> dict:
        return {"n_nodes": self.n_nodes, "edges": [[v, u] for v, u in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        try:
            return cls(int(data["n_nodes"]), tuple(tuple(e) for e in data["edges"]))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph object: {exc}") from exc


def load_graph(path) -> Graph:
    with open(path) as fh:
        return Graph.from_dict(json.load(fh))


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(g.to_dict()) + "\n")


def incidence_matrix(g: Graph) -> np.ndarray:
    """Dense ``|E| x N`` incidence matrix of ``g``."""
    A = np.zeros((g.n_edges, g.n_nodes))
    rows = np.arange(g.n_edges)
    A[rows, g.heads] = 1.0
    A[rows, g.tails] = -1.0
    return A


def is_connected(g: Graph) -> bool:
    adj = [[] for _ in range(g.n_nodes)]
    for v, u in g.edges:
        adj[v].append(u)
        adj[u].append(v)
    seen = [False] * g.n_nodes
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if not seen[nb]:
                seen[nb] = True
                count += 1
                queue.append(nb)
    return count == g.n_nodes


def weighted_laplacian(A: np.ndarray, w) -> np.ndarray:
    """Return ``A.T @ diag(w) @ A`` for strictly positive edge weights."""
    A = np.asarray(A, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] != A.shape[0]:
        raise GraphError(f"expected {A.shape[0]} edge weights, got shape {w.shape}")
    if not np.all(w > 0):
        raise GraphError("edge weights must be strictly positive")
    L = A.T @ (w[:, None] * A)
    # exact symmetry; the product is symmetric only up to rounding
    return 0.5 * (L + L.T)


def _eigh(L):
    evals, evecs = np.linalg.eigh(np.asarray(L, dtype=float))
    return evals, evecs


def pinv_laplacian(L: np.ndarray, rel_cutoff: float = PINV_REL_CUTOFF,
                   return_kernel_dim: bool = False):
    """Moore-Penrose pseudo-inverse of a symmetric PSD Laplacian.

    Eigenvalues below ``rel_cutoff * max_eigenvalue`` are treated as zero.
    A disconnected Laplacian is inverted the same way; pass
    ``return_kernel_dim=True`` to learn how many null directions were dropped.
    """
    evals, evecs = _eigh(L)
    lam_max = max(float(evals[-1]), 0.0)
    keep = evals > rel_cutoff * lam_max if lam_max > 0 else np.zeros_like(evals, bool)
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    P = (evecs * inv) @ evecs.T
    P = 0.5 * (P + P.T)
    if return_kernel_dim:
        kdim = int(np.sum(evals <= KERNEL_REL_TOL * lam_max)) if lam_max > 0 else len(evals)
        return P, kdim
    return P


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def kernel_dimension(L: np.ndarray, rel_tol: float = KERNEL_REL_TOL) -> int:
    """Number of eigenvalues of ``L`` at most ``rel_tol`` times the largest."""
    evals = np.linalg.eigvalsh(np.asarray(L, dtype=float))
    lam_max = float(evals[-1])
    if lam_max <= 0:
        return len(evals)
    return int(np.sum(evals <= rel_tol * lam_max))
