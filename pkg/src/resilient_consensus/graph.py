"""Directed communication graphs and their consensus-related spectral objects.

The convention throughout: ``adjacency[i, j] > 0`` means agent ``i`` receives
information from agent ``j`` (an edge j -> i). The weighted in-degree of agent
``i`` is the row sum ``h_i``, and the normalized Laplacian is
``(I + H)^-1 (H - A)`` with ``H = diag(h)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZERO_EIG_TOL = 1e-9
ROOT_SET_REL_TOL = 1e-9


class GraphError(ValueError):
    """Malformed graph, missing spanning tree, or failed spectral computation."""


@dataclass(frozen=True)
class DirectedGraph:
    """Weighted digraph over at least two agents. The diagonal is forced to zero."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be a square matrix, got shape {a.shape}")
        if a.shape[0] < 2:
            raise GraphError("a network needs at least 2 agents")
        if not np.isfinite(a).all():
            raise GraphError("edge weights must be finite")
        if (a < 0).any():
            raise GraphError("edge weights must be nonnegative")
        np.fill_diagonal(a, 0.0)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @classmethod
    def from_edges(cls, n_agents: int, edges) -> "DirectedGraph":
        """Build from an edge list ``[[from, to, weight], ...]`` (0-based, weight optional)."""
        a = np.zeros((n_agents, n_agents))
        for e in edges:
            src, dst = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= src < n_agents and 0 <= dst < n_agents):
                raise GraphError(f"edge {list(e)!r} out of range for {n_agents} agents")
            if src == dst:
                raise GraphError(f"self-loop {list(e)!r} is not allowed")
            a[dst, src] = w
        return cls(a)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degrees(self) -> np.ndarray:
        """Weighted in-degrees h_i."""
        return self.adjacency.sum(axis=1)

    def successors(self, agent: int) -> np.ndarray:
        """Agents that receive information from ``agent``."""
        return np.nonzero(self.adjacency[:, agent] > 0)[0]


@dataclass(frozen=True)
class GraphSpectrum:
    """Spectral data of the normalized Laplacian.

    ``left_eigvec_zero`` is the nonnegative left eigenvector of the zero
    eigenvalue normalized to unit sum, or None when the zero eigenvalue is
    repeated (no spanning tree); the root set is then empty.
    """

    laplacian: np.ndarray
    normalized_laplacian: np.ndarray
    eigenvalues: np.ndarray
    left_eigvec_zero: np.ndarray | None
    root_set: frozenset
    zero_multiplicity: int

    @property
    def has_simple_zero(self) -> bool:
        return self.zero_multiplicity == 1

    def nonzero_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.zero_multiplicity:]


def normalized_laplacian(g: DirectedGraph) -> GraphSpectrum:
    """Compute L, (I+H)^-1 L, its spectrum, and the zero-eigenvalue left eigenvector.

    The left eigenvector is obtained as the kernel vector of the transposed
    normalized Laplacian (via SVD) and scaled to unit sum, so the consensus
    value predicted for the nominal network is a weighted average of initial states.
    """
    a = g.adjacency
    h = g.in_degrees
    lap = np.diag(h) - a
    norm_lap = (1.0 / (1.0 + h))[:, None] * lap
    try:
        eigvals = np.linalg.eigvals(norm_lap)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numpy rarely fails here
        raise GraphError(f"eigen-solver failed on normalized Laplacian: {exc}") from exc

    scale = max(1.0, np.abs(eigvals).max())
    zero_mask = np.abs(eigvals) <= ZERO_EIG_TOL * scale
    zero_multiplicity = int(zero_mask.sum())
    order = np.lexsort((eigvals.imag, eigvals.real, ~zero_mask))
    eigvals = eigvals[order]

    left = None
    roots: frozenset = frozenset()
    if zero_multiplicity == 1:
        _, svals, vt = np.linalg.svd(norm_lap.T)
        kernel = vt[-1].real
        total = kernel.sum()
        if abs(total) < 1e-12:
            raise GraphError("degenerate kernel vector for the zero eigenvalue")
        kernel = kernel / total
        # eigen-solver noise on structurally-zero entries
        kernel[np.abs(kernel) < ROOT_SET_REL_TOL * np.abs(kernel).max()] = 0.0
        if (kernel < 0).any():
            raise GraphError("left eigenvector of the zero eigenvalue is not nonnegative")
        left = kernel / kernel.sum()
        left.setflags(write=False)
        roots = frozenset(np.nonzero(left > ROOT_SET_REL_TOL * left.max())[0].tolist())

    lap.setflags(write=False)
    norm_lap.setflags(write=False)
    eigvals.setflags(write=False)
    return GraphSpectrum(
        laplacian=lap,
        normalized_laplacian=norm_lap,
        eigenvalues=eigvals,
        left_eigvec_zero=left,
        root_set=roots,
        zero_multiplicity=zero_multiplicity,
    )


def is_reachable(g: DirectedGraph, from_agent: int, to_agent: int) -> bool:
    """True iff a directed information path exists from ``from_agent`` to ``to_agent``."""
    n = g.n_agents
    if not (0 <= from_agent < n and 0 <= to_agent < n):
        raise GraphError(f"agent index out of range for {n} agents")
    if from_agent == to_agent:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[from_agent] = True
    stack = [from_agent]
    while stack:
        u = stack.pop()
        for v in g.successors(u):
            if not seen[v]:
                if v == to_agent:
                    return True
                seen[v] = True
                stack.append(int(v))
    return False


def reachable_set(g: DirectedGraph, from_agent: int) -> frozenset:
    """All agents reachable from ``from_agent`` (excluding itself unless on a cycle)."""
    seen = np.zeros(g.n_agents, dtype=bool)
    stack = [from_agent]
    out = set()
    while stack:
        u = stack.pop()
        for v in g.successors(u):
            if not seen[v]:
                seen[v] = True
                out.add(int(v))
                stack.append(int(v))
    return frozenset(out)


def has_spanning_tree(g: DirectedGraph) -> bool:
    """True iff some agent reaches every other agent through directed paths."""
    n = g.n_agents
    for root in range(n):
        if len(reachable_set(g, root) | {root}) == n:
            return True
    return False
