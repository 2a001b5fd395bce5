"""Measurement graphs, their switching processes, and the matrices used in analysis.

Nodes are 0-based internally.  The last ``n_ref`` nodes are the reference
nodes; the first ``n - n_ref`` are the nodes that estimate their variables.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np


@dataclass(frozen=True)
class Graph:
    n: int
    n_ref: int
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        if not 1 <= self.n_ref <= self.n:
            raise ValueError(f"need 1 <= n_ref <= n, got n_ref={self.n_ref}, n={self.n}")
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) outside node range 0..{self.n - 1}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, n_ref: int, edges) -> Graph:
        return cls(n, n_ref, frozenset(tuple(e) for e in edges))

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray, n_ref: int) -> Graph:
        n = adjacency.shape[0]
        us, vs = np.nonzero(np.triu(adjacency, 1))
        return cls(n, n_ref, frozenset(zip(us.tolist(), vs.tolist())))

    @property
    def n_b(self) -> int:
        return self.n - self.n_ref

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def neighbors(self, u: int) -> list[int]:
        return sorted(v if w == u else w for w, v in self.edges if u in (w, v))

    def is_connected(self) -> bool:
        return _connected(self.n, self.edges)


@dataclass(frozen=True)
class GraphEnsemble:
    states: tuple[Graph, ...]

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("ensemble needs at least one graph")
        first = self.states[0]
        for g in self.states[1:]:
            if (g.n, g.n_ref) != (first.n, first.n_ref):
                raise ValueError("all ensemble states must share n and n_ref")

    @property
    def N(self) -> int:
        return len(self.states)

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def n_ref(self) -> int:
        return self.states[0].n_ref

    def union(self) -> Graph:
        edges = frozenset().union(*(g.edges for g in self.states))
        return Graph(self.n, self.n_ref, edges)


@dataclass(frozen=True)
class GroundedLaplacian:
    laplacian: np.ndarray
    matrix: np.ndarray


def _connected(n: int, edges) -> bool:
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    return nx.is_connected(g)


def laplacian(g: Graph) -> np.ndarray:
    a = g.adjacency()
    return np.diag(a.sum(axis=1)) - a


def grounded_laplacian(g: Graph) -> GroundedLaplacian:
    full = laplacian(g)
    nb = g.n_b
    return GroundedLaplacian(full, full[:nb, :nb].copy())


def selector_matrix(g: Graph) -> np.ndarray:
    """Block-diagonal selector D mapping stacked per-edge noise to node updates.

    Row ``u`` (a non-reference node) holds ``a_uv`` in the ``n - 1`` column
    slots of block ``u``, one per ``v != u`` in increasing order.
    """
    a = g.adjacency()
    n, nb = g.n, g.n_b
    d = np.zeros((nb, nb * (n - 1)))
    for u in range(nb):
        others = [v for v in range(n) if v != u]
        d[u, u * (n - 1):(u + 1) * (n - 1)] = a[u, others]
    return d


def union_connected(ensemble: GraphEnsemble) -> bool:
    return ensemble.union().is_connected()


def windowed_union_connected(graphs: Sequence[Graph], window: int) -> bool:
    """Every run of ``window`` consecutive graphs has a connected union."""
    if window < 1:
        raise ValueError("window must be at least 1")
    if len(graphs) < window:
        return False
    n = graphs[0].n
    for t in range(len(graphs) - window + 1):
        edges = frozenset().union(*(g.edges for g in graphs[t:t + window]))
        if not _connected(n, edges):
            return False
    return True


class ChainError(ValueError):
    """Transition matrix is not a valid ergodic chain."""


def check_transition(transition) -> np.ndarray:
    p = np.asarray(transition, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ChainError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0):
        raise ChainError("transition matrix has negative entries")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-12:
        raise ChainError("transition rows do not sum to 1")
    return p


def ergodicity_problems(transition) -> list[str]:
    p = check_transition(transition)
    dg = nx.DiGraph()
    dg.add_nodes_from(range(p.shape[0]))
    dg.add_edges_from(zip(*np.nonzero(p > 0)))
    problems = []
    if not nx.is_strongly_connected(dg):
        problems.append("not irreducible")
    elif not nx.is_aperiodic(dg):
        problems.append("not aperiodic")
    return problems


def stationary_distribution(transition) -> np.ndarray:
    """Unique stationary law of an ergodic chain, solving pi P = pi, sum(pi) = 1."""
    p = check_transition(transition)
    problems = ergodicity_problems(p)
    if problems:
        raise ChainError("chain is not ergodic: " + ", ".join(problems))
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return pi


def occupancy(sequence: Sequence[int], N: int) -> np.ndarray:
    counts = np.bincount(np.asarray(sequence, dtype=int), minlength=N)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# switching processes
# ---------------------------------------------------------------------------


@dataclass
class DeterministicSwitching:
    """State index follows ``prefix`` then repeats ``cycle`` forever."""

    cycle: tuple[int, ...]
    prefix: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.cycle:
            raise ValueError("deterministic schedule needs a non-empty cycle")

    def state_at(self, k: int) -> int:
        if k < 0:
            raise ValueError("iteration index must be non-negative")
        if k < len(self.prefix):
            return self.prefix[k]
        return self.cycle[(k - len(self.prefix)) % len(self.cycle)]

    def states(self, horizon: int) -> np.ndarray:
        return np.array([self.state_at(k) for k in range(horizon)], dtype=int)

    def limiting_occupancy(self, N: int) -> np.ndarray:
        return occupancy(self.cycle, N)


@dataclass
class MarkovSwitching:
    """Homogeneous Markov chain over ensemble indices; owns its random stream."""

    transition: np.ndarray
    initial: np.ndarray
    rng: np.random.Generator
    _path: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.transition = check_transition(self.transition)
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != (self.transition.shape[0],) or abs(self.initial.sum() - 1) > 1e-12:
            raise ChainError("initial distribution must be a probability vector over the states")
        self._cum = np.cumsum(self.transition, axis=1)
        self._cum[:, -1] = 1.0
        self._cum0 = np.cumsum(self.initial)
        self._cum0[-1] = 1.0

    def _extend(self, k: int) -> None:
        if not self._path:
            self._path.append(int(np.searchsorted(self._cum0, self.rng.random(), side="right")))
        need = k + 1 - len(self._path)
        if need <= 0:
            return
        draws = self.rng.random(need).tolist()
        rows = self._cum.tolist()
        state = self._path[-1]
        path = self._path
        for x in draws:
            state = bisect_right(rows[state], x)
            path.append(state)

    def state_at(self, k: int) -> int:
        if k < 0:
            raise ValueError("iteration index must be non-negative")
        self._extend(k)
        return self._path[k]

    def states(self, horizon: int) -> np.ndarray:
        if horizon == 0:
            return np.zeros(0, dtype=int)
        self._extend(horizon - 1)
        return np.array(self._path[:horizon], dtype=int)

    def limiting_occupancy(self, N: int) -> np.ndarray:
        return stationary_distribution(self.transition)


@dataclass
class RandomWaypoint:
    """Random-waypoint motion in a square field with zero pause time.

    Each node walks in a straight line at a uniform random speed toward a
    uniform random waypoint, then immediately draws the next one.  Positions
    are sampled once every ``dwell`` seconds and two nodes are linked when
    closer than ``comm_range``.
    """

    n: int
    n_ref: int
    rng: np.random.Generator
    field_size: float = 10.0
    comm_range: float = 5.0
    speed: tuple[float, float] = (0.1, 1.0)
    dwell: float = 1.0
    _positions: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self.comm_range > 0:
            raise ValueError("comm_range must be positive")
        lo, hi = self.speed
        if not 0 < lo <= hi:
            raise ValueError("speed range needs 0 < v_min <= v_max")
        self._pos = self.rng.uniform(0, self.field_size, size=(self.n, 2))
        self._target = self.rng.uniform(0, self.field_size, size=(self.n, 2))
        self._speed = self.rng.uniform(lo, hi, size=self.n)
        self._positions.append(self._pos.copy())

    def _advance(self) -> None:
        remaining = np.full(self.n, self.dwell)
        pos, target, speed = self._pos, self._target, self._speed
        while True:
            gap = target - pos
            dist = np.hypot(gap[:, 0], gap[:, 1])
            reach = dist / speed
            arrive = (reach <= remaining) & (remaining > 0)
            moving = ~arrive & (remaining > 0)
            if np.any(moving):
                frac = (remaining[moving] * speed[moving] / dist[moving])[:, None]
                pos[moving] += frac * gap[moving]
                remaining[moving] = 0.0
            if not np.any(arrive):
                break
            pos[arrive] = target[arrive]
            remaining[arrive] -= reach[arrive]
            m = int(arrive.sum())
            target[arrive] = self.rng.uniform(0, self.field_size, size=(m, 2))
            speed[arrive] = self.rng.uniform(self.speed[0], self.speed[1], size=m)
        self._positions.append(pos.copy())

    def positions_at(self, k: int) -> np.ndarray:
        while len(self._positions) <= k:
            self._advance()
        return self._positions[k]

    def graph_at(self, k: int) -> Graph:
        return geometric_graph(self.positions_at(k), self.comm_range, self.n_ref)


def geometric_graph(positions: np.ndarray, comm_range: float, n_ref: int) -> Graph:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    adj = dist < comm_range
    np.fill_diagonal(adj, False)
    return Graph.from_adjacency(adj.astype(float), n_ref)


def graph_at(process, ensemble: GraphEnsemble | None, k: int) -> Graph:
    """Measurement graph active during iteration ``k``."""
    if k < 0:
        raise ValueError("iteration index must be non-negative")
    if isinstance(process, RandomWaypoint):
        return process.graph_at(k)
    if ensemble is None:
        raise ValueError("ensemble-driven processes need the ensemble")
    return ensemble.states[process.state_at(k)]


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def ensemble_from_labels(graphs, n: int, n_ref: int) -> GraphEnsemble:
    """Build an ensemble from edge lists that use 1-based node labels."""
    states = []
    for edges in graphs:
        states.append(Graph.from_edges(n, n_ref, [(u - 1, v - 1) for u, v in edges]))
    return GraphEnsemble(tuple(states))


def load_ensemble(path: str | Path) -> GraphEnsemble:
    """Read ``{"nodes": n, "references": r, "graphs": [[[u, v], ...], ...]}``."""
    doc = json.loads(Path(path).read_text())
    return ensemble_from_labels(doc["graphs"], int(doc["nodes"]), int(doc["references"]))


def load_transition(path: str | Path) -> np.ndarray:
    return check_transition(json.loads(Path(path).read_text()))


def all_pairs(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))
