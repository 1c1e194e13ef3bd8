"""Random communication graphs: Bernoulli edge activation over a base graph,
Laplacians, induced subgraphs and per-component connectivity checks."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import AgentSpec, EntryLayout

CONNECTIVITY_TOL = 1e-8
SYMMETRY_TOL = 1e-9


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TopologyModel:
    """Undirected base graph on ``N`` vertices; edge e is active at each step
    independently with probability ``activation[e]``.

    ``labels`` maps local vertex ids to the ids of a parent graph (set by
    :func:`induced_subgraph`).
    """

    N: int
    edges: np.ndarray
    activation: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.N:
                raise TopologyError("edge endpoint outside vertex range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise TopologyError("self-loops are not allowed")
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
            raise TopologyError("duplicate edges")
        rho = np.broadcast_to(np.asarray(self.activation, dtype=np.float64), (len(edges),))
        rho = rho[order] if np.ndim(self.activation) else rho.copy()
        if np.any((rho <= 0) | (rho > 1)):
            raise TopologyError("activation probabilities must lie in (0, 1]")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "activation", rho)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def always_on(self) -> bool:
        return bool(np.all(self.activation == 1.0))


def mesh(rows: int, cols: int, activation=1.0) -> TopologyModel:
    """4-neighbour lattice; vertex k sits at (k // cols, k % cols)."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return TopologyModel(rows * cols, np.vstack([horiz, vert]), activation)


def complete(n: int, activation=1.0) -> TopologyModel:
    iu = np.triu_indices(n, k=1)
    return TopologyModel(n, np.stack(iu, axis=1), activation)


_BASE_RE = re.compile(r"^\s*(mesh|complete)\s*\(\s*(\d+)\s*(?:,\s*(\d+)\s*)?\)\s*$")


def parse_topology(base, activation=1.0, n_agents: int | None = None) -> TopologyModel:
    """Build a model from ``"mesh(r, c)"``, ``"complete(n)"`` or an edge list."""
    if isinstance(base, str):
        m = _BASE_RE.match(base)
        if not m:
            raise TopologyError(f"unrecognised base graph {base!r}")
        kind, a, b = m.group(1), int(m.group(2)), m.group(3)
        if kind == "mesh":
            if b is None:
                raise TopologyError("mesh needs rows and cols")
            return mesh(a, int(b), activation)
        if b is not None:
            raise TopologyError("complete takes a single vertex count")
        return complete(a, activation)
    if n_agents is None:
        raise TopologyError("explicit edge lists need the agent count")
    return TopologyModel(n_agents, np.asarray(base, dtype=np.int64).reshape(-1, 2), activation)


@dataclass(frozen=True, eq=False)
class GraphSample:
    t: int
    active: np.ndarray  # boolean mask over the model's base edges
    model: TopologyModel

    @property
    def edges(self) -> np.ndarray:
        return self.model.edges[self.active]


def sample_graph(model: TopologyModel, rng: np.random.Generator, t: int) -> GraphSample:
    """Draw E(t): each base edge kept independently with its probability.

    Edges with probability one consume no randomness, so a fixed graph
    never advances ``rng``.
    """
    active = np.ones(model.n_edges, dtype=bool)
    random_edges = model.activation < 1.0
    if random_edges.any():
        active[random_edges] = rng.random(int(random_edges.sum())) < model.activation[random_edges]
    return GraphSample(t, active, model)


def laplacian(edges, N: int, weights=None) -> np.ndarray:
    """Dense (weighted) graph Laplacian ``D - A``."""
    if isinstance(edges, GraphSample):
        edges = edges.edges
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
    L = np.zeros((N, N))
    u, v = edges[:, 0], edges[:, 1]
    np.add.at(L, (u, v), -w)
    np.add.at(L, (v, u), -w)
    np.add.at(L, (u, u), w)
    np.add.at(L, (v, v), w)
    return L


def mean_laplacian(model: TopologyModel) -> np.ndarray:
    """Exact expectation of L(t): each edge Laplacian weighted by its probability."""
    return laplacian(model.edges, model.N, model.activation)


def induced_subgraph(graph, J) -> TopologyModel:
    """Subgraph on the vertices ``J`` (ascending); local vertex i is ``J[i]``.

    ``graph`` may be a :class:`TopologyModel` or a :class:`GraphSample`.
    """
    J = np.unique(np.asarray(J, dtype=np.int64))
    if J.size == 0:
        raise TopologyError("induced subgraph needs a nonempty vertex set")
    if isinstance(graph, GraphSample):
        edges, rho, N = graph.edges, np.ones(int(graph.active.sum())), graph.model.N
    else:
        edges, rho, N = graph.edges, graph.activation, graph.N
    local = np.full(N, -1, dtype=np.int64)
    local[J] = np.arange(J.size)
    keep = (local[edges[:, 0]] >= 0) & (local[edges[:, 1]] >= 0) if len(edges) else np.zeros(0, bool)
    return TopologyModel(J.size, local[edges[keep]], rho[keep], labels=J)


def fiedler_value(L: np.ndarray) -> float:
    """Second-smallest eigenvalue of a symmetric Laplacian."""
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("Laplacian must be square")
    if np.max(np.abs(L - L.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("Laplacian is not symmetric")
    if L.shape[0] < 2:
        raise ValueError("the Fiedler value needs at least two vertices")
    return float(np.linalg.eigvalsh(0.5 * (L + L.T))[1])


@dataclass
class ConnectivityReport:
    """Per-component connectivity of the mean induced Laplacian.

    ``lambda2[m]`` is NaN when only one agent is interested in ``m``; a
    single vertex is trivially connected.
    """

    lambda2: np.ndarray
    passed: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.passed.all())

    @property
    def failing(self) -> np.ndarray:
        return np.flatnonzero(~self.passed)


def interest_groups(agents: Sequence[AgentSpec], M: int) -> list[np.ndarray]:
    """J_m for every component, as ascending agent id arrays."""
    layout = EntryLayout(agents, M)
    order = np.argsort(layout.comp, kind="stable")
    bounds = np.concatenate(([0], np.cumsum(layout.J_size)))
    ids = np.asarray([a.id for a in agents])[layout.agent[order]]
    return [np.sort(ids[bounds[m]:bounds[m + 1]]) for m in range(M)]


def check_component_connectivity(model: TopologyModel, agents: Sequence[AgentSpec],
                                 tol: float = CONNECTIVITY_TOL) -> ConnectivityReport:
    """lambda_2 of the mean Laplacian of the base graph induced by each J_m."""
    M = agents[0].M
    groups = interest_groups(agents, M)
    lam = np.full(M, np.nan)
    passed = np.zeros(M, dtype=bool)
    cache: dict[bytes, float] = {}
    for m, J in enumerate(groups):
        if J.size == 0:
            raise TopologyError(f"component {m} has no interested agent")
        if J.size == 1:
            passed[m] = True
            continue
        key = J.tobytes()
        if key not in cache:
            sub = induced_subgraph(model, J)
            cache[key] = fiedler_value(mean_laplacian(sub))
        lam[m] = cache[key]
        passed[m] = lam[m] > tol
    return ConnectivityReport(lam, passed)
