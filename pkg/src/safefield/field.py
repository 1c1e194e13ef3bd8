"""Field parameter, agent sensing/interest model and the grid scenario builder.

Indices are 0-based throughout: components m in ``range(M)``, agents n in
``range(N)``, global measurement streams p in ``range(P)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

ROW_NORM_TOL = 1e-12


class ScenarioError(ValueError):
    """Raised when a scenario violates a structural requirement."""


@dataclass(frozen=True, eq=False)
class FieldParameter:
    """The static unknown field, optionally laid out on a 2-D grid.

    Component ``m`` of a ``(height, width)`` grid sits at cell
    ``(m // width, m % width)``.
    """

    values: np.ndarray
    grid: tuple[int, int] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size < 1:
            raise ScenarioError("field must have at least one component")
        object.__setattr__(self, "values", values)
        if self.grid is not None:
            h, w = (int(v) for v in self.grid)
            if h < 1 or w < 1 or h * w != values.size:
                raise ScenarioError(f"grid {h}x{w} does not match {values.size} components")
            object.__setattr__(self, "grid", (h, w))

    @property
    def M(self) -> int:
        return self.values.size

    def index(self, i: int, j: int) -> int:
        h, w = self._require_grid()
        if not (0 <= i < h and 0 <= j < w):
            raise IndexError(f"cell ({i}, {j}) outside {h}x{w} grid")
        return w * i + j

    def coords(self, m: int) -> tuple[int, int]:
        h, w = self._require_grid()
        if not 0 <= m < h * w:
            raise IndexError(f"component {m} outside grid")
        return divmod(m, w)

    def as_image(self) -> np.ndarray:
        h, w = self._require_grid()
        return self.values.reshape(h, w)

    def _require_grid(self) -> tuple[int, int]:
        if self.grid is None:
            raise ScenarioError("field has no grid mapping")
        return self.grid


def coupling_set(H) -> np.ndarray:
    """Indices of the columns of ``H`` holding at least one nonzero entry."""
    H = sp.csc_matrix(H)
    H.eliminate_zeros()
    return np.flatnonzero(np.diff(H.indptr)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class AgentSpec:
    """One agent: sparse sensing matrix ``H`` (P_n x M) and interest set."""

    id: int
    H: sp.csr_matrix
    interest: np.ndarray
    coupling: np.ndarray = field(init=False)

    def __post_init__(self):
        H = sp.csr_matrix(self.H, dtype=np.float64)
        H.sum_duplicates()
        H.eliminate_zeros()
        H.sort_indices()
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "interest", np.asarray(self.interest, dtype=np.int64).ravel())
        object.__setattr__(self, "coupling", coupling_set(H))

    @property
    def n_streams(self) -> int:
        return self.H.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]


def validate_agent(agent: AgentSpec) -> list[str]:
    """Return the list of violated agent invariants (empty when valid)."""
    problems = []
    if agent.n_streams:
        norms = np.sqrt(np.asarray(agent.H.multiply(agent.H).sum(axis=1)).ravel())
        bad = np.flatnonzero(np.abs(norms - 1.0) > ROW_NORM_TOL)
        if bad.size:
            problems.append(f"row norm: rows {bad.tolist()} are not unit length")
    I = agent.interest
    if I.size and (I.min() < 0 or I.max() >= agent.M):
        problems.append("interest out of range")
    if np.any(np.diff(I) <= 0):
        problems.append("interest not strictly ascending")
    missing = np.setdiff1d(agent.coupling, I)
    if missing.size:
        problems.append(f"coupling not subset of interest: missing {missing.tolist()}")
    return problems


def interested_agents(m: int, agents: Sequence[AgentSpec]) -> list[int]:
    """Agents whose interest set contains component ``m``."""
    if not agents:
        return []
    M = agents[0].M
    if not 0 <= m < M:
        raise IndexError(f"component {m} outside 0..{M - 1}")
    return [a.id for a in agents if _contains(a.interest, m)]


def _contains(sorted_idx: np.ndarray, m: int) -> bool:
    k = np.searchsorted(sorted_idx, m)
    return bool(k < sorted_idx.size and sorted_idx[k] == m)


def censored_measurement_matrix(agent: AgentSpec) -> sp.csr_matrix:
    """``H_n`` restricted to the columns in the interest set, in interest order."""
    return sp.csr_matrix(agent.H[:, agent.interest])


class StreamIndex:
    """Bijection between global stream ids and (owner agent, local row)."""

    def __init__(self, counts: Sequence[int]):
        self.counts = np.asarray(counts, dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(self.counts)))
        self.owner = np.repeat(np.arange(self.counts.size), self.counts)

    @classmethod
    def from_agents(cls, agents: Sequence[AgentSpec]) -> "StreamIndex":
        return cls([a.n_streams for a in agents])

    @property
    def P(self) -> int:
        return int(self.offsets[-1])

    def to_global(self, agent: int, row: int) -> int:
        if not 0 <= row < self.counts[agent]:
            raise IndexError(f"agent {agent} has no row {row}")
        return int(self.offsets[agent] + row)

    def to_local(self, p: int) -> tuple[int, int]:
        if not 0 <= p < self.P:
            raise IndexError(f"stream {p} outside 0..{self.P - 1}")
        n = int(self.owner[p])
        return n, int(p - self.offsets[n])

    def streams_of(self, agent_ids) -> np.ndarray:
        ids = np.unique(np.asarray(agent_ids, dtype=np.int64))
        if ids.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(self.offsets[n], self.offsets[n + 1]) for n in ids])


def stacked_rows(agents: Sequence[AgentSpec]) -> sp.csr_matrix:
    """All measurement rows h_p stacked in global stream order (P x M)."""
    return sp.csr_matrix(sp.vstack([a.H for a in agents], format="csr"))


class EntryLayout:
    """Flat indexing of every (agent, component) pair with component in the
    agent's interest set.

    Entries are agent-major and, within an agent, follow its interest order.
    The estimator and the metrics keep all local estimates in one vector
    of this layout.
    """

    def __init__(self, agents: Sequence[AgentSpec], M: int):
        sizes = np.array([a.interest.size for a in agents], dtype=np.int64)
        self.N = len(agents)
        self.M = int(M)
        self.offsets = np.concatenate(([0], np.cumsum(sizes)))
        self.S = int(self.offsets[-1])
        self.agent = np.repeat(np.arange(self.N), sizes)
        self.comp = (np.concatenate([a.interest for a in agents])
                     if self.N else np.zeros(0, dtype=np.int64))
        self.J_size = np.bincount(self.comp, minlength=self.M)
        self.interest_size = sizes

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.offsets[n]:self.offsets[n + 1]] for n in range(self.N)]

    def stack(self, parts: Sequence[np.ndarray]) -> np.ndarray:
        if len(parts) != self.N:
            raise ValueError("one vector per agent expected")
        x = np.concatenate([np.asarray(p, dtype=np.float64) for p in parts]) if parts else np.zeros(0)
        if x.size != self.S:
            raise ValueError("state lengths do not match interest sets")
        return x

    def restrict(self, theta: np.ndarray) -> np.ndarray:
        """theta restricted to every agent's interest set, stacked."""
        return np.asarray(theta, dtype=np.float64)[self.comp]


@dataclass(frozen=True)
class GridScenarioConfig:
    height: int
    width: int
    lattice_rows: int
    lattice_cols: int
    sense_halfwidth: int = 14
    interest_halfwidth: int = 28


def lattice_positions(cfg: GridScenarioConfig) -> np.ndarray:
    """Cell of each agent on a uniform lattice, agent k at lattice (k // cols, k % cols).

    Lattice row r sits at grid row floor((2r + 1) * height / (2 * rows)).
    """
    r = np.arange(cfg.lattice_rows)
    c = np.arange(cfg.lattice_cols)
    rows = (2 * r + 1) * cfg.height // (2 * cfg.lattice_rows)
    cols = (2 * c + 1) * cfg.width // (2 * cfg.lattice_cols)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _window(i: int, j: int, half: int, h: int, w: int) -> np.ndarray:
    ii = np.arange(max(0, i - half), min(h, i + half + 1))
    jj = np.arange(max(0, j - half), min(w, j + half + 1))
    return (ii[:, None] * w + jj[None, :]).ravel()


def build_grid_scenario(cfg: GridScenarioConfig) -> tuple[list[AgentSpec], np.ndarray]:
    """Agents on a lattice over a grid, each sensing (one canonical row per
    cell) and interested in the clipped Chebyshev windows around its cell.

    Returns the agents and their (row, col) cells.
    """
    h, w = cfg.height, cfg.width
    if min(h, w, cfg.lattice_rows, cfg.lattice_cols) < 1:
        raise ScenarioError("grid and lattice dimensions must be positive")
    if cfg.lattice_rows > h or cfg.lattice_cols > w:
        raise ScenarioError("lattice is denser than the grid")
    if not 0 <= cfg.sense_halfwidth <= cfg.interest_halfwidth:
        raise ScenarioError("need 0 <= sense_halfwidth <= interest_halfwidth")
    M = h * w
    positions = lattice_positions(cfg)
    agents = []
    for n, (i, j) in enumerate(positions):
        sensed = _window(i, j, cfg.sense_halfwidth, h, w)
        H = sp.csr_matrix(
            (np.ones(sensed.size), sensed, np.arange(sensed.size + 1)), shape=(sensed.size, M))
        agents.append(AgentSpec(n, H, _window(i, j, cfg.interest_halfwidth, h, w)))
    counts = np.bincount(np.concatenate([a.interest for a in agents]), minlength=M)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ScenarioError(f"{empty.size} components have no interested agent (first: {empty[0]})")
    return agents, positions
