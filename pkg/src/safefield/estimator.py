"""Saturating consensus+innovations field estimator and its identity-gain baseline.

Two implementations of one round are provided:

* :func:`safe_step` / :func:`cirfe_step` work agent by agent on explicit
  censored messages. They are written for clarity and serve as the
  reference in tests.
* :class:`FieldEstimator` runs all agents at once on the flat
  (agent, component) state of :class:`~safefield.field.EntryLayout`.
  Every shared component of an active edge contributes one difference term,
  which is exactly what the censored messages produce.

All state is float64 and rounds are synchronous: every agent reads the
time-t snapshot before any agent commits t+1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import metrics
from .attack import AttackScenario, apply_attack
from .field import AgentSpec, EntryLayout, FieldParameter, StreamIndex, censored_measurement_matrix
from .network import GraphSample, TopologyModel, sample_graph
from .seeding import SeedBook

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightSchedule:
    """alpha_t = a/(t+1)^tau1, beta_t = b/(t+1)^tau2, gamma_t = Gamma/(t+1)^tau_gamma."""

    a: float = 1.0
    b: float = 0.0839
    tau1: float = 0.26
    tau2: float = 0.001
    Gamma: float = 40.0
    tau_gamma: float = 0.25

    def violations(self) -> list[str]:
        out = []
        if not self.a > 0:
            out.append(f"a must be positive (got {self.a})")
        if not self.b > 0:
            out.append(f"b must be positive (got {self.b})")
        if not self.Gamma > 0:
            out.append(f"Gamma must be positive (got {self.Gamma})")
        if not 0 < self.tau2 < self.tau1 < 1:
            out.append(f"need 0 < tau2 < tau1 < 1 (got tau2={self.tau2}, tau1={self.tau1})")
        bound = min(0.5, self.tau1 - self.tau2, 1 - self.tau1)
        if not 0 < self.tau_gamma < bound:
            out.append(f"need 0 < tauGamma < min(1/2, tau1 - tau2, 1 - tau1) = {bound:g} "
                       f"(got {self.tau_gamma})")
        return out

    def validate(self) -> "WeightSchedule":
        problems = self.violations()
        if problems:
            raise ScheduleError("; ".join(problems))
        return self

    @property
    def max_decay_exponent(self) -> float:
        """Upper bound (exclusive) on the polynomial rate tau0 the estimator guarantees."""
        return min(self.tau_gamma, 0.5 - self.tau_gamma)

    def alpha(self, t):
        return self.a / (np.asarray(t, dtype=np.float64) + 1.0) ** self.tau1

    def beta(self, t):
        return self.b / (np.asarray(t, dtype=np.float64) + 1.0) ** self.tau2

    def gamma(self, t):
        return self.Gamma / (np.asarray(t, dtype=np.float64) + 1.0) ** self.tau_gamma


def alpha(s: WeightSchedule, t) -> float:
    return float(s.alpha(t))


def beta(s: WeightSchedule, t) -> float:
    return float(s.beta(t))


def gamma(s: WeightSchedule, t) -> float:
    return float(s.gamma(t))


# per-agent reference operations

def _check_len(x, I, who):
    if len(x) != len(I):
        raise ValueError(f"{who}: vector of length {len(x)} for interest set of size {len(I)}")


def censor_received(x_l, I_l, I_n) -> np.ndarray:
    """Neighbour l's estimate re-indexed to agent n's interest set; components
    n tracks but l does not are zero."""
    x_l, I_l, I_n = np.asarray(x_l, dtype=np.float64), np.asarray(I_l), np.asarray(I_n)
    _check_len(x_l, I_l, "censor_received")
    out = np.zeros(I_n.size)
    pos = np.searchsorted(I_l, I_n)
    pos_c = np.minimum(pos, max(I_l.size - 1, 0))
    hit = (pos < I_l.size) & (I_l[pos_c] == I_n) if I_l.size else np.zeros(I_n.size, bool)
    out[hit] = x_l[pos_c[hit]]
    return out


def censor_self(x_n, I_n, I_l) -> np.ndarray:
    """Agent n's own estimate with components l does not track zeroed."""
    x_n, I_n = np.asarray(x_n, dtype=np.float64), np.asarray(I_n)
    _check_len(x_n, I_n, "censor_self")
    return np.where(np.isin(I_n, I_l), x_n, 0.0)


def update_time_average(ybar_prev, y, t: int) -> np.ndarray:
    """Running mean of measurements 0..t (``ybar_prev`` is the mean through t-1)."""
    return (t / (t + 1.0)) * np.asarray(ybar_prev, dtype=np.float64) + (1.0 / (t + 1.0)) * np.asarray(y)


def saturating_gains(innov, gamma_t: float) -> np.ndarray:
    """k_p = min(1, gamma_t / |innov_p|), with k_p = 1 for a zero innovation."""
    innov = np.abs(np.asarray(innov, dtype=np.float64))
    k = np.ones_like(innov)
    big = innov > gamma_t
    k[big] = gamma_t / innov[big]
    return k


@dataclass
class AgentState:
    x: np.ndarray
    ybar: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, agent: AgentSpec) -> "AgentState":
        return cls(np.zeros(agent.interest.size), np.zeros(agent.n_streams), 0)


def _neighbours(graph: GraphSample, N: int) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(N)]
    for u, v in graph.edges:
        if u >= N or v >= N:
            raise ValueError(f"edge ({u}, {v}) names an unknown agent")
        nbrs[u].append(int(v))
        nbrs[v].append(int(u))
    return [sorted(n) for n in nbrs]


def safe_step(states: Sequence[AgentState], graph: GraphSample, y, agents: Sequence[AgentSpec],
              schedule: WeightSchedule, t: int, saturate: bool = True) -> list[AgentState]:
    """One synchronous round, agent by agent, from the time-t snapshot.

    ``y`` is the stacked observed measurement vector or one vector per agent.
    """
    N = len(agents)
    if len(states) != N:
        raise ValueError("one state per agent expected")
    if not isinstance(y, (list, tuple)):
        idx = StreamIndex.from_agents(agents)
        y = np.asarray(y, dtype=np.float64)
        if y.size != idx.P:
            raise ValueError(f"expected {idx.P} measurements, got {y.size}")
        y = [y[idx.offsets[n]:idx.offsets[n + 1]] for n in range(N)]
    nbrs = _neighbours(graph, N)
    a_t, b_t, g_t = alpha(schedule, t), beta(schedule, t), gamma(schedule, t)
    new = []
    for n, (st, ag) in enumerate(zip(states, agents)):
        if st.x.size != ag.interest.size or st.ybar.size != ag.n_streams or len(y[n]) != ag.n_streams:
            raise ValueError(f"agent {n}: dimension mismatch")
        Hc = censored_measurement_matrix(ag)
        ybar = update_time_average(st.ybar, y[n], t)
        innov = ybar - Hc @ st.x
        k = saturating_gains(innov, g_t) if saturate else np.ones_like(innov)
        cons = np.zeros_like(st.x)
        for l in nbrs[n]:
            cons += censor_self(st.x, ag.interest, agents[l].interest) \
                - censor_received(states[l].x, agents[l].interest, ag.interest)
        x_next = st.x - b_t * cons + a_t * (Hc.T @ (k * innov))
        new.append(AgentState(x_next, ybar, t + 1))
    return new


def cirfe_step(states, graph, y, agents, schedule, t) -> list[AgentState]:
    """The unhardened baseline: :func:`safe_step` with every gain fixed at one."""
    return safe_step(states, graph, y, agents, schedule, t, saturate=False)


# vectorized engine

class FieldEstimator:
    """All agents' estimates in one flat vector, updated one round at a time.

    The estimator only sees observed measurements and the active graph; it
    never learns which streams are compromised.
    """

    def __init__(self, agents: Sequence[AgentSpec], M: int, topology: TopologyModel,
                 schedule: WeightSchedule, saturate: bool = True):
        if topology.N != len(agents):
            raise ValueError("topology and agent list disagree on N")
        self.agents = list(agents)
        self.layout = EntryLayout(self.agents, M)
        self.streams = StreamIndex.from_agents(self.agents)
        self.topology = topology
        self.schedule = schedule
        self.saturate = saturate
        rows, cols, vals = [], [], []
        for n, a in enumerate(self.agents):
            block = censored_measurement_matrix(a).tocoo()
            rows.append(block.row + self.streams.offsets[n])
            cols.append(block.col + self.layout.offsets[n])
            vals.append(block.data)
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        self.Hc = sp.csr_matrix((cat(vals, np.float64), (cat(rows, np.int64), cat(cols, np.int64))),
                                shape=(self.streams.P, self.layout.S))
        self.HcT = self.Hc.T.tocsr()
        self._build_pairs()
        self.x = np.zeros(self.layout.S)
        self.ybar = np.zeros(self.streams.P)
        self.t = 0
        self.last_gamma = np.inf
        self.last_clipped_max = 0.0

    def _build_pairs(self):
        off = self.layout.offsets
        pa, pb, pe = [], [], []
        for e, (u, v) in enumerate(self.topology.edges):
            _, iu, iv = np.intersect1d(self.agents[u].interest, self.agents[v].interest,
                                       assume_unique=True, return_indices=True)
            pa.append(off[u] + iu)
            pb.append(off[v] + iv)
            pe.append(np.full(iu.size, e))
        cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)
        self.pair_a, self.pair_b, self.pair_edge = cat(pa), cat(pb), cat(pe)
        self._fixed_L = None
        if self.topology.always_on:
            # sum over pairs of (e_a - e_b)(e_a - e_b)^T
            a, b = self.pair_a, self.pair_b
            ones = np.ones(a.size)
            S = self.layout.S
            L = sp.coo_matrix((np.concatenate([ones, ones, -ones, -ones]),
                               (np.concatenate([a, b, a, b]), np.concatenate([a, b, b, a]))), shape=(S, S))
            self._fixed_L = L.tocsr()

    def consensus(self, x: np.ndarray, active: np.ndarray | None) -> np.ndarray:
        """sum over active neighbours of (x_n - x_l) on shared components."""
        if self._fixed_L is not None and (active is None or active.all()):
            return self._fixed_L @ x
        d = x[self.pair_a] - x[self.pair_b]
        if active is not None and not active.all():
            d[~active[self.pair_edge]] = 0.0
        S = self.layout.S
        return np.bincount(self.pair_a, weights=d, minlength=S) - np.bincount(self.pair_b, weights=d, minlength=S)

    def step(self, y: np.ndarray, active: np.ndarray | None = None) -> None:
        t = self.t
        s = self.schedule
        self.ybar = update_time_average(self.ybar, y, t)
        innov = self.ybar - self.Hc @ self.x
        if self.saturate:
            g_t = gamma(s, t)
            innov = np.clip(innov, -g_t, g_t)
            self.last_gamma = g_t
        if innov.size:
            self.last_clipped_max = float(np.max(np.abs(innov)))
        cons = self.consensus(self.x, active)
        self.x = self.x - beta(s, t) * cons + alpha(s, t) * (self.HcT @ innov)
        self.t = t + 1

    def states(self) -> list[AgentState]:
        ys = [self.ybar[self.streams.offsets[n]:self.streams.offsets[n + 1]] for n in range(len(self.agents))]
        return [AgentState(x.copy(), yb.copy(), self.t) for x, yb in zip(self.layout.split(self.x), ys)]


# simulation driver

@dataclass(frozen=True, eq=False)
class Problem:
    field: FieldParameter
    agents: Sequence[AgentSpec]
    topology: TopologyModel
    noise_variance: float = 0.0


class _Noise:
    """Per-agent Gaussian noise streams, drawn in blocks of steps.

    Block draws consume each generator exactly as step-by-step draws would,
    so the values do not depend on the block size.
    """

    def __init__(self, streams: StreamIndex, variance: float, seeds: SeedBook, max_block: int = 256):
        self.std = float(np.sqrt(variance))
        self.counts = streams.counts
        self.rngs = [seeds.rng(f"noise:{n}") for n in range(self.counts.size)]
        self.block = int(max(1, min(max_block, 2_000_000 // max(streams.P, 1))))
        self._buf = np.zeros((0, streams.P))
        self._k = 0

    def next(self) -> np.ndarray:
        if self._k >= len(self._buf):
            parts = [rng.standard_normal((self.block, int(c))) for rng, c in zip(self.rngs, self.counts)]
            self._buf = self.std * np.hstack(parts)
            self._k = 0
        row = self._buf[self._k]
        self._k += 1
        return row


@dataclass
class RunResult:
    trace: metrics.MetricTrace
    x: np.ndarray
    layout: EntryLayout
    initial: metrics.Snapshot
    saturation_excess: float  # max over steps of (max |clipped innovation| - gamma_t)
    steps: int


def run(problem: Problem, schedule: WeightSchedule, T: int, *, estimator: str = "safe",
        attack: AttackScenario | None = None, seeds: SeedBook | None = None,
        record_every: int = 1, per_agent: bool = False,
        on_step: Callable[[int, FieldEstimator], None] | None = None) -> RunResult:
    """Run ``T`` synchronous rounds and record metrics.

    Records are taken after rounds ``k, 2k, ...`` and after the last round,
    ``ceil(T / record_every)`` in all.
    """
    if estimator not in ("safe", "cirfe"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if T < 1 or record_every < 1:
        raise ValueError("T and record_every must be positive")
    seeds = seeds or SeedBook(0)
    attack = attack or AttackScenario.none()
    theta = problem.field.values
    est = FieldEstimator(problem.agents, problem.field.M, problem.topology, schedule,
                         saturate=(estimator == "safe"))
    rows = sp.vstack([a.H for a in problem.agents], format="csr")
    clean_mean = rows @ theta
    noise = _Noise(est.streams, problem.noise_variance, seeds) if problem.noise_variance > 0 else None
    graph_rng = seeds.rng("graph")
    fixed_graph = problem.topology.always_on

    layout = est.layout
    trace = metrics.MetricTrace(rmse=[] if per_agent else None)
    initial = metrics.snapshot(layout, est.x, theta)
    excess = -np.inf
    for t in range(T):
        y = clean_mean + noise.next() if noise is not None else clean_mean
        y = apply_attack(y, attack, t) if len(attack) else y
        active = None if fixed_graph else sample_graph(problem.topology, graph_rng, t).active
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            est.step(y, active)
        if est.saturate:
            excess = max(excess, est.last_clipped_max - est.last_gamma)
        if on_step is not None:
            on_step(t, est)
        done = t + 1
        if done % record_every == 0 or done == T:
            _check_finite(est, done)
            trace.append(done, metrics.snapshot(layout, est.x, theta))
    return RunResult(trace, est.x, layout, initial, float(excess), T)


def _check_finite(est: FieldEstimator, t: int) -> None:
    bad = ~np.isfinite(est.x)
    if bad.any():
        n = int(est.layout.agent[np.argmax(bad)])
        raise SimulationError(f"non-finite estimate at step {t} (agent {n})")
