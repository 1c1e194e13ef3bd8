"""Error and agreement diagnostics over the flat (agent, component) state.

All functions take an :class:`~safefield.field.EntryLayout` plus the flat
estimate vector ``x`` (see ``EntryLayout.stack``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field import EntryLayout


class MetricError(ValueError):
    pass


def generalized_average(layout: EntryLayout, x: np.ndarray) -> np.ndarray:
    """Per-component mean of the estimates held by the interested agents."""
    if np.any(layout.J_size == 0):
        raise MetricError("some component has no interested agent")
    return np.bincount(layout.comp, weights=x, minlength=layout.M) / layout.J_size


def consensus_residual(layout: EntryLayout, x: np.ndarray, xbar: np.ndarray | None = None) -> float:
    """l2 distance of every local estimate from the generalized average."""
    if xbar is None:
        xbar = generalized_average(layout, x)
    return float(np.linalg.norm(x - xbar[layout.comp]))


def average_error(xbar: np.ndarray, theta: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(xbar) - np.asarray(theta)))


def per_agent_error(layout: EntryLayout, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """||x_n - theta restricted to I_n||_2 for every agent."""
    err = x - layout.restrict(theta)
    return np.sqrt(np.bincount(layout.agent, weights=err * err, minlength=layout.N))


def per_agent_rmse(layout: EntryLayout, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-agent error normalized by the square root of its interest-set size."""
    size = np.maximum(layout.interest_size, 1)
    return per_agent_error(layout, x, theta) / np.sqrt(size)


def worst_case_reconstruction(layout: EntryLayout, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """For each component, the interested agent's estimate farthest from the
    truth; ties go to the lowest agent id."""
    if np.any(layout.J_size == 0):
        raise MetricError("some component has no interested agent")
    dev = np.abs(x - layout.restrict(theta))
    order = np.lexsort((layout.agent, -dev, layout.comp))
    first = np.concatenate(([0], np.cumsum(layout.J_size)[:-1]))
    return x[order[first]]


@dataclass
class Snapshot:
    max_rmse: float
    avg_err: float
    consensus_residual: float
    max_err: float
    rmse: np.ndarray


def snapshot(layout: EntryLayout, x: np.ndarray, theta: np.ndarray) -> Snapshot:
    xbar = generalized_average(layout, x)
    err = per_agent_error(layout, x, theta)
    rmse = err / np.sqrt(np.maximum(layout.interest_size, 1))
    return Snapshot(
        max_rmse=float(rmse.max()),
        avg_err=average_error(xbar, theta),
        consensus_residual=consensus_residual(layout, x, xbar),
        max_err=float(err.max()),
        rmse=rmse,
    )


@dataclass
class MetricTrace:
    """Metrics at the recorded steps. ``max_err`` is the largest unnormalized
    per-agent error; ``rmse`` holds per-agent rows when requested."""

    t: list[int] = field(default_factory=list)
    max_rmse: list[float] = field(default_factory=list)
    avg_err: list[float] = field(default_factory=list)
    consensus_residual: list[float] = field(default_factory=list)
    max_err: list[float] = field(default_factory=list)
    rmse: list[np.ndarray] | None = None

    def append(self, t: int, snap: Snapshot) -> None:
        if self.t and t <= self.t[-1]:
            raise MetricError("trace steps must increase")
        self.t.append(int(t))
        self.max_rmse.append(snap.max_rmse)
        self.avg_err.append(snap.avg_err)
        self.consensus_residual.append(snap.consensus_residual)
        self.max_err.append(snap.max_err)
        if self.rmse is not None:
            self.rmse.append(snap.rmse.copy())

    def __len__(self) -> int:
        return len(self.t)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(trace: MetricTrace, path: str | Path) -> None:
    header = ["t", "max_rmse", "avg_err", "consensus_residual"]
    if trace.rmse is not None and trace.rmse:
        header += [f"rmse_{n}" for n in range(len(trace.rmse[0]))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, t in enumerate(trace.t):
            row = [str(t), _fmt(trace.max_rmse[k]), _fmt(trace.avg_err[k]), _fmt(trace.consensus_residual[k])]
            if trace.rmse is not None and trace.rmse:
                row += [_fmt(v) for v in trace.rmse[k]]
            w.writerow(row)


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return {name: cols[:, i] for i, name in enumerate(header)}


@dataclass
class DecayCertificate:
    weighted: np.ndarray
    first_mean: float
    last_mean: float
    threshold: float
    passed: bool


def decay_certificate(t, values, tau0: float, *, tau_gamma: float | None = None,
                      eps: float | None = None) -> DecayCertificate:
    """Finite-run check that ``(t+1)**tau0 * value`` is driven toward zero.

    Passes when the mean of the weighted sequence over the last decade of
    steps (t >= t_last / 10) is below its mean over the first decade
    (t <= 10 t_first), and the last weighted value is below ``eps``
    (default: the first weighted value). With ``tau_gamma`` given, ``tau0``
    must satisfy 0 <= tau0 < min(tau_gamma, 1/2 - tau_gamma).
    """
    if tau_gamma is not None and not 0 <= tau0 < min(tau_gamma, 0.5 - tau_gamma):
        raise MetricError(f"tau0={tau0} outside [0, {min(tau_gamma, 0.5 - tau_gamma)})")
    if tau0 < 0:
        raise MetricError("tau0 must be nonnegative")
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if t.size < 2 or t.shape != values.shape:
        raise MetricError("need at least two aligned records")
    if np.any(np.diff(t) <= 0):
        raise MetricError("steps must be strictly increasing")
    weighted = (t + 1.0) ** tau0 * values
    first = weighted[: max(1, int(np.searchsorted(t, 10.0 * max(t[0], 1.0), side="right")))]
    last = weighted[min(t.size - 1, int(np.searchsorted(t, t[-1] / 10.0, side="left"))):]
    threshold = float(weighted[0]) if eps is None else float(eps)
    first_mean, last_mean = float(first.mean()), float(last.mean())
    passed = bool(last_mean < first_mean and weighted[-1] < threshold)
    return DecayCertificate(weighted, first_mean, last_mean, threshold, passed)
