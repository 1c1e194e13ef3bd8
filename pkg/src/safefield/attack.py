"""Compromised measurement streams and the attack signals applied to them.

The constant signal replaces the measurement outright; the other signals are
added to the clean value. Every signal is a pure function of the stream, the
step and its seed, so replays are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    value: float = 255.0
    replaces = True

    def values(self, t: int, n: int) -> np.ndarray:
        return np.full(n, self.value)


@dataclass(frozen=True)
class Ramp:
    start: float = 0.0
    slope: float = 1.0
    replaces = False

    def values(self, t: int, n: int) -> np.ndarray:
        return np.full(n, self.start + self.slope * t)


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 1.0
    seed: int = 0
    replaces = False

    def values(self, t: int, n: int) -> np.ndarray:
        # counter-based draw: value at step t never depends on earlier steps
        bitgen = np.random.Philox(key=self.seed, counter=[t, 0, 0, 0])
        return self.mean + self.std * np.random.Generator(bitgen).standard_normal(n)


@dataclass(frozen=True)
class Table:
    """Additive offsets read from a table; the last entry holds after it ends."""

    table: tuple[float, ...]
    replaces = False

    def values(self, t: int, n: int) -> np.ndarray:
        if not self.table:
            raise AttackError("empty attack table")
        return np.full(n, self.table[min(t, len(self.table) - 1)])


Signal = Constant | Ramp | Gaussian | Table


def make_signal(spec: Mapping) -> Signal:
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(float(spec.get("value", 255.0)))
    if kind == "ramp":
        return Ramp(float(spec.get("start", 0.0)), float(spec.get("slope", 1.0)))
    if kind == "gaussian":
        return Gaussian(float(spec.get("mean", 0.0)), float(spec.get("std", 1.0)), int(spec.get("seed", 0)))
    if kind == "table":
        return Table(tuple(float(v) for v in spec["values"]))
    raise AttackError(f"unknown attack signal kind {kind!r}")


@dataclass(frozen=True, eq=False)
class AttackScenario:
    """Fixed set of compromised stream ids with a signal for each.

    ``signals`` maps stream id to signal; ``default`` covers any compromised
    stream without an explicit entry.
    """

    compromised: np.ndarray
    default: Signal | None = None
    signals: Mapping[int, Signal] = field(default_factory=dict)

    def __post_init__(self):
        A = np.unique(np.asarray(self.compromised, dtype=np.int64))
        object.__setattr__(self, "compromised", A)
        missing = [int(p) for p in A if int(p) not in self.signals and self.default is None]
        if missing:
            raise AttackError(f"no signal for compromised streams {missing[:10]}")
        groups: dict[Signal, list[int]] = {}
        for p in A:
            groups.setdefault(self.signals.get(int(p), self.default), []).append(int(p))
        object.__setattr__(self, "_groups", [(s, np.array(ps)) for s, ps in groups.items()])

    @classmethod
    def none(cls) -> "AttackScenario":
        return cls(np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.compromised.size

    def covers_all(self, P: int) -> bool:
        return np.unique(self.compromised[(self.compromised >= 0) & (self.compromised < P)]).size >= P

    def check(self, P: int) -> list[str]:
        problems = []
        if self.compromised.size and (self.compromised.min() < 0 or self.compromised.max() >= P):
            problems.append("compromised stream id outside 0..P-1")
        if self.covers_all(P):
            problems.append("every measurement stream is compromised")
        return problems


def apply_attack(clean: np.ndarray, scen: AttackScenario, t: int) -> np.ndarray:
    """Observed measurements at step ``t``; uncompromised entries are copied."""
    out = np.array(clean, dtype=np.float64, copy=True)
    if scen.compromised.size and scen.compromised.max() >= out.size:
        raise AttackError("compromised stream id outside measurement vector")
    for signal, idx in scen._groups:
        vals = signal.values(t, idx.size)
        if signal.replaces:
            out[idx] = vals
        else:
            out[idx] += vals
    return out


def sample_compromised_agents(N: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct agents drawn uniformly without replacement, ascending."""
    if not 0 <= k <= N:
        raise AttackError(f"cannot compromise {k} of {N} agents")
    return np.sort(rng.choice(N, size=k, replace=False)).astype(np.int64)


def agents_attack(stream_index, agent_ids: Sequence[int], signal: Signal) -> AttackScenario:
    """Compromise every stream owned by the given agents."""
    return AttackScenario(stream_index.streams_of(agent_ids), default=signal)
