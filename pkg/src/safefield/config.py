"""Experiment configuration: JSON loading and validation.

Example (the 625-agent study)::

    {
      "name": "full",
      "field": {"source": "pgm", "path": "field.pgm"},
      "scenario": {"grid": [230, 230], "lattice": [25, 25],
                   "sense_halfwidth": 14, "interest_halfwidth": 28},
      "topology": {"base": "mesh(25, 25)", "activation": 1.0},
      "noise": {"variance": 50},
      "attack": {"mode": "agents_uniform", "count": 70,
                 "signal": {"kind": "constant", "value": 255}},
      "schedule": {"a": 1, "b": 0.0839, "tau1": 0.26, "tau2": 0.001,
                   "Gamma": 40, "tauGamma": 0.25},
      "estimator": "safe",
      "T": 3000, "trials": 100, "record_every": 10, "master_seed": 0,
      "output": {"dir": "runs/full"}
    }

A relative ``field.path`` is resolved against the config file's directory;
a relative ``output.dir`` against the working directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .estimator import WeightSchedule


class ConfigError(ValueError):
    def __init__(self, problems: list[str] | str):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


ATTACK_MODES = ("none", "agents_uniform", "agents", "streams")
SIGNAL_KINDS = ("constant", "ramp", "gaussian", "table")
FIELD_KINDS = ("uniform", "texture")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: dict
    field: dict
    topology: dict
    schedule: WeightSchedule
    noise_variance: float = 0.0
    attack: dict = field(default_factory=lambda: {"mode": "none"})
    estimator: str = "safe"
    T: int = 1000
    trials: int = 1
    record_every: int = 1
    master_seed: int = 0
    out_dir: Path = Path("runs")
    per_agent_rmse: bool = False
    vertex_limit: int = 20
    workers: int = 1
    name: str = "experiment"
    base_dir: Path = Path(".")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "out_dir" in kw:
            kw["out_dir"] = Path(kw["out_dir"])
        cfg = replace(self, **kw)
        problems = _check_counts(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


def _check_counts(cfg: ExperimentConfig) -> list[str]:
    out = []
    if cfg.T < 1:
        out.append("T must be >= 1")
    if cfg.trials < 1:
        out.append("trials must be >= 1")
    if cfg.record_every < 1:
        out.append("record_every must be >= 1")
    if cfg.workers < 1:
        out.append("workers must be >= 1")
    return out


def _pair(v, name, problems) -> tuple[int, int] | None:
    if (isinstance(v, (list, tuple)) and len(v) == 2
            and all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in v)):
        return int(v[0]), int(v[1])
    problems.append(f"{name} must be a pair of positive integers")
    return None


def _int(d: dict, key: str, default, problems, minimum=None) -> Any:
    v = d.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        problems.append(f"{key} must be an integer")
        return default
    if minimum is not None and v < minimum:
        problems.append(f"{key} must be >= {minimum}")
    return v


def _num(d: dict, key: str, default, problems) -> float:
    v = d.get(key, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        problems.append(f"{key} must be a number")
        return float(default) if default is not None else 0.0
    return float(v)


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    """Validate a decoded config; every problem is reported at once."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    sc = raw.get("scenario")
    scenario = {}
    if not isinstance(sc, dict):
        problems.append("scenario block is required")
    else:
        lattice = _pair(sc.get("lattice"), "scenario.lattice", problems)
        grid = _pair(sc["grid"], "scenario.grid", problems) if "grid" in sc else None
        hs = _int(sc, "sense_halfwidth", 14, problems, 0)
        hi = _int(sc, "interest_halfwidth", 28, problems, 0)
        if isinstance(hs, int) and isinstance(hi, int) and hs > hi:
            problems.append("sense_halfwidth must not exceed interest_halfwidth")
        scenario = {"grid": grid, "lattice": lattice, "sense_halfwidth": hs, "interest_halfwidth": hi}

    fd = raw.get("field", {"source": "synthetic"})
    if not isinstance(fd, dict) or fd.get("source") not in ("pgm", "synthetic"):
        problems.append('field.source must be "pgm" or "synthetic"')
        fd = {"source": "synthetic"}
    fd = dict(fd)
    if fd["source"] == "pgm":
        if not isinstance(fd.get("path"), str):
            problems.append("field.path is required for a pgm field")
        else:
            fd["path"] = str((base_dir / fd["path"]).resolve())
    else:
        fd.setdefault("kind", "uniform")
        fd.setdefault("seed", 0)
        if fd["kind"] not in FIELD_KINDS:
            problems.append(f"field.kind must be one of {FIELD_KINDS}")
        if scenario and scenario.get("grid") is None:
            problems.append("a synthetic field needs scenario.grid")

    tp = raw.get("topology")
    if not isinstance(tp, dict) or "base" not in tp:
        problems.append('topology block with a "base" graph is required')
        tp = {"base": None}
    tp = {"base": tp.get("base"), "activation": tp.get("activation", 1.0)}
    act = tp["activation"]
    acts = act if isinstance(act, list) else [act]
    if not all(isinstance(a, (int, float)) and not isinstance(a, bool) and 0 < a <= 1 for a in acts):
        problems.append("topology.activation values must lie in (0, 1]")

    noise = raw.get("noise", {})
    variance = _num(noise if isinstance(noise, dict) else {}, "variance", 0.0, problems)
    if variance < 0:
        problems.append("noise.variance must be >= 0")

    attack = raw.get("attack") or {"mode": "none"}
    problems += _check_attack(attack)

    sd = raw.get("schedule")
    schedule = WeightSchedule()
    if not isinstance(sd, dict):
        problems.append("schedule block is required")
    else:
        keys = {"a": "a", "b": "b", "tau1": "tau1", "tau2": "tau2", "Gamma": "Gamma", "tauGamma": "tau_gamma"}
        missing = [k for k in keys if k not in sd]
        if missing:
            problems.append(f"schedule is missing {missing}")
        else:
            schedule = WeightSchedule(**{attr: _num(sd, k, 1.0, problems) for k, attr in keys.items()})
            problems += [f"schedule: {p}" for p in schedule.violations()]

    estimator = raw.get("estimator", "safe")
    if estimator not in ("safe", "cirfe"):
        problems.append('estimator must be "safe" or "cirfe"')

    out = raw.get("output", {})
    out_dir = Path(out.get("dir", "runs") if isinstance(out, dict) else "runs")

    cfg = ExperimentConfig(
        scenario=scenario, field=fd, topology=tp, schedule=schedule,
        noise_variance=variance, attack=attack, estimator=estimator,
        T=_int(raw, "T", 1000, problems), trials=_int(raw, "trials", 1, problems),
        record_every=_int(raw, "record_every", 1, problems),
        master_seed=_int(raw, "master_seed", 0, problems, 0),
        out_dir=out_dir, per_agent_rmse=bool(raw.get("per_agent_rmse", False)),
        vertex_limit=_int(raw, "vertex_limit", 20, problems, 0),
        workers=_int(raw, "workers", 1, problems),
        name=str(raw.get("name", "experiment")), base_dir=base_dir,
    )
    problems += _check_counts(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _check_attack(attack) -> list[str]:
    if not isinstance(attack, dict):
        return ["attack must be an object"]
    mode = attack.get("mode", "none")
    if mode not in ATTACK_MODES:
        return [f"attack.mode must be one of {ATTACK_MODES}"]
    if mode == "none":
        return []
    problems = []
    if mode == "agents_uniform":
        c = attack.get("count")
        if not isinstance(c, int) or isinstance(c, bool) or c < 0:
            problems.append("attack.count must be a nonnegative integer")
    else:
        key = "agents" if mode == "agents" else "streams"
        ids = attack.get(key)
        if not isinstance(ids, list) or not all(isinstance(i, int) and i >= 0 for i in ids):
            problems.append(f"attack.{key} must be a list of nonnegative integers")
    sig = attack.get("signal")
    if not isinstance(sig, dict) or sig.get("kind") not in SIGNAL_KINDS:
        problems.append(f"attack.signal.kind must be one of {SIGNAL_KINDS}")
    elif sig["kind"] == "table" and not isinstance(sig.get("values"), list):
        problems.append("attack.signal.values must be a list for a table signal")
    return problems


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(raw, path.parent)


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package (``"desk"`` or ``"full"``)."""
    path = Path(str(resources.files("safefield") / "configs" / f"{name}.json"))
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
