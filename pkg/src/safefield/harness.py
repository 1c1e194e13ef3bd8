"""Experiment runner: builds scenarios from a config, runs seeded trials and
writes traces, aggregates, the resilience report and reconstructions."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import metrics
from .attack import AttackScenario, agents_attack, make_signal, sample_compromised_agents
from .config import ExperimentConfig
from .estimator import Problem, run
from .field import (FieldParameter, GridScenarioConfig, ScenarioError, StreamIndex,
                    build_grid_scenario, stacked_rows, validate_agent)
from .network import check_component_connectivity, parse_topology
from .pgm import load_field_pgm, write_pgm
from .resilience import check_global_observability, check_resilience
from .seeding import SeedBook

log = logging.getLogger(__name__)

DECAY_TAU0 = 0.1  # rate exponent checked on every trial's max-RMSE trace


def synthetic_field(height: int, width: int, kind: str = "uniform", seed: int = 0) -> FieldParameter:
    """Seeded stand-in fields in [0, 255]: i.i.d. uniform pixels, or a
    texture mixing smooth blobs with fine grain."""
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        img = rng.uniform(0.0, 255.0, size=(height, width))
    elif kind == "texture":
        coarse = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=max(height, width) / 25)
        fine = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=1.0)
        img = coarse / coarse.std() + 0.5 * fine / fine.std()
        img = 255.0 * (img - img.min()) / (img.max() - img.min())
    else:
        raise ValueError(f"unknown synthetic field kind {kind!r}")
    return FieldParameter(img.ravel(), (height, width))


def build_field(cfg: ExperimentConfig) -> FieldParameter:
    fd = cfg.field
    if fd["source"] == "pgm":
        f = load_field_pgm(fd["path"])
        grid = cfg.scenario.get("grid")
        if grid is not None and tuple(grid) != f.grid:
            raise ScenarioError(f"scenario grid {grid} does not match image {f.grid}")
        return f
    h, w = cfg.scenario["grid"]
    return synthetic_field(h, w, fd.get("kind", "uniform"), int(fd.get("seed", 0)))


@dataclass
class Scenario:
    problem: Problem
    positions: np.ndarray
    streams: StreamIndex


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    f = build_field(cfg)
    h, w = f.grid
    rows, cols = cfg.scenario["lattice"]
    grid_cfg = GridScenarioConfig(h, w, rows, cols, cfg.scenario["sense_halfwidth"],
                                  cfg.scenario["interest_halfwidth"])
    agents, positions = build_grid_scenario(grid_cfg)
    topo = parse_topology(cfg.topology["base"], cfg.topology["activation"], n_agents=len(agents))
    if topo.N != len(agents):
        raise ScenarioError(f"topology has {topo.N} vertices but the lattice has {len(agents)} agents")
    problem = Problem(f, agents, topo, cfg.noise_variance)
    return Scenario(problem, positions, StreamIndex.from_agents(agents))


def build_attack(cfg: ExperimentConfig, sc: Scenario, seeds: SeedBook) -> tuple[AttackScenario, np.ndarray]:
    """Attack for one trial and the compromised agent ids (empty for stream lists)."""
    a = cfg.attack
    mode = a.get("mode", "none")
    N = len(sc.problem.agents)
    if mode == "none":
        return AttackScenario.none(), np.zeros(0, dtype=np.int64)
    spec = dict(a["signal"])
    if spec["kind"] == "gaussian" and "seed" not in spec:
        spec["seed"] = seeds.seed("attack_signal")
    signal = make_signal(spec)
    if mode == "streams":
        return AttackScenario(np.asarray(a["streams"], dtype=np.int64), default=signal), np.zeros(0, np.int64)
    if mode == "agents":
        ids = np.unique(np.asarray(a["agents"], dtype=np.int64))
        if ids.size and ids.max() >= N:
            raise ScenarioError("attack names an agent outside the lattice")
    else:
        ids = sample_compromised_agents(N, a["count"], seeds.rng("attack_selection"))
    return agents_attack(sc.streams, ids, signal), ids


def check_assumptions(sc: Scenario) -> dict:
    """Structural checks that must hold before the estimator is meaningful."""
    agents = sc.problem.agents
    agent_problems = {a.id: p for a in agents if (p := validate_agent(a))}
    obs = check_global_observability(stacked_rows(agents))
    conn = check_component_connectivity(sc.problem.topology, agents)
    return {
        "agents_valid": not agent_problems,
        "agent_problems": {str(k): v for k, v in agent_problems.items()},
        "globally_observable": obs.observable,
        "lambda_min_GP": obs.lambda_min,
        "components_connected": conn.ok,
        "disconnected_components": conn.failing.tolist(),
        "per_component_lambda2": [None if np.isnan(v) else float(v) for v in conn.lambda2],
    }


def resilience_entry(cfg: ExperimentConfig, sc: Scenario, attack: AttackScenario, agent_ids) -> dict:
    P = sc.streams.P
    entry = {"compromised_agents": [int(i) for i in agent_ids], "n_compromised_streams": len(attack)}
    if attack.covers_all(P):
        entry.update(lambda_min_GN=0.0, delta_A=None, method=None, kappa=None, **{"pass": False},
                     error="every measurement stream is compromised")
        return entry
    rep = check_resilience(stacked_rows(sc.problem.agents), attack.compromised, cfg.vertex_limit)
    entry.update(lambda_min_GN=rep.lambda_min_GN, delta_A=rep.delta_A, method=rep.method,
                 kappa=rep.kappa, **{"pass": rep.passed})
    return entry


def analyze(cfg: ExperimentConfig, trial: int = 0, sc: Scenario | None = None) -> dict:
    """Resilience report for the attack drawn in ``trial``."""
    sc = sc or build_scenario(cfg)
    attack, ids = build_attack(cfg, sc, SeedBook(cfg.master_seed, trial))
    report = {"name": cfg.name, "trial": trial}
    report.update(resilience_entry(cfg, sc, attack, ids))
    report.update(check_assumptions(sc))
    return report


@dataclass
class TrialResult:
    trial: int
    trace: metrics.MetricTrace
    reconstruction: np.ndarray
    resilience: dict
    initial_max_rmse: float


def run_trial(cfg: ExperimentConfig, trial: int, sc: Scenario | None = None) -> TrialResult:
    sc = sc or build_scenario(cfg)
    seeds = SeedBook(cfg.master_seed, trial)
    attack, ids = build_attack(cfg, sc, seeds)
    res = run(sc.problem, cfg.schedule, cfg.T, estimator=cfg.estimator, attack=attack, seeds=seeds,
              record_every=cfg.record_every, per_agent=cfg.per_agent_rmse)
    recon = metrics.worst_case_reconstruction(res.layout, res.x, sc.problem.field.values)
    entry = resilience_entry(cfg, sc, attack, ids)
    entry["trial"] = trial
    entry["final_max_rmse"] = res.trace.max_rmse[-1]
    if len(res.trace) >= 2:
        tau0 = min(DECAY_TAU0, 0.5 * cfg.schedule.max_decay_exponent)
        cert = metrics.decay_certificate(res.trace.t, res.trace.max_rmse, tau0,
                                         tau_gamma=cfg.schedule.tau_gamma)
        entry["decay_certificate"] = {"tau0": tau0, "pass": cert.passed,
                                      "first_decade_mean": cert.first_mean, "last_decade_mean": cert.last_mean}
    log.info("trial %d done: final max RMSE %.4g", trial, res.trace.max_rmse[-1])
    return TrialResult(trial, res.trace, recon.reshape(sc.problem.field.grid), entry, res.initial.max_rmse)


def _run_trial_job(args) -> TrialResult:
    cfg, trial = args
    return run_trial(cfg, trial)


def aggregate(traces: list[metrics.MetricTrace]) -> dict[str, np.ndarray]:
    t = np.asarray(traces[0].t)
    for tr in traces[1:]:
        if not np.array_equal(tr.t, t):
            raise ValueError("traces were recorded at different steps")
    stack = np.array([tr.max_rmse for tr in traces])
    return {"t": t, "mean_max_rmse": stack.mean(axis=0), "max_max_rmse": stack.max(axis=0)}


def write_aggregate_csv(agg: dict[str, np.ndarray], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean_max_rmse", "max_max_rmse"])
        for t, mean, mx in zip(agg["t"], agg["mean_max_rmse"], agg["max_max_rmse"]):
            w.writerow([int(t), format(mean, ".17g"), format(mx, ".17g")])


def run_experiment(cfg: ExperimentConfig) -> dict[str, Path]:
    """Run every trial and write the artifacts; returns their paths.

    Trials run in worker processes when ``cfg.workers > 1``; every file is
    written here, in trial order, so output does not depend on scheduling.
    """
    sc = build_scenario(cfg)
    checks = check_assumptions(sc)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_trial_job, [(cfg, k) for k in range(cfg.trials)]))
    else:
        results = [run_trial(cfg, k, sc) for k in range(cfg.trials)]

    paths: dict[str, Path] = {}
    for r in results:
        p = out / f"trace_trial{r.trial:03d}.csv"
        metrics.write_trace_csv(r.trace, p)
        paths[p.stem] = p
        p = out / f"reconstruction_trial{r.trial:03d}.pgm"
        write_pgm(p, r.reconstruction)
        paths[p.stem] = p
    agg_path = out / "aggregate.csv"
    write_aggregate_csv(aggregate([r.trace for r in results]), agg_path)
    paths["aggregate"] = agg_path

    report = {"name": cfg.name, "estimator": cfg.estimator, "T": cfg.T, "trials": cfg.trials,
              "master_seed": cfg.master_seed, "initial_max_rmse": results[0].initial_max_rmse}
    first = results[0].resilience
    report.update({k: first[k] for k in ("lambda_min_GN", "delta_A", "method", "kappa", "pass")})
    report.update(checks)
    report["per_trial"] = [r.resilience for r in results]
    rep_path = out / "report.json"
    rep_path.write_text(json.dumps(report, indent=2) + "\n")
    paths["report"] = rep_path
    return paths
