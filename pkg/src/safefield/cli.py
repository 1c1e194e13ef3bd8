"""Command line entry point: ``safefield run|analyze|validate <config.json>``.

Exit codes: 0 success, 1 invalid config or scenario, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .attack import AttackError
from .config import ConfigError, load_config, shipped_config
from .estimator import ScheduleError
from .field import ScenarioError
from .network import TopologyError
from .pgm import PGMError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
_VALIDATION_ERRORS = (ConfigError, ScenarioError, TopologyError, ScheduleError, AttackError, PGMError)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safefield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run all trials and write traces, aggregate and report"),
                           ("analyze", "print the resilience report as JSON"),
                           ("validate", "check the config and the scenario assumptions")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", help="config file, or the name of a bundled config (desk, full)")
        s.add_argument("--seed", type=int, dest="master_seed")
        s.add_argument("--trials", type=int)
        s.add_argument("--out-dir", dest="out_dir")
        s.add_argument("--record-every", type=int, dest="record_every")
        s.add_argument("--estimator", choices=("safe", "cirfe"))
        s.add_argument("--steps", type=int, dest="T", help="override T")
        s.add_argument("--workers", type=int)
        if name == "analyze":
            s.add_argument("--trial", type=int, default=0, help="trial whose attack draw is analyzed")
    return p


def _load(args):
    path = Path(args.config)
    if not path.is_file() and path.suffix == "" and path.parent == Path("."):
        path = shipped_config(args.config)
    cfg = load_config(path)
    return cfg.with_overrides(master_seed=args.master_seed, trials=args.trials, out_dir=args.out_dir,
                              record_every=args.record_every, estimator=args.estimator, T=args.T,
                              workers=args.workers)


def _validate(cfg) -> int:
    from .harness import build_scenario, check_assumptions
    checks = check_assumptions(build_scenario(cfg))
    checks.pop("per_component_lambda2")
    ok = checks["agents_valid"] and checks["globally_observable"] and checks["components_connected"]
    print(json.dumps({"valid": ok, **checks}, indent=2))
    return EXIT_OK if ok else EXIT_VALIDATION


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "validate":
            return _validate(cfg)
        from .harness import analyze, run_experiment
        if args.command == "analyze":
            print(json.dumps(analyze(cfg, args.trial), indent=2))
            return EXIT_OK
        paths = run_experiment(cfg)
        for key, path in paths.items():
            print(f"{key}\t{path}")
        return EXIT_OK
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001  (exit code contract)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
