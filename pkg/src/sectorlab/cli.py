"""Command line entry point: ``sectorlab run | validate | list-presets``."""
from __future__ import annotations

import argparse
import sys

from .config import FLAVORS, TASKS, ConfigError, _check_prerequisites, load_config
from .fem import COEFFICIENT_PRESETS
from .mesh import PRESETS
from .runner import run, write_outputs

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sectorlab", description="Sectoriality and semigroup verification runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write reports")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="random seed (overrides the config)")
    r.add_argument("--tasks", help="comma separated task list (overrides the config)")
    r.add_argument("--no-plots", action="store_true", help="skip SVG output")
    v = sub.add_parser("validate", help="parse and validate a scenario")
    v.add_argument("--config", required=True)
    sub.add_parser("list-presets", help="list domains, coefficients, tasks and flavors")
    return ap


def _load(args):
    sc = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        sc.seed = args.seed
    if getattr(args, "tasks", None):
        tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
        bad = [t for t in tasks if t not in TASKS]
        if bad or not tasks:
            raise ConfigError(f"unknown task(s) {bad}; choose from {', '.join(TASKS)}")
        sc.tasks = tasks
        _check_prerequisites(sc, {}, None)
    if getattr(args, "out", None):
        sc.output = args.out
    return sc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        print("domains:      " + ", ".join(PRESETS))
        print("coefficients: " + ", ".join(COEFFICIENT_PRESETS) + ", rot<kappa>, or a 2x2 matrix")
        print("tasks:        " + ", ".join(TASKS))
        print("flavors:      " + ", ".join(FLAVORS) + ", both")
        return EXIT_PASS
    try:
        sc = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"valid: {sc.domain} n={sc.resolution} tasks={','.join(sc.tasks)}")
        return EXIT_PASS
    report = run(sc)
    write_outputs(report, sc.output, plots=not args.no_plots)
    for r in report.runs:
        for t in r.tasks:
            status = "PASS" if t.passed else "FAIL"
            extra = f" ({t.error})" if t.error else ""
            print(f"[{status}] {r.flavor}/{t.name}{extra}")
    print(f"verdict: {'pass' if report.passed else 'fail'}  ->  {sc.output}/report.json")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
