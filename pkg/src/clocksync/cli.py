"""Command line entry point.

    clocksync simulate --scenario FILE [--algo a,b] [--trials N] [--seed S] --out DIR [--format csv|json]
    clocksync predict-bias --scenario FILE
    clocksync validate --scenario FILE

Exit codes: 0 success, 2 invalid scenario, 3 failed invariant audit.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import prediction, run_experiment
from .oracle import SingularMeanLaplacian
from .results import emit_results
from .scenario import ALL_ALGORITHMS, ScenarioError, audit, load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_AUDIT = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clocksync", description="Distributed clock synchronization simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--algo", help=f"comma-separated subset of {','.join(ALL_ALGORITHMS)}")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")

    for name, text in (("predict-bias", "print occupancy and predicted bias"), ("validate", "audit a scenario")):
        q = sub.add_parser(name, help=text)
        q.add_argument("--scenario", required=True)
    return p


def _simulate(args, scenario) -> int:
    algos = None
    if args.algo:
        algos = [a.strip() for a in args.algo.split(",") if a.strip()]
        unknown = [a for a in algos if a not in ALL_ALGORITHMS]
        if unknown:
            print(f"error: unknown algorithm(s) {', '.join(unknown)}", file=sys.stderr)
            return EXIT_INVALID
    if args.trials is not None and args.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_INVALID
    problems = audit(scenario)
    if problems:
        for msg in problems:
            print(f"audit: {msg}", file=sys.stderr)
        return EXIT_AUDIT
    result = run_experiment(scenario, algos, args.trials, args.seed)
    for path in emit_results(result, args.out, args.format):
        print(path)
    return EXIT_OK


def _predict(scenario) -> int:
    try:
        pi, bias = prediction(scenario)
    except SingularMeanLaplacian as exc:
        print(f"audit: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    labels = list(range(1, scenario.n_b + 1))
    print(json.dumps({"occupancy": pi.tolist(), "nodes": labels, "bias": bias.tolist()}, indent=2))
    return EXIT_OK


def _validate(scenario) -> int:
    problems = audit(scenario)
    for msg in problems:
        print(f"audit: {msg}")
    if problems:
        return EXIT_AUDIT
    print(f"ok: {scenario.name}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "simulate":
            return _simulate(args, scenario)
        if args.command == "predict-bias":
            return _predict(scenario)
        return _validate(scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
