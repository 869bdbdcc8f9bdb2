"""Command-line entry point: ``rrl-lab {validate,run,sweep,compare,oracle}``.

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 gate failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rrl_lab.harness.config import ConfigError, ExperimentConfig
from rrl_lab.harness.runner import (
    check_gates,
    compare_baselines,
    frontier_sweep,
    oracle_frontier,
    run_experiment,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_GATE = 0, 1, 2, 3

log = logging.getLogger("rrl_lab")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrl-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "check a config document without running anything"),
        ("run", "train and evaluate every (cell, seed) unit"),
        ("sweep", "weight / threshold sweep producing a frontier table"),
        ("compare", "rule-based, engagement-only, penalty-shaped and RRL side by side"),
        ("oracle", "exact policy table and reward-cost front of a tabular environment"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path, help="experiment YAML document")
        p.add_argument("-o", "--output-dir", type=Path, default=None, help="overrides output_dir in the config")
        p.add_argument("-w", "--workers", type=int, default=1)
        p.add_argument("-s", "--seed", type=int, action="append", default=None, help="seed override (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = ExperimentConfig.load(args.config)
        if args.seed:
            data = config.to_dict()
            data["seeds"] = args.seed
            config = ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.output_dir or Path(config.output_dir)
    if args.command == "validate":
        print(f"ok: {len(config.cells())} cell(s) x {len(config.seeds)} seed(s)")
        return EXIT_OK
    try:
        if args.command == "run":
            records = run_experiment(config, workers=args.workers, output_dir=out)
            rows = [{"label": r.label, **r.metrics.to_dict()} for r in records]
            for r in records:
                m = r.metrics
                print(
                    f"{r.label} seed={r.seed}: return={m.mean_return:.4f} cost={m.safety_cost:.4f} "
                    f"violation={m.violation_probability:.3f}"
                )
        elif args.command == "sweep":
            table = frontier_sweep(config, workers=args.workers, output_dir=out)
            rows = table.rows
            for r in rows:
                print(
                    f"{r['label']}: return={r['engagement_return']:.4f} alignment={r['alignment']:.3f} "
                    f"cost={r['safety_cost']:.4f} pareto={r['pareto_index']:.3f}"
                )
        elif args.command == "compare":
            table = compare_baselines(config, workers=args.workers, output_dir=out)
            rows = table.rows
            for r in rows:
                print(
                    f"{r['agent']:>16}: return={r['mean_return']:.4f} engagement={r['engagement_rate']:.3f} "
                    f"alignment={r['emotional_alignment']:.3f} cost={r['safety_cost']:.4f} "
                    f"violation={r['violation_probability']:.3f}"
                )
        else:
            result = oracle_frontier(config, output_dir=out)
            rows = []
            for p in result["policies"]:
                print(f"policy {''.join(map(str, p['actions']))}: value={p['value_reward']:.6f} cost={p['value_cost']:.6f}")
            sol = result["constrained_optimum"]
            if sol is not None:
                print(f"constrained optimum: value={sol['optimal_value']:.6f} cost={sol['optimal_cost']:.6f}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to one exit code
        log.exception("run failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failures = check_gates(config.gates, rows)
    for f in failures:
        print(f"gate failed: {f}", file=sys.stderr)
    print(f"outputs written to {out}")
    return EXIT_GATE if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
