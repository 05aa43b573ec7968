"""Command line entry point: ``fris-isac run`` and ``fris-isac validate``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError
from .experiments import KINDS, override, parse_config, run_experiment
from .numerics import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fris-isac", description="fRIS-aided ISAC joint design experiments")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment and write CSV + manifest")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--experiment", choices=KINDS, help="experiment kind (overrides the config)")
    run.add_argument("--scheme", help="comma-separated schemes: proposed,conven,dps,rand")
    run.add_argument("--trials", type=int, help="Monte Carlo trials")
    run.add_argument("--seed", type=_u64, help="base seed")
    run.add_argument("--out", help="output directory")
    val = sub.add_parser("validate", help="check a config file and print the resolved settings")
    val.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, plan = parse_config(args.config)
        if args.command == "validate":
            print(f"ok: {plan.kind} with N={config.N}, M={config.M}, K={config.K}, alpha={config.alpha}")
            return EXIT_OK
        schemes = tuple(s.strip().lower() for s in args.scheme.split(",") if s.strip()) if args.scheme else None
        plan = override(plan, kind=args.experiment, schemes=schemes, trials=args.trials, seed=args.seed,
                        out=args.out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result, path = run_experiment(config, plan)
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote {path} ({len(result.rows)} rows)")
    if result.failures:
        print(f"solver failure: {result.failures} trial(s) failed", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
