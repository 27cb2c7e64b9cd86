"""``symdp run``: load or generate a problem, run one planner, write CSV."""

from __future__ import annotations

import argparse
import sys

from .adaptive import DEFAULT_EPSILON
from .dp import DEFAULT_TOL
from .experiment import ALGORITHMS, ExperimentConfig, ExperimentError, emit_csv, run_experiment


def _generator_spec(text: str) -> tuple[int, int, int, int]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected seed,nVars,nActions,maxParents")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("generator spec entries must be integers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symdp", description="Symbolic planners for factored MDPs.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one planner and write a CSV convergence log")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", metavar="FILE", help="model file")
    src.add_argument("--generate", metavar="SEED,NVARS,NACTIONS,MAXPARENTS", type=_generator_spec,
                     help="generate a random problem instead of loading one")
    run.add_argument("--algo", required=True, choices=ALGORITHMS)
    run.add_argument("--trials", type=int, default=100)
    run.add_argument("--steps", type=int, default=20)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--delta", type=float, default=None,
                     help="value-generalization width (default: 1%% of V's leaf range)")
    run.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    run.add_argument("--tol", type=float, default=DEFAULT_TOL)
    run.add_argument("--heuristic", choices=("bound", "future"), default="bound")
    run.add_argument("--runs", type=int, default=1)
    run.add_argument("--out", metavar="FILE", help="CSV output path (default: stdout)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig(
            algo=args.algo, model_path=args.model, generate=args.generate, trials=args.trials,
            steps=args.steps, seed=args.seed, delta=args.delta, epsilon=args.epsilon, tol=args.tol,
            heuristic=args.heuristic, runs=args.runs, out=args.out,
        )
    except ExperimentError as e:
        parser.error(str(e))
    try:
        rows = run_experiment(config)
    except (ValueError, OSError) as e:
        print(f"symdp: {e}", file=sys.stderr)
        return 1
    if config.out is None:
        emit_csv(rows, sys.stdout)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
