"""Main entry point for the proofplan harness."""

import argparse
import asyncio
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .db.database import Database
from .env.grid import GridParseError
from .extensions.errors import ScenarioError
from .pipeline.artifacts import ArtifactWriter
from .pipeline.orchestrator import NO_PLAN_ERRORS, ExperimentOrchestrator
from .pipeline.report import summary_table

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(name)s] %(levelname)s: %(message)s"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_PLAN = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proofplan",
        description="Constructive proof-based planning on grid worlds, with a Q-learning baseline.",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-o", "--out", default=None, help="output directory")
        return p

    p = add("plan", "build a plan from the closure of the compiled rules")
    p.add_argument("grid")

    p = add("train", "train the tabular Q-learning baseline")
    p.add_argument("grid")
    p.add_argument("-c", "--config", default=None, help="hyperparameter JSON")

    p = add("compare", "run both methods and write report.json / report.csv")
    p.add_argument("grid")
    p.add_argument("-c", "--config", default=None, help="hyperparameter JSON")

    p = add("chain", "plan through an ordered list of subgoals")
    p.add_argument("grid")
    p.add_argument("--subgoals", required=True, help='e.g. "haskey:a,haskey:b,at:8,8"')
    p.add_argument("--cache", default=None, help="fragment cache file, read and updated")

    p = add("worlds", "one plan valid in every possible world of a scenario directory")
    p.add_argument("directory")

    p = add("learn", "learn transition rules by probing a hidden environment")
    p.add_argument("grid")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = add("multi", "joint plan for digit agents with message passing")
    p.add_argument("scenario")

    p = sub.add_parser("runs", help="list recent runs from the ledger")
    p.add_argument("--limit", type=int, default=20)
    return parser


def _print_runs(runs) -> None:
    if not runs:
        print("No runs recorded.")
        return
    for run in runs:
        methods = ", ".join(f"{m.method}={m.status}" for m in run.methods) or "-"
        print(
            f"{run.short_id()}  {run.started_at:%Y-%m-%d %H:%M:%S}  {run.command:<8} "
            f"{run.status.value:<11} exit={run.exit_code}  {run.target}  [{methods}]"
        )


async def _dispatch(args: argparse.Namespace, orchestrator: ExperimentOrchestrator) -> int:
    if args.command == "plan":
        result = await orchestrator.run_plan(args.grid)
        print(f"Plan: {result.outcome.plan.total_length} moves, valid={result.validation.valid}")
    elif args.command == "train":
        result = await orchestrator.run_train(args.grid, args.config)
        print(
            f"Q-learning: {len(result.training.episodes)} episodes, "
            f"{result.metrics.invalid_actions} invalid actions, greedy success={result.rollout.success}"
        )
    elif args.command == "compare":
        report = await orchestrator.run_compare(args.grid, args.config)
        print(summary_table(report))
        if not report.solvable:
            print("UNSOLVABLE")
            return EXIT_NO_PLAN
    elif args.command == "chain":
        result = await orchestrator.run_chain(args.grid, args.subgoals, args.cache)
        print(f"Chained plan: {result.total_length} moves, milestones {list(result.milestones)}")
    elif args.command == "worlds":
        result = await orchestrator.run_worlds(args.directory)
        print(f"Conformant plan: {result.total_length} moves")
    elif args.command == "learn":
        result = await orchestrator.run_learn(args.grid, args.budget, args.seed)
        print(f"Learned {len(result.learned)} rules from {len(result.log)} probes")
    elif args.command == "multi":
        result = await orchestrator.run_multi(args.scenario)
        print(f"Joint plan: {result.rounds} rounds, {len(result.deliveries)} deliveries")
    elif args.command == "runs":
        _print_runs(await orchestrator.recent_runs(args.limit))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = load_config()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = (args.log_level or config.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )

    out_dir = Path(getattr(args, "out", None) or config.paths.out_dir)
    db = Database(config.ledger.db_path) if config.ledger.enabled else None
    orchestrator = ExperimentOrchestrator(config, ArtifactWriter(out_dir), db)
    logger.debug("Command %s, out dir %s, ledger %s", args.command, out_dir, db.db_path if db else "off")

    try:
        return asyncio.run(_dispatch(args, orchestrator))
    except NO_PLAN_ERRORS as e:
        print(f"UNSOLVABLE: {e}")
        return EXIT_NO_PLAN
    except GridParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ScenarioError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
