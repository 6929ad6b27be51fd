"""Experiment orchestrator: runs each method, writes artifacts, records the ledger."""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Awaitable, Callable, TypeVar
from uuid import uuid4

from ..config import Config, load_hyperparams
from ..db.database import Database
from ..db.models import ExperimentRun, MethodLog, RunStatus
from ..env.compiler import compile_rules
from ..env.grid import GridWorld, grid_digest, read_grid
from ..extensions.errors import NoConformantPlan, NoJointPlan
from ..extensions.learning import HiddenEnv, LearningResult, learn_rules
from ..extensions.multi_agent import MultiAgentPlan, load_scenario, multi_agent_plan, replay_agent_plan
from ..extensions.worlds import load_world_set, plan_under_uncertainty, validate_in_worlds
from ..logic.engine import close
from ..planner.chain import parse_subgoals, plan_chain
from ..planner.models import MemoCache, Plan, SubgoalUnreachable, Unsolvable, ValidationResult
from ..planner.search import PlanOutcome, oracle_shortest, plan, validate_plan
from ..rl.qlearning import Hyperparams, Rollout, TrainingResult, episodes_required, greedy_rollout, train_q
from .artifacts import ArtifactWriter, render_exploration, render_trace
from .report import (
    CONSTRUCTIVE,
    Q_LEARNING,
    REPORT_CSV_FIELDS,
    ExperimentReport,
    MethodMetrics,
    SeedMetrics,
    aggregate_seeds,
    plan_to_doc,
    proof_to_doc,
    validate_report,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

NO_PLAN_ERRORS = (Unsolvable, SubgoalUnreachable, NoJointPlan, NoConformantPlan)


def _elapsed_ms(started: float, record: bool) -> float:
    return round((time.perf_counter() - started) * 1000, 3) if record else 0.0


@dataclass
class SeedRun:
    metrics: SeedMetrics
    training: TrainingResult
    rollout: Rollout


def _train_seed(world: GridWorld, hp: Hyperparams, record_timing: bool) -> SeedRun:
    """Top-level so worker processes can pickle it."""
    started = time.perf_counter()
    training = train_q(world, hp)
    rollout = greedy_rollout(training.q, world, hp.max_steps_per_episode)
    metrics = SeedMetrics(
        seed=hp.seed,
        invalid_actions=training.total_invalid,
        episodes_required=episodes_required(training.episodes),
        greedy_success=rollout.success,
        greedy_length=rollout.length if rollout.success else None,
        wall_time_ms=_elapsed_ms(started, record_timing),
    )
    return SeedRun(metrics=metrics, training=training, rollout=rollout)


@dataclass
class PlanRun:
    world: GridWorld
    outcome: PlanOutcome
    validation: ValidationResult


class ExperimentOrchestrator:
    def __init__(self, config: Config, writer: ArtifactWriter, db: Database | None = None):
        self.config = config
        self.writer = writer
        self.db = db
        self._db_ready = False

    # ── Ledger ──

    async def _ledger(self, action: Callable[[Database], Awaitable[None]]) -> None:
        if self.db is None:
            return
        try:
            if not self._db_ready:
                await self.db.init()
                self._db_ready = True
            await action(self.db)
        except Exception as e:
            logger.warning("Ledger write failed: %s", e)

    async def _log_method(
        self,
        run: ExperimentRun,
        method: str,
        started_at: datetime,
        status: str,
        invalid_actions: int = 0,
        plan_length: int | None = None,
        wall_time_ms: float = 0.0,
        details: str = "",
        error: str | None = None,
    ) -> None:
        log = MethodLog(
            id=str(uuid4()),
            run_id=run.id,
            method=method,
            started_at=started_at,
            finished_at=datetime.now(),
            status=status,
            invalid_actions=invalid_actions,
            plan_length=plan_length,
            wall_time_ms=wall_time_ms,
            details=details,
            error=error,
        )
        run.methods.append(log)
        await self._ledger(lambda db: db.save_method_log(log))

    async def _tracked(
        self,
        command: str,
        target: str | Path,
        body: Callable[[ExperimentRun], Awaitable[T]],
    ) -> T:
        """Record a ledger run around `body`; failures are logged and re-raised."""
        run = ExperimentRun(
            id=str(uuid4()),
            command=command,
            target=str(target),
            started_at=datetime.now(),
            finished_at=None,
            status=RunStatus.RUNNING,
            out_dir=str(self.writer.out_dir),
        )
        self.writer.start_run()
        await self._ledger(lambda db: db.save_run(run))
        try:
            result = await body(run)
        except NO_PLAN_ERRORS as e:
            logger.info("%s %s: no plan: %s", command, target, e)
            await self._ledger(lambda db: db.finish_run(run.id, RunStatus.UNSOLVABLE, 2, run.grid_digest or None))
            raise
        except (ValueError, OSError) as e:
            logger.error("%s %s: %s", command, target, e)
            await self._ledger(lambda db: db.finish_run(run.id, RunStatus.FAILED, 1, run.grid_digest or None))
            raise
        except Exception:
            logger.exception("%s %s failed", command, target)
            await self._ledger(lambda db: db.finish_run(run.id, RunStatus.FAILED, 1, run.grid_digest or None))
            raise
        status = RunStatus.UNSOLVABLE if isinstance(result, ExperimentReport) and not result.solvable else RunStatus.COMPLETED
        await self._ledger(
            lambda db: db.finish_run(run.id, status, 2 if status is RunStatus.UNSOLVABLE else 0, run.grid_digest or None)
        )
        return result

    # ── Shared steps ──

    def _write_plan_artifacts(self, world: GridWorld, result: Plan, validation: ValidationResult, digest: str) -> None:
        self.writer.write_json("plan.json", plan_to_doc(result, digest, validation))
        self.writer.write_text("trace.txt", render_trace(world, result))

    async def _constructive(self, run: ExperimentRun, world: GridWorld) -> PlanRun:
        started_at = datetime.now()
        started = time.perf_counter()
        env = compile_rules(world)
        try:
            outcome = plan(env, world)
        except Unsolvable as e:
            await self._log_method(
                run, CONSTRUCTIVE, started_at, "UNSOLVABLE",
                wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing), error=str(e),
            )
            raise
        validation = validate_plan(outcome.plan, world)
        self._write_plan_artifacts(world, outcome.plan, validation, env.digest)
        self.writer.write_json("proof.json", proof_to_doc(outcome.proof, outcome.graph))
        await self._log_method(
            run,
            CONSTRUCTIVE,
            started_at,
            "COMPLETED",
            invalid_actions=len(validation.invalid_steps),
            plan_length=outcome.plan.total_length,
            wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing),
            details=f"closure {len(outcome.closure)} facts, {outcome.stats.rule_applications} rule applications",
        )
        return PlanRun(world=world, outcome=outcome, validation=validation)

    def _write_training_artifacts(self, world: GridWorld, seed_run: SeedRun) -> None:
        training = seed_run.training
        self.writer.write_json("qtable.json", training.q.to_json())
        self.writer.write_csv(
            "episodes.csv",
            ["episode", "steps", "invalid_count", "success"],
            (
                {"episode": m.episode, "steps": m.steps, "invalid_count": m.invalid_count, "success": str(m.success).lower()}
                for m in training.episodes
            ),
        )
        self.writer.write_json("trajectory.json", seed_run.rollout.to_json())
        self.writer.write_text(
            "exploration.txt",
            render_exploration(world, dict(training.visits), dict(training.invalid_attempts)),
        )

    async def _train_seeds(self, world: GridWorld, hp: Hyperparams, seeds: list[int]) -> list[SeedRun]:
        record = self.config.compare.record_timing
        workers = min(self.config.compare.workers, len(seeds))
        if workers <= 1:
            return [_train_seed(world, replace(hp, seed=s), record) for s in seeds]
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [loop.run_in_executor(pool, _train_seed, world, replace(hp, seed=s), record) for s in seeds]
            runs = await asyncio.gather(*futures)
        return sorted(runs, key=lambda r: r.metrics.seed)

    def _hyperparams(self, config_path: str | Path | None) -> Hyperparams:
        return load_hyperparams(config_path, self.config.seed_override)

    # ── Commands ──

    async def run_plan(self, grid_path: str | Path) -> PlanRun:
        async def body(run: ExperimentRun) -> PlanRun:
            world = read_grid(grid_path)
            run.grid_digest = grid_digest(world)
            return await self._constructive(run, world)

        return await self._tracked("plan", grid_path, body)

    async def run_train(self, grid_path: str | Path, config_path: str | Path | None) -> SeedRun:
        async def body(run: ExperimentRun) -> SeedRun:
            hp = self._hyperparams(config_path)
            world = read_grid(grid_path)
            run.grid_digest = grid_digest(world)
            started_at = datetime.now()
            seed_run = (await self._train_seeds(world, hp, [hp.seed]))[0]
            self._write_training_artifacts(world, seed_run)
            await self._log_method(
                run,
                Q_LEARNING,
                started_at,
                "COMPLETED",
                invalid_actions=seed_run.metrics.invalid_actions,
                plan_length=seed_run.metrics.greedy_length,
                wall_time_ms=seed_run.metrics.wall_time_ms,
                details=f"seed {hp.seed}, {hp.episodes} episodes",
            )
            return seed_run

        return await self._tracked("train", grid_path, body)

    async def run_compare(self, grid_path: str | Path, config_path: str | Path | None) -> ExperimentReport:
        async def body(run: ExperimentRun) -> ExperimentReport:
            hp = self._hyperparams(config_path)
            world = read_grid(grid_path)
            run.grid_digest = grid_digest(world)
            oracle = oracle_shortest(world)
            optimal = oracle.length if oracle is not None else None
            record = self.config.compare.record_timing

            started = time.perf_counter()
            try:
                planned = await self._constructive(run, world)
                constructive = MethodMetrics(
                    method=CONSTRUCTIVE,
                    success=planned.validation.valid,
                    invalid_actions=len(planned.validation.invalid_steps),
                    episodes_required=1,
                    plan_length=planned.outcome.plan.total_length,
                    optimal_length=optimal,
                    wall_time_ms=_elapsed_ms(started, record),
                )
            except Unsolvable:
                constructive = MethodMetrics(
                    method=CONSTRUCTIVE,
                    success=False,
                    invalid_actions=0,
                    episodes_required=1,
                    plan_length=None,
                    optimal_length=optimal,
                    wall_time_ms=_elapsed_ms(started, record),
                )

            seeds = [hp.seed + i for i in range(self.config.compare.seeds)]
            started_at = datetime.now()
            seed_runs = await self._train_seeds(world, hp, seeds)
            self._write_training_artifacts(world, seed_runs[0])
            q_metrics = aggregate_seeds([r.metrics for r in seed_runs], optimal)
            await self._log_method(
                run,
                Q_LEARNING,
                started_at,
                "COMPLETED" if q_metrics.success else "FAILED",
                invalid_actions=q_metrics.invalid_actions,
                plan_length=q_metrics.plan_length,
                wall_time_ms=q_metrics.wall_time_ms,
                details=f"seeds {seeds[0]}..{seeds[-1]}, {hp.episodes} episodes",
            )

            artifacts = {name: str(path) for name, path in self.writer.written.items()}
            artifacts["report_csv"] = str(self.writer.path("report.csv"))
            report = ExperimentReport(
                grid=str(grid_path),
                grid_digest=run.grid_digest,
                solvable=oracle is not None,
                optimal_length=optimal,
                config={**hp.to_json(), "seeds": seeds},
                methods=[constructive, q_metrics],
                seeds=[r.metrics for r in seed_runs],
                artifacts=artifacts,
            )
            doc = report.to_json()
            validate_report(doc)
            self.writer.write_json("report.json", doc)
            self.writer.write_csv("report.csv", REPORT_CSV_FIELDS, report.csv_rows())
            return report

        return await self._tracked("compare", grid_path, body)

    async def run_chain(self, grid_path: str | Path, subgoals_text: str, cache_path: str | Path | None = None) -> Plan:
        async def body(run: ExperimentRun) -> Plan:
            world = read_grid(grid_path)
            run.grid_digest = grid_digest(world)
            subgoals = parse_subgoals(subgoals_text)
            env = compile_rules(world)
            cache = MemoCache.load(cache_path) if cache_path else MemoCache()
            started_at = datetime.now()
            started = time.perf_counter()
            chained = plan_chain(env, subgoals, cache)
            validation = validate_plan(chained, world)
            self._write_plan_artifacts(world, chained, validation, env.digest)
            self.writer.write_json(
                "chain.json",
                {
                    "subgoals": [str(s) for s in subgoals],
                    "milestones": list(chained.milestones),
                    "total_length": chained.total_length,
                    "valid": validation.valid,
                    "cache": {"hits": cache.hits, "misses": cache.misses, "entries": len(cache)},
                },
            )
            if cache_path:
                cache.save(cache_path)
            await self._log_method(
                run,
                "chain",
                started_at,
                "COMPLETED",
                invalid_actions=len(validation.invalid_steps),
                plan_length=chained.total_length,
                wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing),
                details=f"{len(subgoals)} subgoals, cache {cache.hits} hits",
            )
            return chained

        return await self._tracked("chain", grid_path, body)

    async def run_worlds(self, worlds_dir: str | Path) -> Plan:
        async def body(run: ExperimentRun) -> Plan:
            scenario = load_world_set(worlds_dir)
            run.grid_digest = scenario.env.digest
            started_at = datetime.now()
            started = time.perf_counter()
            conformant = plan_under_uncertainty(
                scenario.worlds, scenario.env.rules, scenario.env.goal_prop, scenario.env.digest
            )
            per_world = validate_in_worlds(conformant, scenario.world, scenario.worlds, scenario.env.rules)
            validation = validate_plan(conformant, scenario.world)
            self._write_plan_artifacts(scenario.world, conformant, validation, scenario.env.digest)
            self.writer.write_json(
                "worlds.json",
                {
                    "worlds": {name: result.to_json() for name, result in per_world.items()},
                    "conformant": all(r.valid and r.reached_goal for r in per_world.values()),
                    "total_length": conformant.total_length,
                },
            )
            await self._log_method(
                run,
                "conformant",
                started_at,
                "COMPLETED",
                plan_length=conformant.total_length,
                wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing),
                details=f"{len(scenario.worlds)} worlds",
            )
            return conformant

        return await self._tracked("worlds", worlds_dir, body)

    async def run_learn(self, grid_path: str | Path, budget: int, seed: int) -> LearningResult:
        async def body(run: ExperimentRun) -> LearningResult:
            world = read_grid(grid_path)
            run.grid_digest = grid_digest(world)
            env = compile_rules(world)
            started_at = datetime.now()
            started = time.perf_counter()
            result = learn_rules(HiddenEnv.from_world(world), budget, seed)

            compiled = set(env.rules)
            closure, _, _ = close(env.initial, env.rules)
            reachable = {r for r in env.rules if r.antecedents <= closure.facts}
            learned = sorted(result.learned, key=lambda r: r.id)
            self.writer.write_json("learned_rules.json", [r.to_json() for r in learned])
            self.writer.write_csv(
                "probes.csv",
                ["probe", "source", "target", "action", "inventory", "success", "rule_id"],
                (record.to_row() for record in result.log),
            )
            self.writer.write_json(
                "learning.json",
                {
                    "budget": budget,
                    "seed": seed,
                    "probes": len(result.log),
                    "successes": result.successes,
                    "learned": len(learned),
                    "sound": set(result.learned) <= compiled,
                    "reachable_rules": len(reachable),
                    "complete": set(result.learned) == reachable,
                },
            )
            await self._log_method(
                run,
                "learning",
                started_at,
                "COMPLETED",
                wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing),
                details=f"{len(result.log)} probes, {len(learned)} rules",
            )
            return result

        return await self._tracked("learn", grid_path, body)

    async def run_multi(self, scenario_path: str | Path) -> MultiAgentPlan:
        async def body(run: ExperimentRun) -> MultiAgentPlan:
            scenario = load_scenario(scenario_path)
            run.grid_digest = scenario.env.digest
            started_at = datetime.now()
            started = time.perf_counter()
            joint = multi_agent_plan(scenario.world, scenario.comm_rules, scenario.goal, self.config.max_rounds)
            replays = {
                agent: replay_agent_plan(
                    scenario.world, scenario.env.rules, agent, joint.plans[agent], joint.deliveries, scenario.goal
                )[0]
                for agent in sorted(joint.plans)
            }
            self.writer.write_json("plans.json", joint.to_json())
            self.writer.write_csv(
                "schedule.csv",
                ["sent_round", "delivered_round", "sender", "recipient", "fact"],
                (d.to_json() for d in joint.deliveries),
            )
            self.writer.write_json(
                "validation.json",
                {
                    "agents": {agent: result.to_json() for agent, result in replays.items()},
                    "goal": str(scenario.goal),
                    "goal_holds": joint.goal_holds(scenario.goal),
                    "rounds": joint.rounds,
                },
            )
            await self._log_method(
                run,
                "multi_agent",
                started_at,
                "COMPLETED",
                wall_time_ms=_elapsed_ms(started, self.config.compare.record_timing),
                details=f"{len(joint.plans)} agents, {joint.rounds} rounds, {len(joint.deliveries)} deliveries",
            )
            return joint

        return await self._tracked("multi", scenario_path, body)

    async def recent_runs(self, limit: int) -> list[ExperimentRun]:
        if self.db is None:
            return []
        await self.db.init()
        return await self.db.get_recent_runs(limit)
