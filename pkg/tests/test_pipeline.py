import asyncio
import json
from datetime import datetime

import jsonschema
import pytest

from conftest import fixture_path, load_fixture
from src.config import load_config
from src.db.database import Database
from src.db.models import ExperimentRun, MethodLog, RunStatus
from src.env.compiler import compile_rules
from src.planner.models import Unsolvable
from src.planner.search import plan, validate_plan
from src.pipeline.artifacts import ArtifactWriter, read_trace_cells, render_exploration, render_trace
from src.pipeline.orchestrator import ExperimentOrchestrator
from src.pipeline.report import (
    CONSTRUCTIVE,
    Q_LEARNING,
    SeedMetrics,
    aggregate_seeds,
    plan_to_doc,
    proof_from_doc,
    proof_to_doc,
    validate_report,
)

# ── Traces ──


@pytest.mark.parametrize("name", ["corridor.grid", "key_corridor.grid", "one_key_5x5.grid", "two_key_9x9.grid"])
def test_trace_overlay_reparses_to_the_plan_cells(name):
    world = load_fixture(name)
    outcome = plan(compile_rules(world), world)
    trace = render_trace(world, outcome.plan)
    assert read_trace_cells(trace) == outcome.plan.cells()


def test_trace_marks_keys_and_doors():
    world = load_fixture("key_corridor.grid")
    outcome = plan(compile_rules(world), world)
    lines = render_trace(world, outcome.plan).split("\n")
    assert lines[0] == "SkdG"
    assert lines[1] == ""
    assert lines[3] == "2. E (1,0)->(2,0) by rule 6: at(1,0) & has_key(a)"


def test_tampered_trace_is_rejected():
    world = load_fixture("corridor.grid")
    trace = render_trace(world, plan(compile_rules(world), world).plan)
    with pytest.raises(ValueError):
        read_trace_cells(trace.replace("S*G", "S.G", 1))


def test_exploration_heat_map(corridor):
    text = render_exploration(corridor, {(0, 0): 10, (1, 0): 5}, {(0, 0): 3})
    assert text.split("\n") == [
        "visits (peak 10)",
        "94.",
        "",
        "invalid attempts (peak 3, total 3)",
        "9..",
    ]


# ── Documents ──


def test_proof_document_round_trips(two_key):
    outcome = plan(compile_rules(two_key), two_key)
    doc = json.loads(json.dumps(proof_to_doc(outcome.proof, outcome.graph)))
    assert proof_from_doc(doc) == outcome.proof
    assert doc["depth"] == outcome.proof.depth
    orders = [entry["order"] for entry in doc["derivation"]]
    assert orders == sorted(orders)
    assert doc["derivation"][0]["rule"] == "axiom"


def test_plan_document(corridor):
    env = compile_rules(corridor)
    outcome = plan(env, corridor)
    doc = plan_to_doc(outcome.plan, env.digest, validate_plan(outcome.plan, corridor))
    assert doc["total_length"] == 2
    assert doc["cells"] == [[0, 0], [1, 0], [2, 0]]
    assert doc["valid"] is True
    assert doc["invalid_steps"] == []


def test_seed_aggregation_is_order_independent():
    seeds = [
        SeedMetrics(seed=0, invalid_actions=120, episodes_required=900, greedy_success=True, greedy_length=8, wall_time_ms=10.0),
        SeedMetrics(seed=1, invalid_actions=80, episodes_required=1400, greedy_success=True, greedy_length=10, wall_time_ms=5.5),
    ]
    forward, backward = aggregate_seeds(seeds, 8), aggregate_seeds(list(reversed(seeds)), 8)
    assert forward == backward
    assert forward.method == Q_LEARNING
    assert (forward.invalid_actions, forward.episodes_required, forward.plan_length) == (200, 1400, 10)
    assert forward.wall_time_ms == 15.5
    assert forward.success


def test_report_schema_rejects_a_third_method():
    doc = {
        "grid": "g",
        "grid_digest": "0" * 64,
        "solvable": True,
        "optimal_length": 2,
        "config": {
            "alpha": 0.1,
            "gamma_discount": 0.99,
            "epsilon_start": 1.0,
            "epsilon_end": 0.05,
            "epsilon_decay_episodes": None,
            "episodes": 10,
            "max_steps_per_episode": 20,
            "seed": 0,
        },
        "methods": [],
        "seeds": [],
        "artifacts": {},
    }
    row = {
        "method": CONSTRUCTIVE,
        "success": True,
        "invalid_actions": 0,
        "episodes_required": 1,
        "plan_length": 2,
        "optimal_length": 2,
        "wall_time_ms": 0.1,
    }
    doc["methods"] = [row, {**row, "method": Q_LEARNING}]
    validate_report(doc)
    doc["methods"].append(row)
    with pytest.raises(jsonschema.ValidationError):
        validate_report(doc)


# ── Orchestrator and ledger ──


def _orchestrator(tmp_path, db=True):
    config = load_config()
    return ExperimentOrchestrator(
        config,
        ArtifactWriter(tmp_path / "out"),
        Database(tmp_path / "runs.db") if db else None,
    )


def test_plan_run_is_recorded(tmp_path):
    orchestrator = _orchestrator(tmp_path)
    asyncio.run(orchestrator.run_plan(fixture_path("one_key_5x5.grid")))

    (run,) = asyncio.run(orchestrator.recent_runs(5))
    assert run.command == "plan"
    assert run.status is RunStatus.COMPLETED
    assert run.exit_code == 0
    assert len(run.grid_digest) == 64
    assert [m.method for m in run.methods] == [CONSTRUCTIVE]
    assert run.methods[0].plan_length == 8
    assert run.methods[0].invalid_actions == 0
    for name in ("plan.json", "proof.json", "trace.txt"):
        assert (tmp_path / "out" / name).exists()


def test_unsolvable_run_is_recorded(tmp_path):
    orchestrator = _orchestrator(tmp_path)
    with pytest.raises(Unsolvable):
        asyncio.run(orchestrator.run_plan(fixture_path("blocked.grid")))
    (run,) = asyncio.run(orchestrator.recent_runs(5))
    assert run.status is RunStatus.UNSOLVABLE
    assert run.exit_code == 2
    assert run.methods[0].status == "UNSOLVABLE"


def test_ledger_failures_do_not_stop_a_run(tmp_path):
    blocker = tmp_path / "not_a_dir"
    blocker.write_text("")
    config = load_config()
    orchestrator = ExperimentOrchestrator(config, ArtifactWriter(tmp_path / "out"), Database(blocker / "runs.db"))
    result = asyncio.run(orchestrator.run_plan(fixture_path("corridor.grid")))
    assert result.outcome.plan.total_length == 2


def test_compare_seeds_in_worker_processes(tmp_path, monkeypatch):
    monkeypatch.setenv("PROOFPLAN_COMPARE_SEEDS", "3")
    monkeypatch.setenv("PROOFPLAN_WORKERS", "2")
    orchestrator = _orchestrator(tmp_path, db=False)
    report = asyncio.run(
        orchestrator.run_compare(fixture_path("one_key_5x5.grid"), fixture_path("config/quick.json"))
    )
    assert [s.seed for s in report.seeds] == [3, 4, 5]
    q_row = report.method(Q_LEARNING)
    assert q_row.invalid_actions == sum(s.invalid_actions for s in report.seeds)
    assert report.config["seeds"] == [3, 4, 5]
    validate_report(json.loads((tmp_path / "out" / "report.json").read_text()))


def test_database_round_trip(tmp_path):

    db = Database(tmp_path / "nested" / "runs.db")
    run = ExperimentRun(
        id="run-1",
        command="plan",
        target="corridor.grid",
        started_at=datetime(2026, 1, 2, 3, 4, 5),
        finished_at=None,
        status=RunStatus.RUNNING,
    )
    log = MethodLog(
        id="log-1",
        run_id="run-1",
        method=CONSTRUCTIVE,
        started_at=datetime(2026, 1, 2, 3, 4, 6),
        finished_at=None,
        status="COMPLETED",
        plan_length=2,
    )

    async def scenario():
        await db.init()
        await db.save_run(run)
        await db.save_method_log(log)
        await db.finish_run("run-1", RunStatus.COMPLETED, 0, "ab" * 32)
        return await db.get_run("run-1"), await db.get_run("missing"), await db.get_method_logs("run-1")

    stored, missing, logs = asyncio.run(scenario())
    assert missing is None
    assert stored.status is RunStatus.COMPLETED
    assert stored.grid_digest == "ab" * 32
    assert stored.finished_at is not None
    assert stored.short_id() == "run-1"
    assert logs == [log]
