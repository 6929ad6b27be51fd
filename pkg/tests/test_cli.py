import csv
import json

import pytest

from conftest import fixture_path
from src.env.compiler import compile_rules
from src.env.grid import read_grid
from src.main import EXIT_NO_PLAN, EXIT_OK, EXIT_USAGE, main
from src.pipeline.report import CONSTRUCTIVE, Q_LEARNING, validate_report


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def _json(path):
    return json.loads(path.read_text())


def test_plan_corridor(tmp_path):
    assert _run("plan", fixture_path("corridor.grid"), "-o", tmp_path) == EXIT_OK
    doc = _json(tmp_path / "plan.json")
    assert doc["total_length"] == 2
    assert len(doc["steps"]) == 2
    assert (tmp_path / "proof.json").exists()
    assert (tmp_path / "trace.txt").read_text().startswith("S*G\n")


def test_plan_blocked_is_unsolvable(tmp_path, capsys):
    assert _run("plan", fixture_path("blocked.grid"), "-o", tmp_path) == EXIT_NO_PLAN
    assert "UNSOLVABLE" in capsys.readouterr().out


def test_parse_error_reports_position(tmp_path, capsys):
    grid = tmp_path / "bad.grid"
    grid.write_text("S.G\n.?.\n")
    assert _run("plan", grid, "-o", tmp_path / "out") == EXIT_USAGE
    assert "line 2, column 2" in capsys.readouterr().err


def test_missing_grid_file_is_a_usage_error(tmp_path, capsys):
    assert _run("plan", tmp_path / "nope.grid", "-o", tmp_path) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as caught:
        main([])
    assert caught.value.code == 2


def test_two_key_proof_rests_on_start(tmp_path):
    assert _run("plan", fixture_path("two_key_9x9.grid"), "-o", tmp_path) == EXIT_OK
    proof = _json(tmp_path / "proof.json")
    leaves, stack = set(), [proof["tree"]]
    while stack:
        node = stack.pop()
        if not node["children"]:
            leaves.add(node["proposition"])
        stack.extend(node["children"])
    assert leaves == {"at(0,0)"}
    assert _json(tmp_path / "plan.json")["total_length"] == 32


def test_train_zero_episodes(tmp_path):
    code = _run("train", fixture_path("corridor.grid"), "-c", fixture_path("config/zero_episodes.json"), "-o", tmp_path)
    assert code == EXIT_OK
    assert (tmp_path / "episodes.csv").read_text() == "episode,steps,invalid_count,success\n"
    assert _json(tmp_path / "qtable.json")["states"] == []
    assert (tmp_path / "exploration.txt").exists()


def test_train_rejects_unknown_hyperparameters(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"alpha": 0.1, "learning_rate": 0.2}))
    assert _run("train", fixture_path("corridor.grid"), "-c", config, "-o", tmp_path) == EXIT_USAGE
    assert "learning_rate" in capsys.readouterr().err


def test_train_on_key_grid_records_invalid_actions(tmp_path):
    code = _run("train", fixture_path("one_key_5x5.grid"), "-c", fixture_path("config/quick.json"), "-o", tmp_path)
    assert code == EXIT_OK
    with open(tmp_path / "episodes.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 300
    assert sum(int(r["invalid_count"]) for r in rows) > 0


def test_seed_override_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PROOFPLAN_SEED", "42")
    code = _run("compare", fixture_path("corridor.grid"), "-c", fixture_path("config/quick.json"), "-o", tmp_path)
    assert code == EXIT_OK
    assert _json(tmp_path / "report.json")["config"]["seed"] == 42


def test_compare_one_key(tmp_path, capsys):
    code = _run("compare", fixture_path("one_key_5x5.grid"), "-c", fixture_path("config/quick.json"), "-o", tmp_path)
    assert code == EXIT_OK
    report = _json(tmp_path / "report.json")
    validate_report(report)
    constructive = next(m for m in report["methods"] if m["method"] == CONSTRUCTIVE)
    assert constructive["invalid_actions"] == 0
    assert constructive["episodes_required"] == 1
    assert constructive["plan_length"] == constructive["optimal_length"] == 8
    assert report["optimal_length"] == 8
    assert [m["method"] for m in report["methods"]] == [CONSTRUCTIVE, Q_LEARNING]
    with open(tmp_path / "report.csv", newline="") as f:
        assert [r["method"] for r in csv.DictReader(f)] == [CONSTRUCTIVE, Q_LEARNING]
    out = capsys.readouterr().out
    assert CONSTRUCTIVE in out and Q_LEARNING in out


def test_compare_unsolvable_still_writes_the_report(tmp_path, capsys):
    code = _run("compare", fixture_path("blocked.grid"), "-c", fixture_path("config/quick.json"), "-o", tmp_path)
    assert code == EXIT_NO_PLAN
    report = _json(tmp_path / "report.json")
    assert report["solvable"] is False
    assert report["optimal_length"] is None
    assert all(m["success"] is False for m in report["methods"])
    assert "UNSOLVABLE" in capsys.readouterr().out


def test_compare_lists_only_the_files_it_wrote(tmp_path):
    config = fixture_path("config/zero_episodes.json")
    assert _run("compare", fixture_path("corridor.grid"), "-c", config, "-o", tmp_path) == EXIT_OK
    assert "plan.json" in _json(tmp_path / "report.json")["artifacts"]

    assert _run("compare", fixture_path("blocked.grid"), "-c", config, "-o", tmp_path) == EXIT_NO_PLAN
    artifacts = _json(tmp_path / "report.json")["artifacts"]
    assert not {"plan.json", "proof.json", "trace.txt"} & set(artifacts)
    assert {"qtable.json", "episodes.csv", "report_csv"} <= set(artifacts)


def test_compare_is_byte_reproducible_without_timing(tmp_path, monkeypatch):
    monkeypatch.setenv("PROOFPLAN_RECORD_TIMING", "false")
    args = ("compare", fixture_path("one_key_5x5.grid"), "-c", fixture_path("config/quick.json"), "-o", tmp_path)
    assert _run(*args) == EXIT_OK
    first = {name: (tmp_path / name).read_bytes() for name in ("report.json", "report.csv", "plan.json", "qtable.json")}
    assert _run(*args) == EXIT_OK
    second = {name: (tmp_path / name).read_bytes() for name in first}
    assert first == second
    assert all(m["wall_time_ms"] == 0 for m in _json(tmp_path / "report.json")["methods"])


def test_chain_with_the_goal_matches_plan(tmp_path):
    grid = fixture_path("one_key_5x5.grid")
    assert _run("plan", grid, "-o", tmp_path / "plan") == EXIT_OK
    assert _run("chain", grid, "--subgoals", "at:4,4", "-o", tmp_path / "chain") == EXIT_OK
    assert (tmp_path / "plan" / "plan.json").read_bytes() == (tmp_path / "chain" / "plan.json").read_bytes()


def test_chain_with_cache_file(tmp_path):
    grid = fixture_path("two_key_9x9.grid")
    cache = tmp_path / "cache.json"
    assert _run("chain", grid, "--subgoals", "haskey:a,haskey:b,at:8,8", "--cache", cache, "-o", tmp_path) == EXIT_OK
    assert _json(tmp_path / "chain.json")["milestones"] == [10, 20, 32]
    assert _run("chain", grid, "--subgoals", "haskey:a,haskey:b,at:7,8", "--cache", cache, "-o", tmp_path) == EXIT_OK
    assert _json(tmp_path / "chain.json")["cache"]["hits"] >= 1


def test_chain_bad_subgoals(tmp_path, capsys):
    assert _run("chain", fixture_path("corridor.grid"), "--subgoals", "door:a", "-o", tmp_path) == EXIT_USAGE
    assert _run("chain", fixture_path("wrong_order.grid"), "--subgoals", "haskey:a", "-o", tmp_path) == EXIT_NO_PLAN


def test_worlds_with_one_world_matches_plan(tmp_path):
    scenario = tmp_path / "single"
    scenario.mkdir()
    scenario.joinpath("base.grid").write_text(fixture_path("one_key_5x5.grid").read_text())
    scenario.joinpath("worlds.json").write_text(json.dumps({"worlds": [{"name": "only", "facts": ["at(0,0)"]}]}))
    assert _run("plan", fixture_path("one_key_5x5.grid"), "-o", tmp_path / "plan") == EXIT_OK
    assert _run("worlds", scenario, "-o", tmp_path / "worlds") == EXIT_OK
    assert (tmp_path / "plan" / "plan.json").read_bytes() == (tmp_path / "worlds" / "plan.json").read_bytes()
    assert _json(tmp_path / "worlds" / "worlds.json")["conformant"] is True


def test_worlds_key_uncertainty(tmp_path):
    assert _run("worlds", fixture_path("worlds/key_uncertainty"), "-o", tmp_path) == EXIT_OK
    verdicts = _json(tmp_path / "worlds.json")["worlds"]
    assert set(verdicts) == {"key_known", "key_missing"}
    assert all(v["valid"] for v in verdicts.values())


def test_learn_open_grid_exhaustively(tmp_path):
    grid = fixture_path("open_3x3.grid")
    assert _run("learn", grid, "--budget", 1000, "--seed", 5, "-o", tmp_path) == EXIT_OK
    learned = _json(tmp_path / "learned_rules.json")
    expected = [r.to_json() for r in compile_rules(read_grid(grid)).rules]
    assert learned == expected
    summary = _json(tmp_path / "learning.json")
    assert summary["sound"] is True and summary["complete"] is True
    with open(tmp_path / "probes.csv", newline="") as f:
        assert len(list(csv.DictReader(f))) == summary["probes"]


def test_multi_courier(tmp_path):
    assert _run("multi", fixture_path("courier.grid"), "-o", tmp_path) == EXIT_OK
    assert _json(tmp_path / "plans.json")["rounds"] == 3
    validation = _json(tmp_path / "validation.json")
    assert validation["goal_holds"] is True
    assert all(v["valid"] for v in validation["agents"].values())
    assert "has_key(a)" in (tmp_path / "schedule.csv").read_text()


def test_multi_needs_two_agents(tmp_path):
    assert _run("multi", fixture_path("corridor.grid"), "-o", tmp_path) == EXIT_USAGE


def test_runs_lists_history(tmp_path, capsys):
    _run("plan", fixture_path("corridor.grid"), "-o", tmp_path)
    _run("plan", fixture_path("blocked.grid"), "-o", tmp_path)
    capsys.readouterr()
    assert _run("runs", "--limit", 5) == EXIT_OK
    out = capsys.readouterr().out
    assert "COMPLETED" in out and "UNSOLVABLE" in out
    assert "constructive=COMPLETED" in out
