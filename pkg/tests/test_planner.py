import itertools

import numpy as np
import pytest

from conftest import load_fixture, solvable_suite
from src.env.compiler import compile_rules
from src.env.generator import random_world
from src.env.grid import GridWorld, parse_grid
from src.logic import engine
from src.logic.engine import close
from src.logic.models import MOVES, Action, Proposition
from src.planner import search
from src.planner.chain import SubgoalSyntaxError, parse_subgoals, plan_chain
from src.planner.models import (
    AugmentedState,
    MemoCache,
    Plan,
    PlanStep,
    SubgoalUnreachable,
    Unsolvable,
)
from src.planner.search import bfs, oracle_shortest, plan, validate_plan
from src.rl.environment import initial_state, simulate_step


def _exhaustive_shortest(world: GridWorld) -> int | None:
    """Depth-first enumeration with per-state best-depth pruning."""
    best: dict[AugmentedState, int] = {}
    found: int | None = None
    stack = [(initial_state(world), 0)]
    while stack:
        state, depth = stack.pop()
        if found is not None and depth >= found:
            continue
        if best.get(state, depth + 1) <= depth:
            continue
        best[state] = depth
        if state.cell == world.goal:
            found = depth
            continue
        for action in MOVES:
            outcome = simulate_step(world, state, action)
            if not outcome.invalid:
                stack.append((outcome.next, depth + 1))
    return found


# ── Generic search ──


def test_bfs_returns_empty_path_at_goal():
    assert bfs(3, lambda s: [("+", s + 1)], lambda s: s == 3) == []


def test_bfs_respects_depth_limit():
    step = lambda s: [("+", s + 1)]  # noqa: E731
    assert bfs(0, step, lambda s: s == 5, max_depth=4) is None
    assert [s for _, s in bfs(0, step, lambda s: s == 5, max_depth=5)] == [1, 2, 3, 4, 5]


# ── Single-goal planning ──


def test_corridor_plan_is_two_annotated_moves(corridor):
    outcome = plan(compile_rules(corridor), corridor)
    steps = outcome.plan.steps
    assert [s.action for s in steps] == [Action.EAST, Action.EAST]
    assert [s.rule_id for s in steps] == [1, 6]
    assert steps[0].antecedents == (Proposition.at(0, 0),)
    assert outcome.plan.cells() == [(0, 0), (1, 0), (2, 0)]
    assert validate_plan(outcome.plan, corridor).valid


@pytest.mark.parametrize("name", ["blocked.grid", "wrong_order.grid", "half_door.grid"])
def test_unprovable_goal_raises(name):
    world = load_fixture(name)
    with pytest.raises(Unsolvable):
        plan(compile_rules(world), world)
    assert oracle_shortest(world) is None


def test_key_is_collected_before_the_door():
    world = load_fixture("key_corridor.grid")
    outcome = plan(compile_rules(world), world)
    assert outcome.plan.total_length == 3
    assert outcome.plan.steps[0].pickups == (9,)
    assert outcome.plan.steps[1].antecedents == (Proposition.at(1, 0), Proposition.has_key("a"))


@pytest.mark.parametrize("name, length", [("one_key_5x5.grid", 8), ("two_key_9x9.grid", 32), ("open_3x3.grid", 4)])
def test_fixture_plans_match_the_oracle(name, length):
    world = load_fixture(name)
    outcome = plan(compile_rules(world), world)
    assert outcome.plan.total_length == length
    assert oracle_shortest(world).length == length
    result = validate_plan(outcome.plan, world)
    assert result.valid and result.reached_goal


def test_proof_of_two_key_plan_rests_on_the_start_fact(two_key):
    outcome = plan(compile_rules(two_key), two_key)
    assert outcome.proof.proposition == Proposition.at(8, 8)
    assert outcome.proof.leaves() == {Proposition.at(0, 0)}
    assert outcome.proof.rule_ids() <= {r.id for r in compile_rules(two_key).rules}


def test_plan_computes_the_closure_once(monkeypatch, one_key):
    calls = []

    def counting_close(*args, **kwargs):
        calls.append(1)
        return engine.close(*args, **kwargs)

    monkeypatch.setattr(search, "close", counting_close)
    outcome = plan(compile_rules(one_key), one_key)
    assert len(calls) == 1
    assert outcome.stats.iterations > 0


def test_validate_plan_lists_only_offending_steps():
    world = load_fixture("wrong_order.grid")
    empty = frozenset()
    steps = (
        PlanStep(Action.EAST, AugmentedState((0, 0), empty), AugmentedState((1, 0), empty), rule_id=None),
        PlanStep(Action.EAST, AugmentedState((1, 0), empty), AugmentedState((2, 0), frozenset({"a"})), rule_id=None),
        PlanStep(Action.EAST, AugmentedState((2, 0), frozenset({"a"})), AugmentedState((3, 0), frozenset({"a"})), rule_id=None),
    )
    result = validate_plan(Plan(start=AugmentedState((0, 0)), steps=steps), world)
    assert result.invalid_steps == (0,)
    assert not result.valid
    assert result.reached_goal
    assert result.final == AugmentedState((3, 0), frozenset({"a"}))


def test_random_suite_is_safe_and_optimal():
    for i, world in enumerate(solvable_suite(500)):
        outcome = plan(compile_rules(world), world)
        result = validate_plan(outcome.plan, world)
        assert result.invalid_steps == (), f"grid {i}"
        assert outcome.plan.total_length == oracle_shortest(world).length, f"grid {i}"


def test_closure_agrees_with_oracle_on_random_grids():
    rng = np.random.default_rng(11)
    for i in range(300):
        size = int(rng.integers(2, 8))
        world = random_world(rng, size, size, pairs=int(rng.integers(0, 3)), wall_density=0.3)
        env = compile_rules(world)
        closure, _, _ = close(env.initial, env.rules)
        assert (env.goal_prop in closure) == (oracle_shortest(world) is not None), f"grid {i}"


def test_closure_agrees_with_oracle_on_every_3x3_wall_layout():
    free = [(x, y) for y in range(3) for x in range(3) if (x, y) not in ((0, 0), (2, 2))]
    for walls in itertools.product([False, True], repeat=len(free)):
        rows = [["."] * 3 for _ in range(3)]
        rows[0][0], rows[2][2] = "S", "G"
        for (x, y), wall in zip(free, walls):
            if wall:
                rows[y][x] = "#"
        world = parse_grid("\n".join("".join(r) for r in rows))
        env = compile_rules(world)
        closure, _, _ = close(env.initial, env.rules)
        assert (env.goal_prop in closure) == (oracle_shortest(world) is not None), walls


def test_oracle_matches_exhaustive_search_on_small_grids():
    rng = np.random.default_rng(23)
    for i in range(200):
        width, height = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        pairs = int(rng.integers(0, 2)) if width * height >= 4 else 0
        world = random_world(rng, width, height, pairs=pairs, wall_density=0.25)
        oracle = oracle_shortest(world)
        assert (oracle.length if oracle else None) == _exhaustive_shortest(world), f"grid {i}"


# ── Chaining ──


def test_parse_subgoals():
    assert parse_subgoals("haskey:a,at:8,8") == [Proposition.has_key("a"), Proposition.at(8, 8)]
    assert parse_subgoals(" has_key:b , at:0,1 ") == [Proposition.has_key("b"), Proposition.at(0, 1)]
    with pytest.raises(SubgoalSyntaxError):
        parse_subgoals("door:a")
    with pytest.raises(SubgoalSyntaxError):
        parse_subgoals("")


def test_chain_through_both_keys(two_key):
    env = compile_rules(two_key)
    chained = plan_chain(env, parse_subgoals("haskey:a,haskey:b,at:8,8"))
    assert chained.milestones == (10, 20, 32)
    assert chained.total_length == oracle_shortest(two_key).length
    pickups = [step.target.cell for step in chained.steps if step.pickups]
    assert pickups == [(2, 8), (4, 0)]
    assert validate_plan(chained, two_key).valid


def test_single_subgoal_chain_equals_plan(one_key):
    env = compile_rules(one_key)
    assert plan_chain(env, [env.goal_prop]).steps == plan(env, one_key).plan.steps


def test_unprovable_subgoal_reports_its_index():
    world = load_fixture("wrong_order.grid")
    with pytest.raises(SubgoalUnreachable) as caught:
        plan_chain(compile_rules(world), [Proposition.at(0, 0), Proposition.has_key("a")])
    assert caught.value.index == 1


def test_memo_cache_reuses_fragments_for_a_new_goal(two_key, tmp_path):
    env = compile_rules(two_key)
    cache = MemoCache()
    plan_chain(env, parse_subgoals("haskey:a,haskey:b,at:8,8"), cache)
    assert (cache.hits, cache.misses) == (0, 3)

    path = cache.save(tmp_path / "cache.json")
    reloaded = MemoCache.load(path)
    assert reloaded.entries == cache.entries

    modified = plan_chain(env, parse_subgoals("haskey:a,haskey:b,at:7,8"), reloaded)
    assert reloaded.hits >= 1
    assert modified.milestones[:2] == (10, 20)
    assert validate_plan(modified, two_key).valid


def test_memo_cache_missing_or_corrupt_file_starts_empty(tmp_path):
    assert len(MemoCache.load(tmp_path / "absent.json")) == 0
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert len(MemoCache.load(broken)) == 0
