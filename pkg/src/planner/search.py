"""Optimal plan extraction over the augmented (cell, inventory) state space."""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, TypeVar

from ..env.compiler import CompiledEnv, Transition
from ..env.grid import GridWorld
from ..logic.engine import close, extract_proof
from ..logic.models import MOVES, Action, ClosureStats, DerivationGraph, KnowledgeBase, PropKind, Proposition, ProofTree
from ..rl.environment import initial_state, simulate_step
from .models import AugmentedState, Plan, PlannerInconsistencyError, PlanStep, Unsolvable, ValidationResult

logger = logging.getLogger(__name__)

S = TypeVar("S", bound=Hashable)
E = TypeVar("E")


# ── Generic search ──


def bfs(
    start: S,
    successors: Callable[[S], Iterable[tuple[E, S]]],
    is_goal: Callable[[S], bool],
    max_depth: int | None = None,
) -> list[tuple[E, S]] | None:
    """Breadth-first search with the goal test at generation.

    Returns the (edge, state) steps from `start`, `[]` when `start` is a goal,
    or None when no goal is reachable within `max_depth`.
    """
    if is_goal(start):
        return []
    parents: dict[S, tuple[S, E] | None] = {start: None}
    depth = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if max_depth is not None and depth[state] >= max_depth:
            continue
        for edge, nxt in successors(state):
            if nxt in parents:
                continue
            parents[nxt] = (state, edge)
            depth[nxt] = depth[state] + 1
            if is_goal(nxt):
                return _unwind(parents, nxt)
            queue.append(nxt)
    return None


def _unwind(parents: dict, state) -> list:
    path = []
    while parents[state] is not None:
        prev, edge = parents[state]
        path.append((edge, state))
        state = prev
    path.reverse()
    return path


# ── Rule-licensed moves ──


def licensed_move(env: CompiledEnv, state: AugmentedState, action: Action) -> Transition | None:
    for transition in env.index.transitions(state.cell, action):
        if transition.conditions <= state.facts:
            return transition
    return None


def apply_pickups(env: CompiledEnv, state: AugmentedState) -> tuple[AugmentedState, tuple[int, ...]]:
    fired = []
    for rule in env.index.pickups.get(state.cell, ()):
        key = rule.consequent.key
        if key not in state.inventory:
            state = state.with_key(key)
            fired.append(rule.id)
    return state, tuple(fired)


def start_state(env: CompiledEnv, cell: tuple[int, int] | None = None) -> AugmentedState:
    """Initial augmented state: the Γ₀ position plus keys held in Γ₀ or picked up on the spot."""
    if cell is None:
        positions = [p.cell for p in env.initial if p.kind is PropKind.AT]
        if len(positions) != 1:
            raise PlannerInconsistencyError(f"initial facts hold {len(positions)} positions, expected 1")
        cell = positions[0]
    held = frozenset(p.key for p in env.initial if p.kind is PropKind.HAS_KEY)
    state, _ = apply_pickups(env, AugmentedState(cell, held))
    return state


def successors(env: CompiledEnv, state: AugmentedState) -> Iterable[tuple[Action, AugmentedState]]:
    for action in MOVES:
        transition = licensed_move(env, state, action)
        if transition is None:
            continue
        landed, _ = apply_pickups(env, AugmentedState(transition.target, state.inventory))
        yield action, landed


def satisfies(state: AugmentedState, goal: Proposition) -> bool:
    return goal in state.facts


def annotate(env: CompiledEnv, start: AugmentedState, actions: Iterable[Action]) -> tuple[PlanStep, ...]:
    """Attach the licensing rule and antecedents to every move."""
    steps = []
    state = start
    for action in actions:
        transition = licensed_move(env, state, action)
        if transition is None:
            raise PlannerInconsistencyError(f"no rule licenses {action.value} from {state}")
        landed, pickups = apply_pickups(env, AugmentedState(transition.target, state.inventory))
        steps.append(
            PlanStep(
                action=action,
                source=state,
                target=landed,
                rule_id=transition.rule.id,
                antecedents=transition.rule.ordered_antecedents(),
                pickups=pickups,
            )
        )
        state = landed
    return tuple(steps)


def search_fragment(env: CompiledEnv, start: AugmentedState, goal: Proposition) -> Plan | None:
    path = bfs(start, lambda s: successors(env, s), lambda s: satisfies(s, goal))
    if path is None:
        return None
    return Plan(start=start, steps=annotate(env, start, [action for action, _ in path]))


# ── Planning ──


@dataclass(frozen=True)
class PlanOutcome:
    plan: Plan
    proof: ProofTree
    closure: KnowledgeBase
    graph: DerivationGraph
    stats: ClosureStats


def plan(env: CompiledEnv, world: GridWorld) -> PlanOutcome:
    """Prove the goal once, then extract the shortest rule-licensed trajectory."""
    goal = env.goal_prop
    if goal is None:
        raise Unsolvable(None, "environment has no goal")

    closure, graph, stats = close(env.initial, env.rules)
    start = start_state(env, world.start)
    fragment = search_fragment(env, start, goal)

    if goal not in closure:
        if fragment is not None:
            raise PlannerInconsistencyError(f"{goal} reachable by search but not provable")
        logger.info("Plan: %s not provable (%d facts in closure)", goal, len(closure))
        raise Unsolvable(goal)
    if fragment is None:
        raise PlannerInconsistencyError(f"{goal} provable but no trajectory found")

    proof = extract_proof(graph, goal)
    logger.info(
        "Plan: %d moves to %s, proof depth %d, %d rule applications",
        fragment.total_length,
        goal,
        proof.depth,
        stats.rule_applications,
    )
    return PlanOutcome(plan=fragment, proof=proof, closure=closure, graph=graph, stats=stats)


# ── Oracle and replay ──


@dataclass(frozen=True)
class OracleResult:
    length: int
    path: tuple[AugmentedState, ...]


def _simulated_successors(world: GridWorld, state: AugmentedState) -> Iterable[tuple[Action, AugmentedState]]:
    for action in MOVES:
        outcome = simulate_step(world, state, action)
        if not outcome.invalid:
            yield action, outcome.next


def oracle_shortest(world: GridWorld) -> OracleResult | None:
    """Shortest move count found by BFS over the step function alone."""
    if world.goal is None:
        return None
    start = initial_state(world)
    path = bfs(start, lambda s: _simulated_successors(world, s), lambda s: s.cell == world.goal)
    if path is None:
        return None
    return OracleResult(length=len(path), path=(start, *(state for _, state in path)))


def validate_plan(plan: Plan, world: GridWorld, start: AugmentedState | None = None) -> ValidationResult:
    """Replay `plan` through the step function and list the steps it rejects.

    After a rejected step the replay re-syncs to the step's declared cell so
    later steps are judged on their own.
    """
    state = start if start is not None else plan.start
    reached = state.cell == world.goal
    invalid: list[int] = []
    for i, step in enumerate(plan.steps):
        if not step.is_move:
            continue
        outcome = simulate_step(world, state, step.action)
        if outcome.invalid or outcome.next.cell != step.target.cell:
            invalid.append(i)
            state = AugmentedState(step.target.cell, state.inventory)
            key = world.keys.get(state.cell)
            if key is not None:
                state = state.with_key(key)
        else:
            state = outcome.next
        reached = reached or state.cell == world.goal
    if invalid:
        logger.debug("Replay rejected steps %s", invalid)
    return ValidationResult(
        valid=not invalid,
        invalid_steps=tuple(invalid),
        final=state,
        reached_goal=reached,
    )
