"""Conformant planning over a set of possible worlds sharing one rule set."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..env.compiler import CompiledEnv, Transition, assemble_env, compile_rules
from ..env.grid import GridWorld, read_grid
from ..logic.engine import close
from ..logic.models import MOVES, Action, KnowledgeBase, PropKind, Proposition, PropositionError, Rule
from ..planner.models import AugmentedState, Plan, PlanStep, ValidationResult
from ..planner.search import apply_pickups, bfs, satisfies, start_state, validate_plan
from .errors import NoConformantPlan, ScenarioError

logger = logging.getLogger(__name__)

BASE_GRID = "base.grid"
WORLDS_FILE = "worlds.json"


@dataclass(frozen=True)
class WorldSet:
    worlds: tuple[KnowledgeBase, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.worlds:
            raise ScenarioError("world set is empty")
        names = self.names or tuple(f"w{i}" for i in range(len(self.worlds)))
        if len(names) != len(self.worlds):
            raise ScenarioError("one name per world required")
        object.__setattr__(self, "names", tuple(names))
        for i in range(len(self.worlds)):
            for j in range(i + 1, len(self.worlds)):
                if self.worlds[i] == self.worlds[j]:
                    raise ScenarioError(f"worlds {names[i]} and {names[j]} are identical")

    def __len__(self) -> int:
        return len(self.worlds)

    def items(self) -> list[tuple[str, KnowledgeBase]]:
        return list(zip(self.names, self.worlds))


@dataclass(frozen=True)
class WorldScenario:
    world: GridWorld
    env: CompiledEnv
    worlds: WorldSet


def _extras(gamma: KnowledgeBase) -> frozenset[Proposition]:
    return frozenset(p for p in gamma if p.kind not in (PropKind.AT, PropKind.HAS_KEY))


def _licensed(env: CompiledEnv, state: AugmentedState, extras: frozenset, action: Action) -> Transition | None:
    facts = state.facts | extras
    for transition in env.index.transitions(state.cell, action):
        if transition.conditions <= facts:
            return transition
    return None


def plan_under_uncertainty(
    worlds: WorldSet,
    rules: Iterable[Rule],
    goal: Proposition,
    digest: str = "",
) -> Plan:
    """One action sequence whose every step is licensed in every world.

    Search runs over tuples of per-world (state, goal-reached) pairs. The
    returned steps are annotated with the rules of the first world.
    """
    rules = tuple(sorted(set(rules), key=lambda r: r.id))
    envs = [assemble_env(rules, gamma, goal, digest) for gamma in worlds.worlds]
    extras = [_extras(gamma) for gamma in worlds.worlds]

    for name, gamma in worlds.items():
        closure, _, _ = close(gamma, rules)
        if goal not in closure:
            raise NoConformantPlan(f"{goal} is not provable", world=name)

    start = tuple(
        (state, satisfies(state, goal) or goal in extra)
        for state, extra in ((start_state(env), extra) for env, extra in zip(envs, extras))
    )

    def successors(node):
        for action in MOVES:
            advanced = []
            for env, extra, (state, reached) in zip(envs, extras, node):
                transition = _licensed(env, state, extra, action)
                if transition is None:
                    break
                landed, _ = apply_pickups(env, AugmentedState(transition.target, state.inventory))
                advanced.append((landed, reached or satisfies(landed, goal)))
            else:
                yield action, tuple(advanced)

    path = bfs(start, successors, lambda node: all(reached for _, reached in node))
    if path is None:
        raise NoConformantPlan(f"no single plan reaches {goal} in all {len(worlds)} worlds")

    env, extra = envs[0], extras[0]
    state = start[0][0]
    steps = []
    for action, _ in path:
        transition = _licensed(env, state, extra, action)
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
    plan = Plan(start=start[0][0], steps=tuple(steps))
    logger.info("Conformant plan: %d moves valid in %d worlds", plan.total_length, len(worlds))
    return plan


def validate_in_worlds(plan: Plan, world: GridWorld, worlds: WorldSet, rules: Iterable[Rule]) -> dict[str, ValidationResult]:
    """Replay the same action sequence from each world's own start state."""
    rules = tuple(rules)
    results = {}
    for name, gamma in worlds.items():
        env = assemble_env(rules, gamma, None, "")
        results[name] = validate_plan(plan, world, start=start_state(env))
    return results


def refine_worlds(worlds: WorldSet, observation: Proposition, holds: bool = True) -> WorldSet:
    """Drop the worlds an observation contradicts."""
    kept = [(name, gamma) for name, gamma in worlds.items() if (observation in gamma) == holds]
    if not kept:
        raise ScenarioError(f"observation {observation} (holds={holds}) rules out every world")
    dropped = len(worlds) - len(kept)
    if dropped:
        logger.info("Observation %s removed %d of %d worlds", observation, dropped, len(worlds))
    return WorldSet(worlds=tuple(g for _, g in kept), names=tuple(n for n, _ in kept))


def load_world_set(directory: str | Path) -> WorldScenario:
    """Read `base.grid` and `worlds.json` from a scenario directory."""
    directory = Path(directory)
    world = read_grid(directory / BASE_GRID)
    if world.goal is None:
        raise ScenarioError(f"{directory / BASE_GRID} has no goal")
    env = compile_rules(world)

    try:
        with open(directory / WORLDS_FILE, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"missing {WORLDS_FILE} in {directory}") from e
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{directory / WORLDS_FILE}: {e}") from e

    records = data.get("worlds") if isinstance(data, dict) else None
    if not records:
        raise ScenarioError(f"{directory / WORLDS_FILE} lists no worlds")

    names, gammas = [], []
    for i, record in enumerate(records):
        try:
            facts = {Proposition.parse(text) for text in record.get("facts", [])}
        except PropositionError as e:
            raise ScenarioError(f"world {i}: {e}") from e
        if not any(p.kind is PropKind.AT for p in facts):
            facts.add(Proposition.at(*world.start))
        names.append(str(record.get("name", f"w{i}")))
        gammas.append(KnowledgeBase(facts).freeze())

    return WorldScenario(world=world, env=env, worlds=WorldSet(worlds=tuple(gammas), names=tuple(names)))
