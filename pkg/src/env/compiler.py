"""Compile a GridWorld into ground Horn rules."""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from ..logic.models import MOVES, Action, KnowledgeBase, PropKind, Proposition, Rule
from .grid import Cell, GridWorld, grid_digest

logger = logging.getLogger(__name__)

SLOT = {Action.NORTH: 0, Action.EAST: 1, Action.SOUTH: 2, Action.WEST: 3, Action.PICKUP: 4}
SLOTS_PER_CELL = 5


def rule_slot_id(width: int, cell: Cell, action: Action) -> int:
    x, y = cell
    return (y * width + x) * SLOTS_PER_CELL + SLOT[action]


def sidecar_base_id(world: GridWorld) -> int:
    return SLOTS_PER_CELL * world.width * world.height


def move_rule(world: GridWorld, source: Cell, target: Cell, action: Action) -> Rule:
    antecedents = {Proposition.at(*source)}
    if target in world.doors:
        antecedents.add(Proposition.has_key(world.doors[target]))
    return Rule(
        id=rule_slot_id(world.width, source, action),
        antecedents=frozenset(antecedents),
        consequent=Proposition.at(*target),
        action=action,
    )


def pickup_rule(world: GridWorld, cell: Cell) -> Rule:
    return Rule(
        id=rule_slot_id(world.width, cell, Action.PICKUP),
        antecedents=frozenset({Proposition.at(*cell)}),
        consequent=Proposition.has_key(world.keys[cell]),
        action=Action.PICKUP,
    )


@dataclass(frozen=True)
class Transition:
    rule: Rule
    source: Cell
    target: Cell
    conditions: frozenset[Proposition]


class TransitionIndex:
    """Lookup of movement and pickup rules by cell."""

    def __init__(self, rules: Iterable[Rule]):
        self.moves: dict[tuple[Cell, Action], list[Transition]] = defaultdict(list)
        self.pickups: dict[Cell, list[Rule]] = defaultdict(list)
        for rule in sorted(rules, key=lambda r: r.id):
            positions = [p for p in rule.antecedents if p.kind is PropKind.AT]
            if len(positions) != 1:
                continue
            source = positions[0].cell
            if rule.action in MOVES and rule.consequent.kind is PropKind.AT:
                self.moves[(source, rule.action)].append(
                    Transition(
                        rule=rule,
                        source=source,
                        target=rule.consequent.cell,
                        conditions=rule.antecedents - {positions[0]},
                    )
                )
            elif rule.consequent.kind is PropKind.HAS_KEY and rule.arity == 1:
                self.pickups[source].append(rule)

    def transitions(self, source: Cell, action: Action) -> list[Transition]:
        return self.moves.get((source, action), [])


@dataclass(frozen=True)
class CompiledEnv:
    rules: tuple[Rule, ...]
    initial: KnowledgeBase
    goal_prop: Proposition | None
    action_map: dict[int, Action]
    digest: str
    index: TransitionIndex = field(compare=False, repr=False)

    @property
    def movement_rules(self) -> list[Rule]:
        return [r for r in self.rules if r.action in MOVES]

    @property
    def pickup_rules(self) -> list[Rule]:
        return [r for r in self.rules if r.action is Action.PICKUP]

    def rule(self, rule_id: int) -> Rule:
        for rule in self.rules:
            if rule.id == rule_id:
                return rule
        raise KeyError(rule_id)


def assemble_env(rules: Iterable[Rule], initial: KnowledgeBase, goal: Proposition | None, digest: str) -> CompiledEnv:
    ordered = tuple(sorted(rules, key=lambda r: r.id))
    return CompiledEnv(
        rules=ordered,
        initial=initial,
        goal_prop=goal,
        action_map={r.id: r.action for r in ordered if r.action is not None},
        digest=digest,
        index=TransitionIndex(ordered),
    )


def compile_rules(world: GridWorld) -> CompiledEnv:
    rules = [move_rule(world, source, target, action) for source, target, action in world.adjacent_pairs()]
    rules.extend(pickup_rule(world, cell) for cell in sorted(world.keys, key=lambda c: (c[1], c[0])))
    goal = Proposition.at(*world.goal) if world.goal is not None else None
    env = assemble_env(rules, KnowledgeBase([Proposition.at(*world.start)]).freeze(), goal, grid_digest(world))
    logger.debug(
        "Compiled %dx%d grid: %d movement rules, %d pickup rules",
        world.width,
        world.height,
        len(env.movement_rules),
        len(env.pickup_rules),
    )
    return env


def load_rule_records(world: GridWorld, records: list[dict]) -> list[Rule]:
    """Parse sidecar rule records; ids continue after the compiler's slots."""
    base = sidecar_base_id(world)
    return [Rule.from_json(record, default_id=base + i) for i, record in enumerate(records)]


def extend_rules(
    env: CompiledEnv,
    extra: Iterable[Rule],
    goal: Proposition | None = None,
    initial: Iterable[Proposition] | None = None,
) -> CompiledEnv:
    merged = {r.id: r for r in env.rules}
    for rule in extra:
        merged[rule.id] = rule
    return assemble_env(
        merged.values(),
        KnowledgeBase(initial).freeze() if initial is not None else env.initial,
        goal if goal is not None else env.goal_prop,
        env.digest,
    )

