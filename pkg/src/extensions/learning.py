"""Constructive rule learning by probing from provably reachable cells."""

import logging
from dataclasses import dataclass

import numpy as np

from ..env.compiler import move_rule, pickup_rule
from ..env.grid import DELTAS, Cell, GridWorld
from ..logic.engine import close
from ..logic.models import MOVES, Action, KnowledgeBase, PropKind, Proposition, Rule
from ..planner.models import AugmentedState
from ..rl.environment import simulate_step

logger = logging.getLogger(__name__)

Pair = tuple[Cell, Cell]


def direction(source: Cell, target: Cell) -> Action:
    for action in MOVES:
        dx, dy = DELTAS[action]
        if (source[0] + dx, source[1] + dy) == target:
            return action
    raise ValueError(f"{source} and {target} are not adjacent")


@dataclass(frozen=True)
class ProbeRecord:
    index: int
    source: Cell
    target: Cell
    action: Action
    inventory: frozenset[str]
    success: bool
    rule_id: int | None = None

    def to_row(self) -> dict:
        return {
            "probe": self.index,
            "source": f"{self.source[0]},{self.source[1]}",
            "target": f"{self.target[0]},{self.target[1]}",
            "action": self.action.value,
            "inventory": "".join(sorted(self.inventory)),
            "success": self.success,
            "rule_id": "" if self.rule_id is None else self.rule_id,
        }


class HiddenEnv:
    """A world whose dynamics the learner only sees through `attempt`."""

    def __init__(self, true_world: GridWorld, learnable: frozenset[Pair]):
        for source, target in learnable:
            direction(source, target)
        self.true_world = true_world
        self.learnable = learnable
        self.attempts = 0

    @classmethod
    def from_world(cls, world: GridWorld) -> "HiddenEnv":
        pairs = set()
        for cell in world.open_cells():
            for action in MOVES:
                target = world.neighbor(cell, action)
                if world.in_bounds(target):
                    pairs.add((cell, target))
        return cls(world, frozenset(pairs))

    @property
    def start(self) -> Cell:
        return self.true_world.start

    def attempt(self, source: Cell, target: Cell, inventory: frozenset[str]) -> list[Rule]:
        """Try one transition; return the rules its success reveals (none on failure)."""
        self.attempts += 1
        action = direction(source, target)
        outcome = simulate_step(self.true_world, AugmentedState(source, inventory), action)
        if outcome.invalid:
            return []
        revealed = [move_rule(self.true_world, source, target, action)]
        if target in self.true_world.keys:
            revealed.append(pickup_rule(self.true_world, target))
        return revealed


@dataclass(frozen=True)
class LearningResult:
    learned: frozenset[Rule]
    log: tuple[ProbeRecord, ...]
    closure: KnowledgeBase

    @property
    def successes(self) -> int:
        return sum(1 for record in self.log if record.success)


def learn_rules(hidden: HiddenEnv, probe_budget: int, seed: int = 0) -> LearningResult:
    """Probe seeded-uniform candidates on the proven frontier until the budget runs out.

    A failed probe adds nothing. A pair is retried only once the learner
    provably holds a different inventory.
    """
    if probe_budget < 0:
        raise ValueError("probe_budget must be >= 0")
    rng = np.random.default_rng(seed)
    gamma0 = KnowledgeBase([Proposition.at(*hidden.start)]).freeze()
    learned: dict[Rule, Rule] = {}
    succeeded: set[Pair] = set()
    tried: set[tuple[Pair, frozenset[str]]] = set()
    log: list[ProbeRecord] = []
    closure, _, _ = close(gamma0, ())

    while len(log) < probe_budget:
        inventory = frozenset(p.key for p in closure if p.kind is PropKind.HAS_KEY)
        candidates = sorted(
            pair
            for pair in hidden.learnable
            if pair not in succeeded
            and (pair, inventory) not in tried
            and Proposition.at(*pair[0]) in closure
        )
        if not candidates:
            logger.debug("Learning: frontier exhausted after %d probes", len(log))
            break
        source, target = candidates[int(rng.integers(len(candidates)))]
        tried.add(((source, target), inventory))

        revealed = hidden.attempt(source, target, inventory)
        move = revealed[0] if revealed else None
        log.append(
            ProbeRecord(
                index=len(log),
                source=source,
                target=target,
                action=direction(source, target),
                inventory=inventory,
                success=bool(revealed),
                rule_id=move.id if move else None,
            )
        )
        if revealed:
            succeeded.add((source, target))
            for rule in revealed:
                learned.setdefault(rule, rule)
            closure, _, _ = close(gamma0, learned.values())

    result = LearningResult(learned=frozenset(learned.values()), log=tuple(log), closure=closure)
    logger.info(
        "Learning seed %d: %d probes, %d successes, %d rules learned",
        seed,
        len(log),
        result.successes,
        len(result.learned),
    )
    return result
