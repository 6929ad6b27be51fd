"""Plan data models, memo cache and planner errors."""

import json
import logging
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from ..logic.models import Action, MOVES, Proposition

logger = logging.getLogger(__name__)

Cell = tuple[int, int]


class PlannerError(Exception):
    pass


class Unsolvable(PlannerError):
    def __init__(self, goal: Proposition | None, reason: str = "goal is not provable"):
        super().__init__(f"{goal}: {reason}")
        self.goal = goal


class SubgoalUnreachable(PlannerError):
    def __init__(self, index: int, subgoal: Proposition):
        super().__init__(f"subgoal {index} ({subgoal}) is unreachable")
        self.index = index
        self.subgoal = subgoal


class PlannerInconsistencyError(PlannerError):
    """Closure and state-space search disagree about reachability."""


@dataclass(frozen=True)
class AugmentedState:
    cell: Cell
    inventory: frozenset[str] = frozenset()

    @cached_property
    def facts(self) -> frozenset[Proposition]:
        return frozenset({Proposition.at(*self.cell)} | {Proposition.has_key(k) for k in self.inventory})

    def with_key(self, key: str) -> "AugmentedState":
        if key in self.inventory:
            return self
        return AugmentedState(self.cell, self.inventory | {key})

    def to_json(self) -> dict:
        return {"cell": list(self.cell), "inventory": sorted(self.inventory)}

    @classmethod
    def from_json(cls, data: dict) -> "AugmentedState":
        x, y = data["cell"]
        return cls((int(x), int(y)), frozenset(data.get("inventory", [])))

    def __str__(self) -> str:
        keys = "".join(sorted(self.inventory))
        return f"({self.cell[0]},{self.cell[1]})" + (f"[{keys}]" if keys else "")


@dataclass(frozen=True)
class PlanStep:
    action: Action
    source: AugmentedState
    target: AugmentedState
    rule_id: int | None
    antecedents: tuple[Proposition, ...] = ()
    pickups: tuple[int, ...] = ()
    round: int | None = None
    recipient: str | None = None
    message: Proposition | None = None

    @property
    def is_move(self) -> bool:
        return self.action in MOVES

    def to_json(self) -> dict:
        data = {
            "action": self.action.value,
            "from": self.source.to_json(),
            "to": self.target.to_json(),
            "rule_id": self.rule_id,
            "antecedents": [str(p) for p in self.antecedents],
            "pickups": list(self.pickups),
        }
        if self.round is not None:
            data["round"] = self.round
        if self.recipient is not None:
            data["recipient"] = self.recipient
            data["message"] = str(self.message)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "PlanStep":
        message = data.get("message")
        return cls(
            action=Action(data["action"]),
            source=AugmentedState.from_json(data["from"]),
            target=AugmentedState.from_json(data["to"]),
            rule_id=data.get("rule_id"),
            antecedents=tuple(Proposition.parse(p) for p in data.get("antecedents", [])),
            pickups=tuple(data.get("pickups", [])),
            round=data.get("round"),
            recipient=data.get("recipient"),
            message=Proposition.parse(message) if message else None,
        )


@dataclass(frozen=True)
class Plan:
    start: AugmentedState
    steps: tuple[PlanStep, ...] = ()
    milestones: tuple[int, ...] = ()

    @property
    def total_length(self) -> int:
        return sum(1 for step in self.steps if step.is_move)

    @property
    def end(self) -> AugmentedState:
        return self.steps[-1].target if self.steps else self.start

    def cells(self) -> list[Cell]:
        cells = [self.start.cell]
        cells.extend(step.target.cell for step in self.steps if step.is_move)
        return cells

    def actions(self) -> list[Action]:
        return [step.action for step in self.steps]

    def to_json(self) -> dict:
        return {
            "start": self.start.to_json(),
            "steps": [step.to_json() for step in self.steps],
            "milestones": list(self.milestones),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Plan":
        return cls(
            start=AugmentedState.from_json(data["start"]),
            steps=tuple(PlanStep.from_json(s) for s in data.get("steps", [])),
            milestones=tuple(data.get("milestones", [])),
        )


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    invalid_steps: tuple[int, ...]
    final: AugmentedState
    reached_goal: bool

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "invalid_steps": list(self.invalid_steps),
            "final": self.final.to_json(),
            "reached_goal": self.reached_goal,
        }


@dataclass
class MemoCache:
    """Plan fragments keyed by (environment digest, subgoal, cell, inventory).

    Reads are lock-free; writes and persistence take the lock.
    """

    entries: dict[str, Plan] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @staticmethod
    def fingerprint(digest: str, subgoal: Proposition, state: AugmentedState) -> str:
        keys = ",".join(sorted(state.inventory))
        return f"{digest}|{subgoal}|{state.cell[0]},{state.cell[1]}|{keys}"

    def get(self, digest: str, subgoal: Proposition, state: AugmentedState) -> Plan | None:
        found = self.entries.get(self.fingerprint(digest, subgoal, state))
        if found is None:
            self.misses += 1
        else:
            self.hits += 1
        return found

    def put(self, digest: str, subgoal: Proposition, state: AugmentedState, fragment: Plan) -> None:
        with self._lock:
            self.entries[self.fingerprint(digest, subgoal, state)] = fragment

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            payload = {key: plan.to_json() for key, plan in sorted(self.entries.items())}
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"entries": payload}, f, indent=2, sort_keys=True)
        logger.info("Memo cache saved: %d fragments to %s", len(payload), path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MemoCache":
        path = Path(path)
        if not path.exists():
            return cls()
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            logger.warning("Memo cache %s unreadable, starting empty: %s", path, e)
            return cls()
        cache = cls(entries={key: Plan.from_json(plan) for key, plan in data.get("entries", {}).items()})
        logger.info("Memo cache loaded: %d fragments from %s", len(cache), path)
        return cache
