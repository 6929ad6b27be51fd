"""Tabular Q-learning baseline with epsilon-greedy exploration."""

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..env.grid import Cell, GridWorld
from ..logic.models import MOVES, Action
from ..planner.models import AugmentedState
from .environment import StepOutcome, initial_state, simulate_step

logger = logging.getLogger(__name__)

NUM_ACTIONS = len(MOVES)


class HyperparamError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.1
    gamma_discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int | None = None  # None: 80% of episodes
    episodes: int = 5000
    max_steps_per_episode: int = 200
    seed: int = 0

    def validate(self) -> "Hyperparams":
        if not 0 < self.alpha <= 1:
            raise HyperparamError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma_discount < 1:
            raise HyperparamError(f"gamma_discount must be in [0, 1), got {self.gamma_discount}")
        for name in ("epsilon_start", "epsilon_end"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise HyperparamError(f"{name} must be in [0, 1], got {value}")
        if self.epsilon_decay_episodes is not None and self.epsilon_decay_episodes < 0:
            raise HyperparamError("epsilon_decay_episodes must be >= 0")
        if self.episodes < 0:
            raise HyperparamError("episodes must be >= 0")
        if self.max_steps_per_episode < 1:
            raise HyperparamError("max_steps_per_episode must be >= 1")
        return self

    @property
    def decay_episodes(self) -> int:
        if self.epsilon_decay_episodes is None:
            return int(self.episodes * 0.8)
        return self.epsilon_decay_episodes

    def epsilon_at(self, episode: int) -> float:
        span = self.decay_episodes
        if span <= 0:
            return self.epsilon_end
        fraction = min(1.0, episode / span)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * fraction

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


class QTable:
    """Action values per augmented state; unseen states read as zeros."""

    def __init__(self):
        self._rows: dict[AugmentedState, np.ndarray] = {}

    def row(self, state: AugmentedState) -> np.ndarray:
        found = self._rows.get(state)
        if found is None:
            found = np.zeros(NUM_ACTIONS)
            self._rows[state] = found
        return found

    def values(self, state: AugmentedState) -> np.ndarray:
        found = self._rows.get(state)
        return found if found is not None else np.zeros(NUM_ACTIONS)

    def best_index(self, state: AugmentedState) -> int:
        # np.argmax returns the first maximum: N, E, S, W tie-break.
        return int(np.argmax(self.values(state)))

    def best_action(self, state: AugmentedState) -> Action:
        return MOVES[self.best_index(state)]

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, state: object) -> bool:
        return state in self._rows

    def states(self) -> list[AugmentedState]:
        return sorted(self._rows, key=lambda s: (s.cell[1], s.cell[0], sorted(s.inventory)))

    def to_json(self) -> dict:
        return {
            "actions": [a.value for a in MOVES],
            "states": [
                {**state.to_json(), "values": [float(v) for v in self._rows[state]]}
                for state in self.states()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "QTable":
        table = cls()
        for record in data.get("states", []):
            table._rows[AugmentedState.from_json(record)] = np.array(record["values"], dtype=float)
        return table


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    steps: int
    invalid_count: int
    success: bool


@dataclass
class TrainingResult:
    q: QTable
    episodes: list[EpisodeMetrics]
    visits: Counter = field(default_factory=Counter)
    invalid_attempts: Counter = field(default_factory=Counter)

    @property
    def total_invalid(self) -> int:
        return sum(m.invalid_count for m in self.episodes)

    @property
    def total_steps(self) -> int:
        return sum(m.steps for m in self.episodes)


def train_q(world: GridWorld, hp: Hyperparams) -> TrainingResult:
    """One-step TD control; exploration draws come from one seeded generator."""
    hp.validate()
    rng = np.random.default_rng(hp.seed)
    q = QTable()
    metrics: list[EpisodeMetrics] = []
    visits: Counter = Counter()
    invalid_attempts: Counter = Counter()
    outcomes: dict[tuple[AugmentedState, int], StepOutcome] = {}
    start = initial_state(world)

    for episode in range(hp.episodes):
        epsilon = hp.epsilon_at(episode)
        explore = rng.random(hp.max_steps_per_episode) < epsilon
        random_actions = rng.integers(0, NUM_ACTIONS, hp.max_steps_per_episode)

        state = start
        visits[state.cell] += 1
        invalid = 0
        success = False
        steps = 0
        for t in range(hp.max_steps_per_episode):
            index = int(random_actions[t]) if explore[t] else q.best_index(state)
            outcome = outcomes.get((state, index))
            if outcome is None:
                outcome = simulate_step(world, state, MOVES[index])
                outcomes[(state, index)] = outcome
            steps += 1
            if outcome.invalid:
                invalid += 1
                invalid_attempts[state.cell] += 1

            target = outcome.reward
            if not outcome.terminal:
                target += hp.gamma_discount * float(q.values(outcome.next).max())
            row = q.row(state)
            row[index] += hp.alpha * (target - row[index])

            state = outcome.next
            visits[state.cell] += 1
            if outcome.terminal:
                success = True
                break

        metrics.append(EpisodeMetrics(episode=episode, steps=steps, invalid_count=invalid, success=success))

    result = TrainingResult(q=q, episodes=metrics, visits=visits, invalid_attempts=invalid_attempts)
    logger.info(
        "Q-learning seed %d: %d episodes, %d steps, %d invalid actions, %d states",
        hp.seed,
        hp.episodes,
        result.total_steps,
        result.total_invalid,
        len(q),
    )
    return result


def episodes_required(metrics: list[EpisodeMetrics]) -> int:
    """1 + index of the first episode after which every episode succeeds."""
    if not metrics:
        return 0
    last_failure = max((m.episode for m in metrics if not m.success), default=-1)
    return min(last_failure + 2, len(metrics))


@dataclass(frozen=True)
class Rollout:
    trajectory: tuple[AugmentedState, ...]
    actions: tuple[Action, ...]
    success: bool
    invalid_count: int

    @property
    def length(self) -> int:
        return len(self.actions)

    def cells(self) -> list[Cell]:
        return [s.cell for s in self.trajectory]

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "length": self.length,
            "invalid_count": self.invalid_count,
            "actions": [a.value for a in self.actions],
            "trajectory": [s.to_json() for s in self.trajectory],
        }


def greedy_rollout(q: QTable, world: GridWorld, max_steps: int) -> Rollout:
    """Follow argmax actions from the start; a revisited state means a loop."""
    state = initial_state(world)
    trajectory = [state]
    actions: list[Action] = []
    seen = {state}
    invalid = 0
    success = state.cell == world.goal
    while not success and len(actions) < max_steps:
        action = q.best_action(state)
        outcome = simulate_step(world, state, action)
        actions.append(action)
        trajectory.append(outcome.next)
        invalid += int(outcome.invalid)
        if outcome.terminal:
            success = True
            break
        if outcome.next in seen:
            logger.debug("Greedy rollout loops at %s after %d steps", outcome.next, len(actions))
            break
        seen.add(outcome.next)
        state = outcome.next
    return Rollout(trajectory=tuple(trajectory), actions=tuple(actions), success=success, invalid_count=invalid)

