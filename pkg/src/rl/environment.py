"""Gridworld step function shared by the baseline and plan replay."""

from dataclasses import dataclass

from ..env.grid import GridWorld
from ..logic.models import MOVES, Action
from ..planner.models import AugmentedState

GOAL_REWARD = 1.0


@dataclass(frozen=True)
class StepOutcome:
    next: AugmentedState
    reward: float
    invalid: bool
    terminal: bool


def initial_state(world: GridWorld, start: tuple[int, int] | None = None) -> AugmentedState:
    cell = start if start is not None else world.start
    key = world.keys.get(cell)
    return AugmentedState(cell, frozenset({key}) if key else frozenset())


def blocked_reason(world: GridWorld, state: AugmentedState, action: Action) -> str | None:
    """Why `action` is rejected from `state`, or None when it is allowed."""
    if action not in MOVES:
        return f"{action.value} is not a movement"
    target = world.neighbor(state.cell, action)
    if not world.in_bounds(target):
        return "out of bounds"
    if target in world.walls:
        return "wall"
    door = world.doors.get(target)
    if door is not None and door not in state.inventory:
        return f"door {door.upper()} locked"
    return None


def simulate_step(world: GridWorld, state: AugmentedState, action: Action) -> StepOutcome:
    if blocked_reason(world, state, action) is not None:
        return StepOutcome(next=state, reward=0.0, invalid=True, terminal=state.cell == world.goal)

    target = world.neighbor(state.cell, action)
    after = AugmentedState(target, state.inventory)
    key = world.keys.get(target)
    if key is not None:
        after = after.with_key(key)
    at_goal = target == world.goal
    return StepOutcome(next=after, reward=GOAL_REWARD if at_goal else 0.0, invalid=False, terminal=at_goal)
