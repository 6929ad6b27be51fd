"""Errors raised by the multi-agent, learning and possible-worlds planners."""


class ScenarioError(ValueError):
    """A scenario, world set or sidecar file is malformed."""


class NoJointPlan(Exception):
    def __init__(self, rounds: int, reason: str = "no interleaving reaches the goal"):
        super().__init__(f"{reason} within {rounds} rounds")
        self.rounds = rounds


class NoConformantPlan(Exception):
    def __init__(self, reason: str, world: str | None = None):
        super().__init__(f"{reason}" + (f" (world {world})" if world is not None else ""))
        self.world = world
