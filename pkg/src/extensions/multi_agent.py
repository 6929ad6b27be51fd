"""Round-synchronous multi-agent planning with point-to-point messages."""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..env.compiler import CompiledEnv, assemble_env, compile_rules, extend_rules, load_rule_records
from ..env.grid import Cell, GridWorld, read_grid
from ..logic.models import MOVES, Action, KnowledgeBase, PropKind, Proposition, PropositionError, Rule, RuleError
from ..planner.models import AugmentedState, Plan, PlanStep, ValidationResult
from ..planner.search import apply_pickups, bfs
from .errors import NoJointPlan, ScenarioError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 32
WAIT = "wait"


@dataclass(frozen=True)
class Delivery:
    sender: str
    recipient: str
    fact: Proposition
    sent_round: int

    @property
    def delivered_round(self) -> int:
        return self.sent_round + 1

    def to_json(self) -> dict:
        return {
            "sender": self.sender,
            "recipient": self.recipient,
            "fact": str(self.fact),
            "sent_round": self.sent_round,
            "delivered_round": self.delivered_round,
        }


@dataclass
class AgentKB:
    """One agent's knowledge base and message queues."""

    agent: str
    gamma: KnowledgeBase = field(default_factory=KnowledgeBase)
    inbox: list[tuple[str, Proposition]] = field(default_factory=list)
    outbox: list[tuple[str, Proposition]] = field(default_factory=list)

    def receive(self, sender: str, fact: Proposition) -> Proposition:
        received = Proposition.received(self.agent, fact)
        self.inbox.append((sender, fact))
        self.gamma.add(received)
        return received

    def send(self, recipient: str, fact: Proposition) -> None:
        self.outbox.append((recipient, fact))


@dataclass(frozen=True)
class MultiAgentPlan:
    plans: dict[str, Plan]
    deliveries: tuple[Delivery, ...]
    rounds: int
    knowledge: dict[str, AgentKB] = field(default_factory=dict, compare=False)

    def goal_holds(self, goal: Proposition) -> bool:
        return any(goal in kb.gamma for kb in self.knowledge.values())

    def to_json(self) -> dict:
        return {
            "rounds": self.rounds,
            "plans": {agent: plan.to_json() for agent, plan in sorted(self.plans.items())},
            "deliveries": [d.to_json() for d in self.deliveries],
        }


@dataclass(frozen=True)
class Scenario:
    world: GridWorld
    env: CompiledEnv
    comm_rules: tuple[Rule, ...]
    goal: Proposition


# ── Joint search ──


@dataclass(frozen=True)
class _AgentState:
    cell: Cell
    inventory: frozenset[str]
    received: frozenset[Proposition]

    def facts(self) -> frozenset[Proposition]:
        return AugmentedState(self.cell, self.inventory).facts | self.received


@dataclass(frozen=True)
class _JointState:
    agents: tuple[_AgentState, ...]
    pending: frozenset[tuple[int, Proposition]]
    reached: bool


def _message_channels(comm_rules: tuple[Rule, ...]) -> list[tuple[str, Proposition]]:
    channels = set()
    for rule in comm_rules:
        for antecedent in rule.antecedents:
            if antecedent.kind is PropKind.RECEIVED:
                channels.add((antecedent.agent, antecedent.fact))
    return sorted(channels, key=lambda c: (c[0], c[1].sort_key()))


def _licensed(env: CompiledEnv, cell: Cell, facts: frozenset[Proposition], action: Action):
    for transition in env.index.transitions(cell, action):
        if transition.conditions <= facts:
            return transition
    return None


def multi_agent_plan(
    world: GridWorld,
    comm_rules: list[Rule] | tuple[Rule, ...],
    goal: Proposition | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> MultiAgentPlan:
    """Fewest-rounds joint plan; per round each agent waits, moves or sends once.

    Messages sent in round r are delivered at the start of round r + 1.
    """
    if len(world.agents) < 2:
        raise ScenarioError(f"multi-agent planning needs at least 2 agents, got {len(world.agents)}")
    if goal is None:
        if world.goal is None:
            raise ScenarioError("scenario has no goal")
        goal = Proposition.at(*world.goal)

    comm_rules = tuple(comm_rules)
    env = extend_rules(compile_rules(world), comm_rules)
    names = sorted(world.agents)
    channels = _message_channels(comm_rules)
    index_of = {name: i for i, name in enumerate(names)}

    starts = []
    for name in names:
        state, _ = apply_pickups(env, AugmentedState(world.agents[name]))
        starts.append(_AgentState(state.cell, state.inventory, frozenset()))
    start = _JointState(tuple(starts), frozenset(), any(goal in s.facts() for s in starts))

    def options(i: int, agent: _AgentState, everyone: list[_AgentState]):
        facts = agent.facts()
        yield (WAIT, None)
        for action in MOVES:
            transition = _licensed(env, agent.cell, facts, action)
            if transition is not None:
                yield (action, transition)
        for recipient, fact in channels:
            target = index_of.get(recipient)
            if target is None or target == i or fact not in facts:
                continue
            if Proposition.received(names[target], fact) in everyone[target].received:
                continue
            yield (Action.SEND, (target, fact))

    def successors(node: _JointState):
        delivered = list(node.agents)
        for target, fact in node.pending:
            agent = delivered[target]
            delivered[target] = _AgentState(
                agent.cell, agent.inventory, agent.received | {Proposition.received(names[target], fact)}
            )
        per_agent = [list(options(i, agent, delivered)) for i, agent in enumerate(delivered)]
        for joint in itertools.product(*per_agent):
            agents = []
            pending = set()
            for agent, (action, detail) in zip(delivered, joint):
                if action in MOVES:
                    landed, _ = apply_pickups(env, AugmentedState(detail.target, agent.inventory))
                    agents.append(_AgentState(landed.cell, landed.inventory, agent.received))
                else:
                    if action is Action.SEND:
                        pending.add(detail)
                    agents.append(agent)
            reached = node.reached or any(goal in a.facts() for a in agents)
            yield joint, _JointState(tuple(agents), frozenset(pending), reached)

    path = bfs(start, successors, lambda node: node.reached, max_depth=max_rounds)
    if path is None:
        raise NoJointPlan(max_rounds)

    steps: dict[str, list[PlanStep]] = {name: [] for name in names}
    deliveries: list[Delivery] = []
    current = list(starts)
    for round_no, (joint, node) in enumerate(path, start=1):
        for i, (action, detail) in enumerate(joint):
            name = names[i]
            before = AugmentedState(current[i].cell, current[i].inventory)
            if action in MOVES:
                landed, pickups = apply_pickups(env, AugmentedState(detail.target, current[i].inventory))
                steps[name].append(
                    PlanStep(
                        action=action,
                        source=before,
                        target=landed,
                        rule_id=detail.rule.id,
                        antecedents=detail.rule.ordered_antecedents(),
                        pickups=pickups,
                        round=round_no,
                    )
                )
            elif action is Action.SEND:
                target, fact = detail
                steps[name].append(
                    PlanStep(
                        action=Action.SEND,
                        source=before,
                        target=before,
                        rule_id=None,
                        antecedents=(fact,),
                        round=round_no,
                        recipient=names[target],
                        message=fact,
                    )
                )
                deliveries.append(Delivery(sender=name, recipient=names[target], fact=fact, sent_round=round_no))
        current = list(node.agents)

    plans = {
        name: Plan(start=AugmentedState(starts[i].cell, starts[i].inventory), steps=tuple(steps[name]))
        for i, name in enumerate(names)
    }
    knowledge = {
        name: replay_agent_plan(world, env.rules, name, plans[name], deliveries, goal)[1] for name in names
    }
    result = MultiAgentPlan(plans=plans, deliveries=tuple(deliveries), rounds=len(path), knowledge=knowledge)
    logger.info(
        "Multi-agent plan: %d agents, %d rounds, %d deliveries",
        len(names),
        result.rounds,
        len(result.deliveries),
    )
    return result


# ── Replay ──


def replay_agent_plan(
    world: GridWorld,
    rules: list[Rule] | tuple[Rule, ...],
    agent: str,
    plan: Plan,
    deliveries: list[Delivery] | tuple[Delivery, ...],
    goal: Proposition | None = None,
) -> tuple[ValidationResult, AgentKB]:
    """Replay one agent's steps against the rules and its own Γ.

    Deliveries to the agent become Received facts at the start of the round
    after they were sent.
    """
    env = assemble_env(rules, KnowledgeBase(), None, "")
    if agent not in world.agents:
        raise ScenarioError(f"unknown agent {agent}")
    state, _ = apply_pickups(env, AugmentedState(world.agents[agent]))
    kb = AgentKB(agent=agent, gamma=KnowledgeBase(state.facts))
    inbound = sorted(
        (d for d in deliveries if d.recipient == agent),
        key=lambda d: (d.sent_round, d.sender, d.fact.sort_key()),
    )
    delivered = 0
    invalid: list[int] = []

    for i, step in enumerate(plan.steps):
        round_no = step.round if step.round is not None else i + 1
        while delivered < len(inbound) and inbound[delivered].delivered_round <= round_no:
            kb.receive(inbound[delivered].sender, inbound[delivered].fact)
            delivered += 1

        if step.action is Action.SEND:
            if step.message is None or step.message not in kb.gamma:
                invalid.append(i)
            else:
                kb.send(step.recipient, step.message)
            continue

        transition = _licensed(env, state.cell, kb.gamma.facts | state.facts, step.action)
        if transition is None or transition.target != step.target.cell:
            invalid.append(i)
            landed, _ = apply_pickups(env, AugmentedState(step.target.cell, state.inventory))
        else:
            landed, _ = apply_pickups(env, AugmentedState(transition.target, state.inventory))
        state = landed
        kb.gamma.update(state.facts)

    while delivered < len(inbound):
        kb.receive(inbound[delivered].sender, inbound[delivered].fact)
        delivered += 1

    validation = ValidationResult(
        valid=not invalid,
        invalid_steps=tuple(invalid),
        final=state,
        reached_goal=goal is not None and goal in kb.gamma,
    )
    return validation, kb


# ── Scenario files ──


def sidecar_path(grid_path: str | Path) -> Path:
    grid_path = Path(grid_path)
    return grid_path.with_suffix(".comm.json")


def load_scenario(grid_path: str | Path) -> Scenario:
    """Read a digit-start grid and its `<name>.comm.json` rule sidecar."""
    world = read_grid(grid_path)
    if len(world.agents) < 2:
        raise ScenarioError(f"{grid_path}: multi-agent scenario needs at least 2 digit agent starts")

    path = sidecar_path(grid_path)
    records: list = []
    goal_text = None
    if path.exists():
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: {e}") from e
        if isinstance(data, list):
            records = data
        elif isinstance(data, dict):
            records = data.get("rules", [])
            goal_text = data.get("goal")
        else:
            raise ScenarioError(f"{path}: expected a list of rules or an object with 'rules'")

    try:
        comm_rules = tuple(load_rule_records(world, records))
        if goal_text is not None:
            goal = Proposition.parse(goal_text)
        elif world.goal is not None:
            goal = Proposition.at(*world.goal)
        else:
            raise ScenarioError(f"{grid_path}: no goal in grid or sidecar")
    except (RuleError, PropositionError) as e:
        raise ScenarioError(f"{path}: {e}") from e

    for rule in comm_rules:
        if not any(p.kind is PropKind.RECEIVED for p in rule.antecedents):
            raise ScenarioError(f"{path}: rule {rule.id} has no received() antecedent")

    env = extend_rules(compile_rules(world), comm_rules, goal=goal)
    return Scenario(world=world, env=env, comm_rules=comm_rules, goal=goal)
