"""Forward-chaining closure with derivation provenance."""

import logging
from collections import defaultdict
from typing import Callable, Iterable

from .models import (
    ClosureStats,
    DerivationGraph,
    GoalNotDerivedError,
    Justification,
    KnowledgeBase,
    Proposition,
    ProofTree,
    Rule,
    RuleError,
    sorted_props,
)

logger = logging.getLogger(__name__)

PassHook = Callable[[int, frozenset[Proposition]], None]


class _Interner:
    """Maps propositions to dense integer handles."""

    def __init__(self):
        self._ids: dict[Proposition, int] = {}
        self.props: list[Proposition] = []

    def handle(self, prop: Proposition) -> int:
        found = self._ids.get(prop)
        if found is None:
            found = len(self.props)
            self._ids[prop] = found
            self.props.append(prop)
        return found


def _canonical_rules(rules: Iterable[Rule]) -> list[Rule]:
    by_id: dict[int, Rule] = {}
    for rule in rules:
        seen = by_id.get(rule.id)
        if seen is not None and seen != rule:
            raise RuleError(f"duplicate rule id {rule.id}: {seen.describe()} vs {rule.describe()}")
        by_id[rule.id] = rule
    return [by_id[rule_id] for rule_id in sorted(by_id)]


def close(
    gamma0: KnowledgeBase | Iterable[Proposition],
    rules: Iterable[Rule],
    on_pass: PassHook | None = None,
) -> tuple[KnowledgeBase, DerivationGraph, ClosureStats]:
    """Compute the least fixpoint of `gamma0` under `rules`.

    Each rule keeps a counter of antecedents not yet proven. A pass consumes
    the facts derived by the previous pass, and rules whose counter drops to
    zero fire in ascending id order, so the lowest id justifies a fact
    derived twice in the same pass.
    """
    ordered = _canonical_rules(rules)
    interner = _Interner()
    stats = ClosureStats()

    watchers: dict[int, list[int]] = defaultdict(list)
    remaining: list[int] = []
    heads: list[int] = []
    for index, rule in enumerate(ordered):
        handles = {interner.handle(p) for p in rule.antecedents}
        for handle in handles:
            watchers[handle].append(index)
        remaining.append(len(handles))
        heads.append(interner.handle(rule.consequent))

    proven: set[int] = set()
    graph = DerivationGraph(rules={rule.id: rule for rule in ordered})
    closure = KnowledgeBase()

    def record(handle: int, justification: Justification) -> None:
        proven.add(handle)
        prop = interner.props[handle]
        closure.add(prop)
        graph.nodes[prop] = justification

    frontier: list[int] = []
    for prop in sorted_props(gamma0):
        handle = interner.handle(prop)
        stats.membership_tests += 1
        if handle not in proven:
            record(handle, Justification(order=len(graph.nodes)))
            frontier.append(handle)

    while frontier:
        stats.iterations += 1
        ready: list[int] = []
        for handle in frontier:
            for index in watchers.get(handle, ()):
                remaining[index] -= 1
                if remaining[index] == 0:
                    ready.append(index)

        frontier = []
        for index in sorted(ready):
            rule = ordered[index]
            stats.rule_applications += 1
            stats.membership_tests += 1
            head = heads[index]
            if head in proven:
                continue
            record(
                head,
                Justification(
                    order=len(graph.nodes),
                    rule_id=rule.id,
                    antecedents=rule.ordered_antecedents(),
                ),
            )
            frontier.append(head)

        if on_pass is not None:
            on_pass(stats.iterations, closure.facts)

    logger.debug(
        "Closure: %d facts from %d axioms, %d rules, %d passes",
        len(closure),
        len(graph.axioms()),
        len(ordered),
        stats.iterations,
    )
    return closure.freeze(), graph, stats


def proves(closure: KnowledgeBase, goal: Proposition) -> bool:
    return goal in closure


def extract_proof(graph: DerivationGraph, goal: Proposition) -> ProofTree:
    """Build the goal-rooted proof tree, children before parents."""
    if goal not in graph:
        raise GoalNotDerivedError(goal)

    support: set[Proposition] = set()
    stack = [goal]
    while stack:
        prop = stack.pop()
        if prop in support:
            continue
        support.add(prop)
        stack.extend(graph.nodes[prop].antecedents)

    built: dict[Proposition, ProofTree] = {}
    for prop in sorted(support, key=lambda p: graph.nodes[p].order):
        justification = graph.nodes[prop]
        rule = graph.rules.get(justification.rule_id) if justification.rule_id is not None else None
        built[prop] = ProofTree(
            proposition=prop,
            rule_id=justification.rule_id,
            action=rule.action if rule else None,
            children=tuple(built[a] for a in justification.antecedents),
        )
    return built[goal]


def naive_close(
    gamma0: KnowledgeBase | Iterable[Proposition],
    rules: Iterable[Rule],
) -> KnowledgeBase:
    """Reference closure: rescan every rule until nothing changes."""
    ordered = _canonical_rules(rules)
    facts = KnowledgeBase(gamma0)
    changed = True
    while changed:
        changed = False
        for rule in ordered:
            if rule.consequent not in facts and all(a in facts for a in rule.antecedents):
                facts.add(rule.consequent)
                changed = True
    return facts.freeze()
