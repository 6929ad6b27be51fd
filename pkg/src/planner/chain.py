"""Hierarchical goal chaining: prove and reach subgoals left to right."""

import logging
import re

from ..env.compiler import CompiledEnv
from ..logic.engine import close
from ..logic.models import KnowledgeBase, Proposition
from .models import MemoCache, Plan, PlannerError, PlannerInconsistencyError, SubgoalUnreachable
from .search import search_fragment, start_state

logger = logging.getLogger(__name__)

_SUBGOAL = re.compile(
    r"\s*(?:(?:haskey|has_key):(?P<key>[a-z])|at:(?P<x>\d+),(?P<y>\d+))\s*(?P<sep>,|$)",
    re.IGNORECASE,
)


class SubgoalSyntaxError(PlannerError, ValueError):
    pass


def parse_subgoals(text: str) -> list[Proposition]:
    """Parse `haskey:a,at:8,8` into [has_key(a), at(8,8)]."""
    subgoals: list[Proposition] = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = _SUBGOAL.match(text, pos)
        if not match or match.end() == pos:
            raise SubgoalSyntaxError(f"cannot parse subgoal at offset {pos}: {text[pos:]!r}")
        if match.group("key"):
            subgoals.append(Proposition.has_key(match.group("key").lower()))
        else:
            subgoals.append(Proposition.at(int(match.group("x")), int(match.group("y"))))
        pos = match.end()
    if not subgoals:
        raise SubgoalSyntaxError("no subgoals given")
    return subgoals


def established_facts(plan: Plan) -> set[Proposition]:
    facts = set(plan.start.facts)
    for step in plan.steps:
        facts |= step.target.facts
    return facts


def plan_chain(env: CompiledEnv, subgoals: list[Proposition], cache: MemoCache | None = None) -> Plan:
    """Concatenate per-subgoal fragments, carrying Γ forward between them.

    Each subgoal is first proven from the current Γ; the fragment is then
    taken from `cache` or found by search from the previous fragment's end.
    `milestones[i]` is the step count at which subgoal i holds.
    """
    if not subgoals:
        raise SubgoalSyntaxError("no subgoals given")

    gamma = KnowledgeBase(env.initial)
    state = start_state(env)
    steps: tuple = ()
    milestones: list[int] = []
    start = state

    for index, subgoal in enumerate(subgoals):
        closure, _, stats = close(gamma, env.rules)
        if subgoal not in closure:
            logger.info("Chain: subgoal %d (%s) not provable from %d facts", index, subgoal, len(gamma))
            raise SubgoalUnreachable(index, subgoal)

        fragment = cache.get(env.digest, subgoal, state) if cache is not None else None
        if fragment is None:
            fragment = search_fragment(env, state, subgoal)
            if fragment is None:
                raise PlannerInconsistencyError(f"subgoal {index} ({subgoal}) provable but no trajectory found")
            if cache is not None:
                cache.put(env.digest, subgoal, state, fragment)
        else:
            logger.debug("Chain: reused cached fragment for %s from %s", subgoal, state)

        steps = steps + fragment.steps
        milestones.append(len(steps))
        gamma.update(established_facts(fragment))
        state = fragment.end
        logger.debug(
            "Chain: subgoal %d (%s) in %d moves, closure %d passes",
            index,
            subgoal,
            fragment.total_length,
            stats.iterations,
        )

    chained = Plan(start=start, steps=steps, milestones=tuple(milestones))
    logger.info(
        "Chain: %d subgoals, %d moves%s",
        len(subgoals),
        chained.total_length,
        f", cache {cache.hits} hits / {cache.misses} misses" if cache is not None else "",
    )
    return chained
