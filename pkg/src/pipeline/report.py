"""Experiment report, proof/plan documents and schema validation."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from ..logic.models import Action, DerivationGraph, Proposition, ProofTree
from ..planner.models import Plan, ValidationResult

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).parent.parent.parent / "schemas" / "report.schema.json"

CONSTRUCTIVE = "constructive"
Q_LEARNING = "q_learning"


@dataclass
class MethodMetrics:
    method: str
    success: bool
    invalid_actions: int
    episodes_required: int
    plan_length: int | None
    optimal_length: int | None
    wall_time_ms: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SeedMetrics:
    seed: int
    invalid_actions: int
    episodes_required: int
    greedy_success: bool
    greedy_length: int | None
    wall_time_ms: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    grid: str
    grid_digest: str
    solvable: bool
    optimal_length: int | None
    config: dict
    methods: list[MethodMetrics] = field(default_factory=list)
    seeds: list[SeedMetrics] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)

    def method(self, name: str) -> MethodMetrics:
        for metrics in self.methods:
            if metrics.method == name:
                return metrics
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "grid": self.grid,
            "grid_digest": self.grid_digest,
            "solvable": self.solvable,
            "optimal_length": self.optimal_length,
            "config": self.config,
            "methods": [m.to_json() for m in self.methods],
            "seeds": [s.to_json() for s in sorted(self.seeds, key=lambda s: s.seed)],
            "artifacts": dict(sorted(self.artifacts.items())),
        }

    def csv_rows(self) -> list[dict]:
        return [m.to_json() for m in self.methods]


REPORT_CSV_FIELDS = [
    "method",
    "success",
    "invalid_actions",
    "episodes_required",
    "plan_length",
    "optimal_length",
    "wall_time_ms",
]


def aggregate_seeds(seeds: list[SeedMetrics], optimal_length: int | None) -> MethodMetrics:
    """Fold per-seed results with sums and maxima only."""
    lengths = [s.greedy_length for s in seeds if s.greedy_success and s.greedy_length is not None]
    success = bool(seeds) and all(s.greedy_success for s in seeds)
    return MethodMetrics(
        method=Q_LEARNING,
        success=success,
        invalid_actions=sum(s.invalid_actions for s in seeds),
        episodes_required=max((s.episodes_required for s in seeds), default=0),
        plan_length=max(lengths) if success and lengths else None,
        optimal_length=optimal_length,
        wall_time_ms=round(sum(s.wall_time_ms for s in seeds), 3),
    )


def summary_table(report: ExperimentReport) -> str:
    header = f"{'method':<14}{'invalid':>10}{'episodes':>10}{'length':>8}{'optimal':>9}{'time_ms':>12}"
    lines = [header, "-" * len(header)]
    for m in report.methods:
        length = "-" if m.plan_length is None else str(m.plan_length)
        optimal = "-" if m.optimal_length is None else str(m.optimal_length)
        lines.append(
            f"{m.method:<14}{m.invalid_actions:>10}{m.episodes_required:>10}{length:>8}{optimal:>9}{m.wall_time_ms:>12.1f}"
        )
    return "\n".join(lines)


def validate_report(doc: dict, schema_path: str | Path = SCHEMA_PATH) -> None:
    """Raise jsonschema.ValidationError when `doc` breaks the shipped schema."""
    with open(schema_path, "r", encoding="utf-8") as f:
        schema = json.load(f)
    jsonschema.validate(instance=doc, schema=schema)


# ── Proof documents ──


def proof_to_doc(tree: ProofTree, graph: DerivationGraph) -> dict:
    """Nested tree plus a flat derivation-order listing of the proof's nodes."""
    built: dict[int, dict] = {}
    order: list[ProofTree] = []
    stack: list[tuple[ProofTree, bool]] = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in built:
            continue
        if expanded:
            built[id(node)] = {
                "proposition": str(node.proposition),
                "rule": "axiom" if node.rule_id is None else node.rule_id,
                "action": node.action.value if node.action else None,
                "children": [built[id(child)] for child in node.children],
            }
            order.append(node)
            continue
        stack.append((node, True))
        for child in reversed(node.children):
            if id(child) not in built:
                stack.append((child, False))

    seen: set[Proposition] = set()
    listing = []
    for node in sorted(order, key=lambda n: graph.nodes[n.proposition].order):
        if node.proposition in seen:
            continue
        seen.add(node.proposition)
        justification = graph.nodes[node.proposition]
        listing.append(
            {
                "order": justification.order,
                "proposition": str(node.proposition),
                "rule": "axiom" if justification.is_axiom else justification.rule_id,
                "antecedents": [str(p) for p in justification.antecedents],
            }
        )
    return {"depth": tree.depth, "tree": built[id(tree)], "derivation": listing}


def proof_from_doc(doc: dict) -> ProofTree:
    """Rebuild a ProofTree from `proof_to_doc` output, children first."""
    root = doc["tree"]
    built: dict[int, ProofTree] = {}
    stack: list[tuple[dict, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            rule = node["rule"]
            built[id(node)] = ProofTree(
                proposition=Proposition.parse(node["proposition"]),
                rule_id=None if rule == "axiom" else int(rule),
                action=Action(node["action"]) if node.get("action") else None,
                children=tuple(built[id(child)] for child in node["children"]),
            )
            continue
        stack.append((node, True))
        for child in reversed(node["children"]):
            stack.append((child, False))
    return built[id(root)]


# ── Plan documents ──


def plan_to_doc(plan: Plan, grid_digest: str, validation: ValidationResult) -> dict:
    return {
        "grid_digest": grid_digest,
        "total_length": plan.total_length,
        "start": plan.start.to_json(),
        "steps": [step.to_json() for step in plan.steps],
        "cells": [list(cell) for cell in plan.cells()],
        "valid": validation.valid,
        "invalid_steps": list(validation.invalid_steps),
    }
