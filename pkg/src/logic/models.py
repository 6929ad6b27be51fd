"""Ground propositions, Horn rules, knowledge bases and derivation records."""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator


class LogicError(Exception):
    """Base class for logic-core failures."""


class PropositionError(LogicError, ValueError):
    pass


class RuleError(LogicError, ValueError):
    pass


class GoalNotDerivedError(LogicError):
    def __init__(self, goal: "Proposition"):
        super().__init__(f"goal {goal} was not derived")
        self.goal = goal


class FrozenKnowledgeBaseError(LogicError):
    pass


class PropKind(str, Enum):
    AT = "at"
    HAS_KEY = "has_key"
    RECEIVED = "received"
    ATOM = "atom"


class Action(str, Enum):
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"
    PICKUP = "pickup"
    PROBE = "probe"
    SEND = "send"


# Cardinal moves in tie-break order.
MOVES = (Action.NORTH, Action.EAST, Action.SOUTH, Action.WEST)

_KIND_ORDER = {PropKind.AT: 0, PropKind.HAS_KEY: 1, PropKind.RECEIVED: 2, PropKind.ATOM: 3}
_TERM = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$", re.DOTALL)


@dataclass(frozen=True)
class Proposition:
    """A ground atom. Build with the `at`, `has_key`, `received`, `atom` helpers."""

    kind: PropKind
    args: tuple = ()
    fact: "Proposition | None" = None

    def __post_init__(self) -> None:
        if self.kind is PropKind.AT:
            if len(self.args) != 2 or not all(isinstance(a, int) for a in self.args):
                raise PropositionError(f"at() needs two integer coordinates, got {self.args!r}")
        elif self.kind is PropKind.HAS_KEY:
            if len(self.args) != 1 or not isinstance(self.args[0], str) or not self.args[0]:
                raise PropositionError(f"has_key() needs one key identifier, got {self.args!r}")
        elif self.kind is PropKind.RECEIVED:
            if len(self.args) != 1 or self.fact is None:
                raise PropositionError("received() needs an agent and a fact")
            if self.fact.kind is PropKind.RECEIVED:
                raise PropositionError("received() facts cannot be nested")
        elif not self.args or not all(isinstance(a, str) for a in self.args):
            raise PropositionError(f"atom needs a symbol, got {self.args!r}")
        if self.kind is not PropKind.RECEIVED and self.fact is not None:
            raise PropositionError(f"{self.kind.value}() does not wrap a fact")

    # ── Constructors ──

    @classmethod
    def at(cls, x: int, y: int) -> "Proposition":
        return cls(PropKind.AT, (int(x), int(y)))

    @classmethod
    def has_key(cls, key: str) -> "Proposition":
        return cls(PropKind.HAS_KEY, (key,))

    @classmethod
    def received(cls, agent: str, fact: "Proposition") -> "Proposition":
        return cls(PropKind.RECEIVED, (str(agent),), fact)

    @classmethod
    def atom(cls, symbol: str, *args: str) -> "Proposition":
        return cls(PropKind.ATOM, (symbol, *args))

    @classmethod
    def parse(cls, text: str) -> "Proposition":
        """Parse the textual form produced by `str()`, e.g. `received(1,has_key(a))`."""
        match = _TERM.match(text)
        if not match:
            raise PropositionError(f"cannot parse proposition {text!r}")
        name, body = match.group(1), match.group(2)
        lowered = name.lower()
        if lowered == "at":
            parts = _split_args(body)
            try:
                return cls.at(int(parts[0]), int(parts[1])) if len(parts) == 2 else cls._bad(text)
            except ValueError as e:
                raise PropositionError(f"bad coordinates in {text!r}") from e
        if lowered in ("has_key", "haskey"):
            parts = _split_args(body)
            return cls.has_key(parts[0]) if len(parts) == 1 else cls._bad(text)
        if lowered == "received":
            if body is None or "," not in body:
                cls._bad(text)
            agent, inner = body.split(",", 1)
            return cls.received(agent.strip(), cls.parse(inner))
        return cls.atom(name, *_split_args(body))

    @staticmethod
    def _bad(text: str) -> "Proposition":
        raise PropositionError(f"cannot parse proposition {text!r}")

    # ── Accessors ──

    @property
    def cell(self) -> tuple[int, int]:
        if self.kind is not PropKind.AT:
            raise PropositionError(f"{self} is not a position")
        return self.args[0], self.args[1]

    @property
    def key(self) -> str:
        if self.kind is not PropKind.HAS_KEY:
            raise PropositionError(f"{self} is not a key fact")
        return self.args[0]

    @property
    def agent(self) -> str:
        if self.kind is not PropKind.RECEIVED:
            raise PropositionError(f"{self} is not a received fact")
        return self.args[0]

    def sort_key(self) -> tuple:
        inner = self.fact.sort_key() if self.fact is not None else ()
        return (_KIND_ORDER[self.kind], self.args, inner)

    def __str__(self) -> str:
        if self.kind is PropKind.AT:
            return f"at({self.args[0]},{self.args[1]})"
        if self.kind is PropKind.HAS_KEY:
            return f"has_key({self.args[0]})"
        if self.kind is PropKind.RECEIVED:
            return f"received({self.args[0]},{self.fact})"
        symbol, *rest = self.args
        return f"{symbol}({','.join(rest)})" if rest else symbol


def _split_args(body: str | None) -> list[str]:
    if body is None or not body.strip():
        return []
    return [part.strip() for part in body.split(",")]


def sorted_props(props: Iterable[Proposition]) -> list[Proposition]:
    return sorted(props, key=Proposition.sort_key)


@dataclass(frozen=True)
class Rule:
    """Horn implication `antecedents -> consequent`.

    Equality ignores `id`: two rules with the same content are the same rule.
    """

    id: int = field(compare=False)
    antecedents: frozenset[Proposition]
    consequent: Proposition
    action: Action | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "antecedents", frozenset(self.antecedents))
        if not self.antecedents:
            raise RuleError(f"rule {self.id} has no antecedents")
        if self.consequent in self.antecedents:
            raise RuleError(f"rule {self.id} derives its own antecedent {self.consequent}")

    @property
    def arity(self) -> int:
        return len(self.antecedents)

    def ordered_antecedents(self) -> tuple[Proposition, ...]:
        return tuple(sorted_props(self.antecedents))

    def describe(self) -> str:
        body = " & ".join(str(p) for p in self.ordered_antecedents())
        label = f" [{self.action.value}]" if self.action else ""
        return f"{body} -> {self.consequent}{label}"

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "antecedents": [str(p) for p in self.ordered_antecedents()],
            "consequent": str(self.consequent),
            "action": self.action.value if self.action else None,
        }

    @classmethod
    def from_json(cls, data: dict, default_id: int = -1) -> "Rule":
        try:
            action = data.get("action")
            return cls(
                id=int(data.get("id", default_id)),
                antecedents=frozenset(Proposition.parse(p) for p in data["antecedents"]),
                consequent=Proposition.parse(data["consequent"]),
                action=Action(action) if action else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise RuleError(f"invalid rule record {data!r}: {e}") from e


class KnowledgeBase:
    """Monotone fact set. `generation` counts genuinely new insertions."""

    def __init__(self, facts: Iterable[Proposition] = ()):
        self._facts: set[Proposition] = set()
        self.generation = 0
        self._frozen = False
        for fact in facts:
            self.add(fact)

    def add(self, fact: Proposition) -> bool:
        if self._frozen:
            raise FrozenKnowledgeBaseError("knowledge base is frozen")
        if fact in self._facts:
            return False
        self._facts.add(fact)
        self.generation += 1
        return True

    def update(self, facts: Iterable[Proposition]) -> int:
        return sum(1 for fact in facts if self.add(fact))

    def freeze(self) -> "KnowledgeBase":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def facts(self) -> frozenset[Proposition]:
        return frozenset(self._facts)

    def __contains__(self, fact: object) -> bool:
        return fact in self._facts

    def __iter__(self) -> Iterator[Proposition]:
        return iter(sorted_props(self._facts))

    def __len__(self) -> int:
        return len(self._facts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, KnowledgeBase):
            return self._facts == other._facts
        if isinstance(other, (set, frozenset)):
            return self._facts == other
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        shown = ", ".join(str(f) for f in list(self)[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"KnowledgeBase({{{shown}{more}}}, generation={self.generation})"


@dataclass(frozen=True)
class Justification:
    order: int
    rule_id: int | None = None
    antecedents: tuple[Proposition, ...] = ()

    @property
    def is_axiom(self) -> bool:
        return self.rule_id is None


@dataclass
class DerivationGraph:
    nodes: dict[Proposition, Justification] = field(default_factory=dict)
    rules: dict[int, Rule] = field(default_factory=dict)

    def __contains__(self, prop: object) -> bool:
        return prop in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def justification(self, prop: Proposition) -> Justification:
        try:
            return self.nodes[prop]
        except KeyError:
            raise GoalNotDerivedError(prop) from None

    def in_order(self) -> list[tuple[Proposition, Justification]]:
        return sorted(self.nodes.items(), key=lambda item: item[1].order)

    def axioms(self) -> list[Proposition]:
        return [p for p, j in self.in_order() if j.is_axiom]


@dataclass
class ClosureStats:
    rule_applications: int = 0
    membership_tests: int = 0
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "rule_applications": self.rule_applications,
            "membership_tests": self.membership_tests,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class ProofTree:
    """Goal-rooted slice of a derivation graph. Leaves are axioms."""

    proposition: Proposition
    rule_id: int | None = None
    action: Action | None = None
    children: tuple["ProofTree", ...] = ()
    depth: int = field(default=1, init=False, compare=False)

    def __post_init__(self) -> None:
        # Children are always built first, so depth never recurses.
        depth = 1 + max((child.depth for child in self.children), default=0)
        object.__setattr__(self, "depth", depth)

    @property
    def is_axiom(self) -> bool:
        return self.rule_id is None

    def walk(self) -> Iterator["ProofTree"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> set[Proposition]:
        return {node.proposition for node in self.walk() if not node.children}

    def rule_ids(self) -> set[int]:
        return {node.rule_id for node in self.walk() if node.rule_id is not None}
