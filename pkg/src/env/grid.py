"""Text grid DSL: parsing, rendering and digests."""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..logic.models import MOVES, Action

logger = logging.getLogger(__name__)

Cell = tuple[int, int]

DELTAS: dict[Action, Cell] = {
    Action.NORTH: (0, -1),
    Action.EAST: (1, 0),
    Action.SOUTH: (0, 1),
    Action.WEST: (-1, 0),
}

WALL = "#"
FLOOR = "."
START = "S"
GOAL = "G"


# ── Errors ──


class GridParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(f"{where}{message}")


class EmptyGridError(GridParseError):
    pass


class RaggedRowsError(GridParseError):
    pass


class UnknownCharError(GridParseError):
    pass


class MissingStartError(GridParseError):
    pass


class MissingGoalError(GridParseError):
    pass


class DuplicateStartError(GridParseError):
    pass


class DuplicateGoalError(GridParseError):
    pass


class MixedStartsError(GridParseError):
    pass


# ── World ──


@dataclass(frozen=True)
class GridWorld:
    width: int
    height: int
    walls: frozenset[Cell]
    keys: dict[Cell, str]
    doors: dict[Cell, str]
    start: Cell
    goal: Cell | None
    agents: dict[str, Cell] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_open(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def neighbor(self, cell: Cell, action: Action) -> Cell:
        dx, dy = DELTAS[action]
        return cell[0] + dx, cell[1] + dy

    def cells(self) -> list[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def open_cells(self) -> list[Cell]:
        return [c for c in self.cells() if c not in self.walls]

    def adjacent_pairs(self) -> list[tuple[Cell, Cell, Action]]:
        """Ordered (source, target, action) pairs between open cells, row-major then N,E,S,W."""
        pairs = []
        for cell in self.open_cells():
            for action in MOVES:
                target = self.neighbor(cell, action)
                if self.is_open(target):
                    pairs.append((cell, target, action))
        return pairs

    @property
    def is_multi_agent(self) -> bool:
        return bool(self.agents)


# ── Parsing ──


def _grid_lines(text: str) -> tuple[int, list[str]]:
    """Rows without blank edge lines, plus the file line number of the first row."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    first = 0
    while first < len(lines) and not lines[first]:
        first += 1
    last = len(lines)
    while last > first and not lines[last - 1]:
        last -= 1
    return first + 1, lines[first:last]


def normalize_grid_text(text: str) -> str:
    """Unify line endings and drop blank edge lines."""
    return "\n".join(_grid_lines(text)[1])


def parse_grid(text: str) -> GridWorld:
    first, rows = _grid_lines(text)
    if not rows:
        raise EmptyGridError("grid is empty")
    width = len(rows[0])
    for index, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRowsError(
                f"row has {len(row)} cells, expected {width}", line=first + index, column=min(len(row), width) + 1
            )

    walls: set[Cell] = set()
    keys: dict[Cell, str] = {}
    doors: dict[Cell, str] = {}
    agents: dict[str, Cell] = {}
    starts: list[Cell] = []
    goals: list[Cell] = []

    for y, row in enumerate(rows):
        for x, char in enumerate(row):
            cell = (x, y)
            if char == WALL:
                walls.add(cell)
            elif char == FLOOR:
                pass
            elif char == START:
                if starts:
                    raise DuplicateStartError("second start cell", line=first + y, column=x + 1)
                starts.append(cell)
            elif char == GOAL:
                if goals:
                    raise DuplicateGoalError("second goal cell", line=first + y, column=x + 1)
                goals.append(cell)
            elif "a" <= char <= "z":
                keys[cell] = char
            elif "A" <= char <= "Z":
                doors[cell] = char.lower()
            elif "0" <= char <= "9":
                if char in agents:
                    raise DuplicateStartError(f"agent {char} placed twice", line=first + y, column=x + 1)
                agents[char] = cell
            else:
                raise UnknownCharError(f"unknown character {char!r}", line=first + y, column=x + 1)

    if agents and starts:
        x, y = starts[0]
        raise MixedStartsError("S cannot be combined with digit agent starts", line=first + y, column=x + 1)
    if not agents and not starts:
        raise MissingStartError("no start cell 'S'")
    if not agents and not goals:
        raise MissingGoalError("no goal cell 'G'")

    warnings = []
    present_keys = set(keys.values())
    for letter in sorted(set(doors.values()) - present_keys):
        message = f"door {letter.upper()} has no matching key {letter}"
        logger.warning("Grid: %s", message)
        warnings.append(message)

    start = starts[0] if starts else agents[min(agents)]
    return GridWorld(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        keys=keys,
        doors=doors,
        start=start,
        goal=goals[0] if goals else None,
        agents=dict(sorted(agents.items())),
        warnings=tuple(warnings),
    )


def read_grid(path: str | Path) -> GridWorld:
    with open(path, "r", encoding="utf-8") as f:
        return parse_grid(f.read())


# ── Rendering ──


def render_grid(world: GridWorld, overlay: dict[Cell, str] | None = None) -> str:
    """Render back to the DSL; `overlay` characters replace cell glyphs."""
    overlay = overlay or {}
    agent_at = {cell: agent for agent, cell in world.agents.items()}
    lines = []
    for y in range(world.height):
        chars = []
        for x in range(world.width):
            cell = (x, y)
            if cell in overlay:
                chars.append(overlay[cell])
            elif cell in world.walls:
                chars.append(WALL)
            elif cell in agent_at:
                chars.append(agent_at[cell])
            elif cell == world.start and not world.agents:
                chars.append(START)
            elif cell == world.goal:
                chars.append(GOAL)
            elif cell in world.keys:
                chars.append(world.keys[cell])
            elif cell in world.doors:
                chars.append(world.doors[cell].upper())
            else:
                chars.append(FLOOR)
        lines.append("".join(chars))
    return "\n".join(lines)


def grid_digest(world: GridWorld) -> str:
    return hashlib.sha256(render_grid(world).encode("utf-8")).hexdigest()
