"""Artifact writer: JSON, CSV and ASCII trace files under one output directory."""

import csv
import json
import logging
import re
from pathlib import Path
from typing import Iterable

from ..env.grid import GOAL, START, Cell, GridWorld, render_grid
from ..planner.models import Plan

logger = logging.getLogger(__name__)

PATH_MARK = "*"
KEY_MARK = "k"
DOOR_MARK = "d"

_STEP_LINE = re.compile(
    r"^\s*(?P<n>\d+)\.\s+(?P<action>\w+)\s+\((?P<x0>-?\d+),(?P<y0>-?\d+)\)->\((?P<x1>-?\d+),(?P<y1>-?\d+)\)"
)


class ArtifactWriter:
    """Writes run artifacts into `out_dir`."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.written: dict[str, Path] = {}

    def start_run(self) -> None:
        """Forget the files recorded by the previous run."""
        self.written = {}

    def _ensure_directory_exists(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_json(self, name: str, data) -> Path:
        self._ensure_directory_exists()
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        logger.debug("Artifact saved: %s", file_path)
        self.written[name] = file_path
        return file_path

    def write_text(self, name: str, content: str) -> Path:
        self._ensure_directory_exists()
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content if content.endswith("\n") else content + "\n")
        logger.debug("Artifact saved: %s", file_path)
        self.written[name] = file_path
        return file_path

    def write_csv(self, name: str, fieldnames: list[str], rows: Iterable[dict]) -> Path:
        self._ensure_directory_exists()
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        logger.debug("Artifact saved: %s", file_path)
        self.written[name] = file_path
        return file_path


# ── Trace rendering ──


def trace_overlay(world: GridWorld, plan: Plan) -> dict[Cell, str]:
    overlay: dict[Cell, str] = {}
    for step in plan.steps:
        if not step.is_move:
            continue
        cell = step.target.cell
        if cell in (world.start, world.goal) or cell in world.agents.values():
            continue
        if step.pickups:
            overlay[cell] = KEY_MARK
        elif cell in world.doors and overlay.get(cell) != KEY_MARK:
            overlay[cell] = DOOR_MARK
        else:
            overlay.setdefault(cell, PATH_MARK)
    return overlay


def render_trace(world: GridWorld, plan: Plan) -> str:
    """Grid with the path drawn in, then one justification line per move."""
    lines = [render_grid(world, trace_overlay(world, plan)), ""]
    n = 0
    for step in plan.steps:
        if not step.is_move:
            continue
        n += 1
        (x0, y0), (x1, y1) = step.source.cell, step.target.cell
        body = " & ".join(str(p) for p in step.antecedents)
        lines.append(f"{n}. {step.action.value} ({x0},{y0})->({x1},{y1}) by rule {step.rule_id}: {body}")
    return "\n".join(lines)


def read_trace_cells(text: str) -> list[Cell]:
    """Recover the visited cell sequence from a trace and check it against the overlay."""
    grid_part, _, listing = text.partition("\n\n")
    rows = grid_part.split("\n")
    cells: list[Cell] = []
    for line in listing.split("\n"):
        match = _STEP_LINE.match(line)
        if not match:
            continue
        source = (int(match.group("x0")), int(match.group("y0")))
        target = (int(match.group("x1")), int(match.group("y1")))
        if not cells:
            cells.append(source)
        elif cells[-1] != source:
            raise ValueError(f"trace step {match.group('n')} starts at {source}, expected {cells[-1]}")
        cells.append(target)

    marks = {PATH_MARK, KEY_MARK, DOOR_MARK, START, GOAL}
    for x, y in cells[1:]:
        glyph = rows[y][x] if 0 <= y < len(rows) and 0 <= x < len(rows[y]) else None
        if glyph not in marks and not (glyph or "").isdigit():
            raise ValueError(f"cell ({x},{y}) on the path is not marked in the overlay")
    if not cells:
        start = [(x, y) for y, row in enumerate(rows) for x, ch in enumerate(row) if ch == START]
        cells = start[:1]
    return cells


def render_heat(world: GridWorld, counts: dict[Cell, int]) -> str:
    """Scale counts to digits 0-9; walls stay `#`, untouched cells `.`."""
    peak = max(counts.values(), default=0)
    lines = []
    for y in range(world.height):
        chars = []
        for x in range(world.width):
            cell = (x, y)
            if cell in world.walls:
                chars.append("#")
            elif counts.get(cell, 0) == 0 or peak == 0:
                chars.append(".")
            else:
                chars.append(str(min(9, counts[cell] * 9 // peak)))
        lines.append("".join(chars))
    return "\n".join(lines)


def render_exploration(world: GridWorld, visits: dict[Cell, int], invalid: dict[Cell, int]) -> str:
    return "\n".join(
        [
            f"visits (peak {max(visits.values(), default=0)})",
            render_heat(world, visits),
            "",
            f"invalid attempts (peak {max(invalid.values(), default=0)}, total {sum(invalid.values())})",
            render_heat(world, invalid),
        ]
    )
