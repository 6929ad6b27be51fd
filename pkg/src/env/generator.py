"""Seeded random grids for test suites and scaling runs."""

import numpy as np

from .grid import GridWorld, parse_grid

# Lowercase s and g would pair with the reserved S and G glyphs.
KEY_LETTERS = "abcdefhijklmnopqrtuvwxyz"


def random_world(
    rng: np.random.Generator,
    width: int,
    height: int,
    pairs: int = 0,
    wall_density: float = 0.2,
) -> GridWorld:
    """Draw a grid with one start, one goal and `pairs` key/door pairs.

    Solvability is not guaranteed; callers filter with the oracle.
    """
    cells = width * height
    if cells < 2 + 2 * pairs:
        raise ValueError(f"{width}x{height} grid cannot hold start, goal and {pairs} key/door pairs")
    if pairs > len(KEY_LETTERS):
        raise ValueError(f"at most {len(KEY_LETTERS)} key/door pairs")

    glyphs = np.full(cells, ".", dtype="<U1")
    glyphs[rng.random(cells) < wall_density] = "#"
    placed = rng.permutation(cells)[: 2 + 2 * pairs]
    glyphs[placed[0]] = "S"
    glyphs[placed[1]] = "G"
    for i in range(pairs):
        letter = KEY_LETTERS[i]
        glyphs[placed[2 + 2 * i]] = letter
        glyphs[placed[3 + 2 * i]] = letter.upper()

    rows = ["".join(glyphs[y * width : (y + 1) * width]) for y in range(height)]
    return parse_grid("\n".join(rows))


def empty_world(size: int) -> GridWorld:
    """Open size x size grid, start top-left and goal bottom-right."""
    rows = ["." * size for _ in range(size)]
    rows[0] = "S" + rows[0][1:]
    rows[-1] = rows[-1][:-1] + "G"
    return parse_grid("\n".join(rows))
