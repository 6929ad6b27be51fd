import random
from pathlib import Path

import numpy as np
import pytest

from src.env.generator import random_world
from src.env.grid import GridWorld, parse_grid, read_grid
from src.logic.models import Proposition, Rule
from src.planner.search import oracle_shortest

FIXTURES = Path(__file__).parent.parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_fixture(name: str) -> GridWorld:
    return read_grid(fixture_path(name))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def corridor() -> GridWorld:
    return parse_grid("S.G")


@pytest.fixture
def one_key() -> GridWorld:
    return load_fixture("one_key_5x5.grid")


@pytest.fixture
def two_key() -> GridWorld:
    return load_fixture("two_key_9x9.grid")


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """Keep the ledger and output dir inside the test's tmp_path."""
    monkeypatch.setenv("PROOFPLAN_DB_PATH", str(tmp_path / "runs.db"))
    monkeypatch.setenv("PROOFPLAN_OUT_DIR", str(tmp_path / "out"))
    for name in ("PROOFPLAN_SEED", "PROOFPLAN_COMPARE_SEEDS", "PROOFPLAN_WORKERS", "PROOFPLAN_LEDGER"):
        monkeypatch.delenv(name, raising=False)


def solvable_suite(count: int, seed: int = 7, max_size: int = 10, max_pairs: int = 3) -> list[GridWorld]:
    """Seeded random grids up to max_size x max_size that the oracle can solve."""
    rng = np.random.default_rng(seed)
    worlds = []
    while len(worlds) < count:
        width = int(rng.integers(2, max_size + 1))
        height = int(rng.integers(2, max_size + 1))
        pairs = int(rng.integers(0, max_pairs + 1))
        if width * height < 2 + 2 * pairs:
            continue
        world = random_world(rng, width, height, pairs=pairs, wall_density=0.2)
        if oracle_shortest(world) is not None:
            worlds.append(world)
    return worlds


def random_rule_system(seed: int, max_facts: int = 50) -> tuple[set[Proposition], list[Rule]]:
    """Random propositional Horn system over at most `max_facts` atoms."""
    rnd = random.Random(seed)
    n = rnd.randint(3, max_facts)
    atoms = [Proposition.atom(f"p{i}") for i in range(n)]
    gamma0 = set(rnd.sample(atoms, rnd.randint(1, max(1, n // 5))))
    rules = []
    for rule_id in range(rnd.randint(1, 2 * n)):
        consequent = rnd.choice(atoms)
        pool = [a for a in atoms if a != consequent]
        body = rnd.sample(pool, rnd.randint(1, min(3, len(pool))))
        rules.append(Rule(id=rule_id, antecedents=frozenset(body), consequent=consequent))
    return gamma0, rules
