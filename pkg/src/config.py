"""Configuration module for the proofplan harness."""

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from dotenv import load_dotenv

from .rl.qlearning import HyperparamError, Hyperparams


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    out_dir: Path


@dataclass
class LedgerConfig:
    enabled: bool
    db_path: Path


@dataclass
class CompareConfig:
    seeds: int
    workers: int
    record_timing: bool


@dataclass
class Config:
    paths: PathsConfig
    ledger: LedgerConfig
    compare: CompareConfig
    seed_override: int | None
    max_rounds: int
    log_level: str


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: str) -> int:
    raw = os.getenv(name, default)
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def load_config() -> Config:
    """Load configuration from environment variables and `.env`."""
    load_dotenv()

    project_root = Path(__file__).parent.parent

    seed = os.getenv("PROOFPLAN_SEED")
    seed_override = _env_int("PROOFPLAN_SEED", "0") if seed not in (None, "") else None

    compare = CompareConfig(
        seeds=_env_int("PROOFPLAN_COMPARE_SEEDS", "1"),
        workers=_env_int("PROOFPLAN_WORKERS", "1"),
        record_timing=_env_bool("PROOFPLAN_RECORD_TIMING", "true"),
    )
    if compare.seeds < 1 or compare.workers < 1:
        raise ConfigError("PROOFPLAN_COMPARE_SEEDS and PROOFPLAN_WORKERS must be >= 1")

    return Config(
        paths=PathsConfig(out_dir=Path(os.getenv("PROOFPLAN_OUT_DIR", "out"))),
        ledger=LedgerConfig(
            enabled=_env_bool("PROOFPLAN_LEDGER", "true"),
            db_path=Path(os.getenv("PROOFPLAN_DB_PATH", str(project_root / "data" / "runs.db"))),
        ),
        compare=compare,
        seed_override=seed_override,
        max_rounds=_env_int("PROOFPLAN_MAX_ROUNDS", "32"),
        log_level=os.getenv("PROOFPLAN_LOG_LEVEL", "INFO").upper(),
    )


def load_hyperparams(path: str | Path | None, seed_override: int | None = None) -> Hyperparams:
    """Read Hyperparams from a JSON object whose keys mirror the field names."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")

    unknown = sorted(set(data) - Hyperparams.field_names())
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s): {', '.join(unknown)}")

    values = {}
    for field in fields(Hyperparams):
        if field.name not in data:
            continue
        value = data[field.name]
        if field.name == "epsilon_decay_episodes" and value is None:
            values[field.name] = None
        elif field.name in ("alpha", "gamma_discount", "epsilon_start", "epsilon_end"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{field.name} must be a number, got {value!r}")
            values[field.name] = float(value)
        else:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{field.name} must be an integer, got {value!r}")
            values[field.name] = value

    hp = Hyperparams(**values)
    if seed_override is not None:
        hp = replace(hp, seed=seed_override)
    try:
        return hp.validate()
    except HyperparamError as e:
        raise ConfigError(str(e)) from e
