"""Data models for the experiment run ledger."""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum


class RunStatus(str, Enum):
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    UNSOLVABLE = "UNSOLVABLE"


@dataclass
class MethodLog:
    id: str
    run_id: str
    method: str
    started_at: datetime
    finished_at: datetime | None
    status: str
    invalid_actions: int = 0
    plan_length: int | None = None
    wall_time_ms: float = 0.0
    details: str = ""
    error: str | None = None


@dataclass
class ExperimentRun:
    id: str
    command: str
    target: str
    started_at: datetime
    finished_at: datetime | None
    status: RunStatus
    grid_digest: str = ""
    out_dir: str = ""
    exit_code: int | None = None
    methods: list[MethodLog] = field(default_factory=list)

    def short_id(self) -> str:
        return self.id[:8]
