"""SQLite experiment ledger using aiosqlite."""

from datetime import datetime
from pathlib import Path

import aiosqlite

from .models import ExperimentRun, MethodLog, RunStatus

SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS experiment_runs (
    id TEXT PRIMARY KEY,
    command TEXT NOT NULL,
    target TEXT NOT NULL,
    started_at TEXT NOT NULL,
    finished_at TEXT,
    status TEXT NOT NULL DEFAULT 'RUNNING'
        CHECK(status IN ('RUNNING', 'COMPLETED', 'FAILED', 'UNSOLVABLE')),
    grid_digest TEXT NOT NULL DEFAULT '',
    out_dir TEXT NOT NULL DEFAULT '',
    exit_code INTEGER
);

CREATE INDEX IF NOT EXISTS idx_experiment_runs_started ON experiment_runs(started_at);

CREATE TABLE IF NOT EXISTS method_logs (
    id TEXT PRIMARY KEY,
    run_id TEXT NOT NULL,
    method TEXT NOT NULL,
    started_at TEXT NOT NULL,
    finished_at TEXT,
    status TEXT NOT NULL,
    invalid_actions INTEGER DEFAULT 0,
    plan_length INTEGER,
    wall_time_ms REAL DEFAULT 0.0,
    details TEXT DEFAULT '',
    error TEXT,
    FOREIGN KEY (run_id) REFERENCES experiment_runs(id)
);

CREATE INDEX IF NOT EXISTS idx_method_logs_run_id ON method_logs(run_id);
"""


def _dt_to_str(dt: datetime) -> str:
    return dt.isoformat()


def _str_to_dt(s: str) -> datetime:
    return datetime.fromisoformat(s)


class Database:
    def __init__(self, db_path: str | Path):
        self.db_path = str(db_path)

    async def init(self) -> None:
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        async with aiosqlite.connect(self.db_path) as db:
            await db.executescript(SCHEMA_SQL)
            await db.commit()

    # ── Runs ──

    async def save_run(self, run: ExperimentRun) -> None:
        async with aiosqlite.connect(self.db_path) as db:
            await db.execute(
                """INSERT OR REPLACE INTO experiment_runs
                   (id, command, target, started_at, finished_at, status,
                    grid_digest, out_dir, exit_code)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    run.id,
                    run.command,
                    run.target,
                    _dt_to_str(run.started_at),
                    _dt_to_str(run.finished_at) if run.finished_at else None,
                    run.status.value,
                    run.grid_digest,
                    run.out_dir,
                    run.exit_code,
                ),
            )
            await db.commit()

    async def finish_run(
        self,
        run_id: str,
        status: RunStatus,
        exit_code: int,
        grid_digest: str | None = None,
    ) -> None:
        async with aiosqlite.connect(self.db_path) as db:
            await db.execute(
                """UPDATE experiment_runs
                   SET finished_at = ?, status = ?, exit_code = ?,
                       grid_digest = COALESCE(?, grid_digest)
                   WHERE id = ?""",
                (_dt_to_str(datetime.now()), status.value, exit_code, grid_digest, run_id),
            )
            await db.commit()

    async def get_run(self, run_id: str) -> ExperimentRun | None:
        async with aiosqlite.connect(self.db_path) as db:
            db.row_factory = aiosqlite.Row
            async with db.execute("SELECT * FROM experiment_runs WHERE id = ?", (run_id,)) as cursor:
                row = await cursor.fetchone()
                if not row:
                    return None
                run = self._row_to_run(row)
            run.methods = await self._get_methods_for_run(db, run_id)
            return run

    async def get_recent_runs(self, limit: int = 20) -> list[ExperimentRun]:
        async with aiosqlite.connect(self.db_path) as db:
            db.row_factory = aiosqlite.Row
            async with db.execute(
                "SELECT * FROM experiment_runs ORDER BY started_at DESC LIMIT ?", (limit,)
            ) as cursor:
                rows = await cursor.fetchall()
            runs = [self._row_to_run(row) for row in rows]
            for run in runs:
                run.methods = await self._get_methods_for_run(db, run.id)
            return runs

    def _row_to_run(self, row: aiosqlite.Row) -> ExperimentRun:
        return ExperimentRun(
            id=row["id"],
            command=row["command"],
            target=row["target"],
            started_at=_str_to_dt(row["started_at"]),
            finished_at=_str_to_dt(row["finished_at"]) if row["finished_at"] else None,
            status=RunStatus(row["status"]),
            grid_digest=row["grid_digest"],
            out_dir=row["out_dir"],
            exit_code=row["exit_code"],
        )

    # ── Method Logs ──

    async def save_method_log(self, log: MethodLog) -> None:
        async with aiosqlite.connect(self.db_path) as db:
            await db.execute(
                """INSERT OR REPLACE INTO method_logs
                   (id, run_id, method, started_at, finished_at, status,
                    invalid_actions, plan_length, wall_time_ms, details, error)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    log.id,
                    log.run_id,
                    log.method,
                    _dt_to_str(log.started_at),
                    _dt_to_str(log.finished_at) if log.finished_at else None,
                    log.status,
                    log.invalid_actions,
                    log.plan_length,
                    log.wall_time_ms,
                    log.details,
                    log.error,
                ),
            )
            await db.commit()

    async def get_method_logs(self, run_id: str) -> list[MethodLog]:
        async with aiosqlite.connect(self.db_path) as db:
            return await self._get_methods_for_run(db, run_id)

    async def _get_methods_for_run(self, db: aiosqlite.Connection, run_id: str) -> list[MethodLog]:
        db.row_factory = aiosqlite.Row
        async with db.execute(
            "SELECT * FROM method_logs WHERE run_id = ? ORDER BY started_at ASC, method ASC",
            (run_id,),
        ) as cursor:
            rows = await cursor.fetchall()
            return [
                MethodLog(
                    id=r["id"],
                    run_id=r["run_id"],
                    method=r["method"],
                    started_at=_str_to_dt(r["started_at"]),
                    finished_at=_str_to_dt(r["finished_at"]) if r["finished_at"] else None,
                    status=r["status"],
                    invalid_actions=r["invalid_actions"],
                    plan_length=r["plan_length"],
                    wall_time_ms=r["wall_time_ms"],
                    details=r["details"],
                    error=r["error"],
                )
                for r in rows
            ]
