"""SQLite index of CLI runs and the files they wrote."""

from __future__ import annotations

import json
import logging
import os
import sqlite3
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from cavity_subfields.export import RunManifest

logger = logging.getLogger("cavity-subfields")

DB_ENV = "CAVITY_SUBFIELDS_DB"
DEFAULT_DB_PATH = Path.home() / ".cache" / "cavity-subfields" / "runs.db"

SCHEMA_VERSION = 2

# Fresh databases get the full schema from _init_db; migrations bring older
# files up to the same schema.
MIGRATIONS: dict[int, tuple[str, callable]] = {}


def migration(version: int, name: str):
    """Decorator to register a schema migration."""

    def decorator(func: callable):
        MIGRATIONS[version] = (name, func)
        return func

    return decorator


@migration(2, "add_exit_status_and_name")
def migrate_v2(conn):
    """Record the exit status and configuration name of each run."""
    existing_cols = {row[1] for row in conn.execute("PRAGMA table_info(runs)")}
    if "exit_status" not in existing_cols:
        conn.execute("ALTER TABLE runs ADD COLUMN exit_status INTEGER DEFAULT 0")
    if "config_name" not in existing_cols:
        conn.execute("ALTER TABLE runs ADD COLUMN config_name TEXT")
    conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_config_hash ON runs(config_hash)")


@dataclass
class RunRecord:
    """One indexed run."""

    run_id: str
    command: str
    config_hash: str
    tool_version: str
    timestamp: str
    out_dir: str
    outputs: list[str] = field(default_factory=list)
    exit_status: int = 0
    config_name: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "config_hash": self.config_hash,
            "config_name": self.config_name,
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "out_dir": self.out_dir,
            "outputs": list(self.outputs),
            "exit_status": self.exit_status,
        }


class RunStore:
    """SQLite-backed run index."""

    def __init__(self, db_path: str | Path | None = None):
        if db_path is None:
            db_path = os.environ.get(DB_ENV, str(DEFAULT_DB_PATH))
        self.db_path = Path(db_path)
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._init_db()

    @contextmanager
    def _connect(self):
        """Context manager for database connections; commits on success."""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
            conn.commit()
        finally:
            conn.close()

    def execute_query(self, sql: str, params: tuple | list = ()) -> list[sqlite3.Row]:
        with self._connect() as conn:
            return conn.execute(sql, params).fetchall()

    def execute_write(self, sql: str, params: tuple | list = ()) -> int:
        with self._connect() as conn:
            return conn.execute(sql, params).rowcount

    def _get_schema_version(self, conn: sqlite3.Connection) -> int:
        try:
            row = conn.execute("SELECT MAX(version) FROM schema_version").fetchone()
            return row[0] if row and row[0] else 0
        except sqlite3.OperationalError:
            return 0

    def _run_migrations(self, conn: sqlite3.Connection, current_version: int):
        for version in range(current_version + 1, SCHEMA_VERSION + 1):
            if version in MIGRATIONS:
                name, migration_func = MIGRATIONS[version]
                logger.info(f"Running migration {version}: {name}")
                migration_func(conn)
        conn.execute("INSERT OR REPLACE INTO schema_version (version) VALUES (?)", (SCHEMA_VERSION,))

    def _init_db(self):
        with self._connect() as conn:
            current = self._get_schema_version(conn)
            conn.execute("CREATE TABLE IF NOT EXISTS schema_version (version INTEGER PRIMARY KEY)")
            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY,
                    run_id TEXT UNIQUE NOT NULL,
                    command TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    tool_version TEXT NOT NULL,
                    timestamp TEXT NOT NULL,
                    out_dir TEXT NOT NULL,
                    outputs_json TEXT NOT NULL DEFAULT '[]',
                    exit_status INTEGER DEFAULT 0,
                    config_name TEXT
                )
            """)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_timestamp ON runs(timestamp)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_config_hash ON runs(config_hash)")
            if current == 0:
                conn.execute(
                    "INSERT OR REPLACE INTO schema_version (version) VALUES (?)", (SCHEMA_VERSION,)
                )
            elif current < SCHEMA_VERSION:
                self._run_migrations(conn, current)

    def schema_version(self) -> int:
        with self._connect() as conn:
            return self._get_schema_version(conn)

    def record(self, manifest: RunManifest, out_dir: str | Path, exit_status: int = 0) -> RunRecord:
        """Index a finished run from its manifest."""
        record = RunRecord(
            run_id=uuid.uuid4().hex,
            command=manifest.command,
            config_hash=manifest.config_hash,
            tool_version=manifest.tool_version,
            timestamp=manifest.timestamp,
            out_dir=str(Path(out_dir).resolve()),
            outputs=list(manifest.outputs),
            exit_status=exit_status,
            config_name=manifest.config_name or None,
        )
        self.execute_write(
            """
            INSERT INTO runs (run_id, command, config_hash, tool_version, timestamp,
                              out_dir, outputs_json, exit_status, config_name)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """,
            (
                record.run_id,
                record.command,
                record.config_hash,
                record.tool_version,
                record.timestamp,
                record.out_dir,
                json.dumps(record.outputs),
                record.exit_status,
                record.config_name,
            ),
        )
        logger.debug(f"Indexed run {record.run_id} in {self.db_path}")
        return record

    def _row_to_record(self, row: sqlite3.Row) -> RunRecord:
        return RunRecord(
            run_id=row["run_id"],
            command=row["command"],
            config_hash=row["config_hash"],
            tool_version=row["tool_version"],
            timestamp=row["timestamp"],
            out_dir=row["out_dir"],
            outputs=json.loads(row["outputs_json"] or "[]"),
            exit_status=row["exit_status"] or 0,
            config_name=row["config_name"],
        )

    def recent_runs(self, limit: int = 20, config_hash: str | None = None) -> list[RunRecord]:
        """Most recent runs first, optionally for one configuration."""
        sql = "SELECT * FROM runs"
        params: list = []
        if config_hash:
            sql += " WHERE config_hash = ?"
            params.append(config_hash)
        sql += " ORDER BY timestamp DESC, id DESC LIMIT ?"
        params.append(limit)
        return [self._row_to_record(row) for row in self.execute_query(sql, params)]

    def run_count(self) -> int:
        return self.execute_query("SELECT COUNT(*) FROM runs")[0][0]

    def get_db_stats(self) -> dict:
        with self._connect() as conn:
            count = conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
            span = conn.execute("SELECT MIN(timestamp), MAX(timestamp) FROM runs").fetchone()
        return {
            "run_count": count,
            "earliest_run": span[0],
            "latest_run": span[1],
            "schema_version": self.schema_version(),
            "db_size_bytes": self.db_path.stat().st_size if self.db_path.exists() else 0,
            "db_path": str(self.db_path),
        }
