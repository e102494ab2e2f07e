import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiosqlite

import config
from models.schemas import EpisodeEntry, LogEntry

logger = logging.getLogger(__name__)


class Ledger:
    """Run ledger: which command ran with what seed, what it wrote, where each episode trace lives."""

    def __init__(self, db_path: str = config.LEDGER_PATH):
        self.db_path = db_path

    async def init_db(self):
        """Create tables if they don't exist."""
        try:
            parent = Path(str(self.db_path)).parent
            if str(parent) not in ("", "."):
                parent.mkdir(parents=True, exist_ok=True)
        except Exception as e:
            logger.warning(f"Could not ensure ledger directory exists for {self.db_path}: {e}")

        async with aiosqlite.connect(self.db_path) as db:
            await db.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    seed INTEGER,
                    config TEXT,
                    status TEXT DEFAULT 'running',
                    manifest_hash TEXT,
                    error TEXT,
                    started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    finished_at TIMESTAMP
                )
            """)

            await db.execute("""
                CREATE TABLE IF NOT EXISTS artifacts (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    path TEXT NOT NULL,
                    sha256 TEXT,
                    kind TEXT,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                )
            """)

            await db.execute("""
                CREATE TABLE IF NOT EXISTS episodes (
                    episode_id TEXT PRIMARY KEY,
                    run_id INTEGER NOT NULL,
                    method TEXT,
                    object_id TEXT,
                    world_seed INTEGER,
                    search_seed INTEGER,
                    checkpoint TEXT,
                    calibration TEXT,
                    search TEXT,
                    trace_file TEXT,
                    line INTEGER,
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                )
            """)

            await db.execute("""
                CREATE TABLE IF NOT EXISTS logs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER,
                    level TEXT,
                    event TEXT,
                    details TEXT,
                    timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)

            await db.execute("CREATE INDEX IF NOT EXISTS idx_artifacts_run ON artifacts (run_id)")
            await db.commit()

    # ===== Runs =====

    async def start_run(self, command: str, seed: int, run_config: Optional[Dict[str, Any]] = None) -> Optional[int]:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                cursor = await db.execute(
                    "INSERT INTO runs (command, seed, config, started_at) VALUES (?, ?, ?, ?)",
                    (command, seed, json.dumps(run_config or {}, sort_keys=True, default=str), datetime.now().isoformat()),
                )
                await db.commit()
                return cursor.lastrowid
        except Exception as e:
            logger.error(f"Error starting run '{command}': {e}")
            return None

    async def finish_run(self, run_id: int, status: str, manifest_hash: Optional[str] = None, error: Optional[str] = None) -> bool:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                await db.execute(
                    "UPDATE runs SET status = ?, manifest_hash = ?, error = ?, finished_at = ? WHERE id = ?",
                    (status, manifest_hash, error, datetime.now().isoformat(), run_id),
                )
                await db.commit()
                return True
        except Exception as e:
            logger.error(f"Error finishing run {run_id}: {e}")
            return False

    async def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                async with db.execute("SELECT * FROM runs WHERE id = ?", (run_id,)) as cursor:
                    row = await cursor.fetchone()
                    if not row:
                        return None
                    run = dict(row)
                    run["config"] = json.loads(run["config"] or "{}")
                    return run
        except Exception as e:
            logger.error(f"Error getting run {run_id}: {e}")
            return None

    # ===== Artifacts =====

    async def add_artifact(self, run_id: int, path: str, sha256: str, kind: str = "") -> bool:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                await db.execute(
                    "INSERT INTO artifacts (run_id, path, sha256, kind) VALUES (?, ?, ?, ?)",
                    (run_id, path, sha256, kind),
                )
                await db.commit()
                return True
        except Exception as e:
            logger.error(f"Error adding artifact {path}: {e}")
            return False

    async def get_artifacts(self, run_id: int) -> List[Dict[str, Any]]:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                async with db.execute("SELECT * FROM artifacts WHERE run_id = ? ORDER BY path", (run_id,)) as cursor:
                    rows = await cursor.fetchall()
                    return [dict(row) for row in rows]
        except Exception as e:
            logger.error(f"Error getting artifacts for run {run_id}: {e}")
            return []

    # ===== Episodes =====

    async def add_episodes(self, entries: List[EpisodeEntry]) -> bool:
        """Index episode traces; re-running an episode id points it at the newest trace."""
        if not entries:
            return True
        try:
            async with aiosqlite.connect(self.db_path) as db:
                await db.executemany(
                    """
                    INSERT OR REPLACE INTO episodes
                    (episode_id, run_id, method, object_id, world_seed, search_seed,
                     checkpoint, calibration, search, trace_file, line)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                    """,
                    [
                        (
                            e.episode_id,
                            e.run_id,
                            e.method,
                            e.object_id,
                            e.world_seed,
                            e.search_seed,
                            e.checkpoint,
                            e.calibration,
                            json.dumps(e.search, sort_keys=True),
                            e.trace_file,
                            e.line,
                        )
                        for e in entries
                    ],
                )
                await db.commit()
                return True
        except Exception as e:
            logger.error(f"Error indexing {len(entries)} episodes: {e}")
            return False

    async def add_episode(self, entry: EpisodeEntry) -> bool:
        return await self.add_episodes([entry])

    async def get_episode(self, episode_id: str) -> Optional[EpisodeEntry]:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                async with db.execute("SELECT * FROM episodes WHERE episode_id = ?", (episode_id,)) as cursor:
                    row = await cursor.fetchone()
                    if not row:
                        return None
                    data = dict(row)
                    data["search"] = json.loads(data["search"] or "{}")
                    return EpisodeEntry(**data)
        except Exception as e:
            logger.error(f"Error getting episode {episode_id}: {e}")
            return None

    async def count_episodes(self, run_id: Optional[int] = None) -> int:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                if run_id is None:
                    query, params = "SELECT COUNT(*) FROM episodes", ()
                else:
                    query, params = "SELECT COUNT(*) FROM episodes WHERE run_id = ?", (run_id,)
                async with db.execute(query, params) as cursor:
                    row = await cursor.fetchone()
                    return int(row[0]) if row else 0
        except Exception as e:
            logger.error(f"Error counting episodes: {e}")
            return 0

    # ===== Logs =====

    async def add_log(self, log: LogEntry) -> bool:
        try:
            async with aiosqlite.connect(self.db_path) as db:
                await db.execute(
                    "INSERT INTO logs (run_id, level, event, details, timestamp) VALUES (?, ?, ?, ?, ?)",
                    (log.run_id, log.level, log.event, log.details, log.timestamp or datetime.now().isoformat()),
                )
                await db.commit()
                return True
        except Exception as e:
            logger.error(f"Error adding log: {e}")
            return False

    async def get_logs(self, run_id: Optional[int] = None, limit: int = 100) -> List[LogEntry]:
        """Get journal entries, newest first, optionally for one run."""
        try:
            async with aiosqlite.connect(self.db_path) as db:
                db.row_factory = aiosqlite.Row
                if run_id is not None:
                    query = "SELECT * FROM logs WHERE run_id = ? ORDER BY id DESC LIMIT ?"
                    params = (run_id, limit)
                else:
                    query = "SELECT * FROM logs ORDER BY id DESC LIMIT ?"
                    params = (limit,)
                async with db.execute(query, params) as cursor:
                    rows = await cursor.fetchall()
                    return [
                        LogEntry(
                            run_id=row["run_id"],
                            level=row["level"],
                            event=row["event"],
                            details=row["details"],
                            timestamp=str(row["timestamp"]) if row["timestamp"] is not None else None,
                        )
                        for row in rows
                    ]
        except Exception as e:
            logger.error(f"Error getting logs: {e}")
            return []

    async def close(self):
        """Connections are per-call; nothing to release."""
        pass


# Global ledger instance
ledger = Ledger()
