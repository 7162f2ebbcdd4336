"""
SQLite store for sweep points.
A sweep is identified by a fingerprint of its spec; rerunning it skips stored points.
"""
import json
import logging
import sqlite3
from contextlib import contextmanager
from typing import Dict, List, Optional

from .config import settings

logger = logging.getLogger(__name__)


def init_db(db_path: Optional[str] = None):
    """Create the sweeps and points tables if missing."""
    with get_db(db_path) as conn:
        conn.execute("""
            CREATE TABLE IF NOT EXISTS sweeps (
                fingerprint TEXT PRIMARY KEY,
                name TEXT NOT NULL,
                spec TEXT NOT NULL,
                created_at TEXT DEFAULT CURRENT_TIMESTAMP
            )
        """)

        conn.execute("""
            CREATE TABLE IF NOT EXISTS points (
                fingerprint TEXT NOT NULL,
                idx INTEGER NOT NULL,
                params TEXT NOT NULL,
                result TEXT NOT NULL,
                error TEXT,
                wall_time_s REAL,
                created_at TEXT DEFAULT CURRENT_TIMESTAMP,
                PRIMARY KEY (fingerprint, idx),
                FOREIGN KEY (fingerprint) REFERENCES sweeps(fingerprint)
            )
        """)
        conn.commit()


@contextmanager
def get_db(db_path: Optional[str] = None):
    """sqlite connection with dict-like rows, closed on exit."""
    conn = sqlite3.connect(db_path or settings.db_path)
    conn.row_factory = sqlite3.Row
    try:
        yield conn
    finally:
        conn.close()


def register_sweep(fingerprint: str, name: str, spec: Dict, db_path: Optional[str] = None):
    with get_db(db_path) as conn:
        conn.execute(
            "INSERT OR IGNORE INTO sweeps (fingerprint, name, spec) VALUES (?, ?, ?)",
            (fingerprint, name, json.dumps(spec, sort_keys=True)),
        )
        conn.commit()


def get_points(fingerprint: str, db_path: Optional[str] = None) -> Dict[int, Dict]:
    """Stored points of a sweep, keyed by index."""
    with get_db(db_path) as conn:
        rows = conn.execute(
            "SELECT * FROM points WHERE fingerprint = ? ORDER BY idx",
            (fingerprint,),
        ).fetchall()
    return {
        row["idx"]: {
            "params": json.loads(row["params"]),
            "result": json.loads(row["result"]),
            "error": row["error"],
            "wall_time_s": row["wall_time_s"],
        }
        for row in rows
    }


def save_point(
    fingerprint: str,
    idx: int,
    params: Dict,
    result: Dict,
    error: Optional[str] = None,
    wall_time_s: Optional[float] = None,
    db_path: Optional[str] = None,
):
    with get_db(db_path) as conn:
        conn.execute("""
            INSERT OR REPLACE INTO points (fingerprint, idx, params, result, error, wall_time_s)
            VALUES (?, ?, ?, ?, ?, ?)
        """, (fingerprint, idx, json.dumps(params, sort_keys=True), json.dumps(result, sort_keys=True), error, wall_time_s))
        conn.commit()
    logger.debug(f"Stored point {idx} of sweep {fingerprint[:12]}")


def list_sweeps(db_path: Optional[str] = None) -> List[Dict]:
    with get_db(db_path) as conn:
        rows = conn.execute("""
            SELECT s.fingerprint, s.name, s.created_at, COUNT(p.idx) AS points
            FROM sweeps s LEFT JOIN points p ON p.fingerprint = s.fingerprint
            GROUP BY s.fingerprint ORDER BY s.created_at DESC
        """).fetchall()
        return [dict(row) for row in rows]
