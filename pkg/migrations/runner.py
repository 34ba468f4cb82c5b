"""Migration runner for the run ledger.

Migration modules are named ``NNN_description.py`` and expose
``up(conn: sqlite3.Connection) -> None``. Applied versions are stamped in
``schema_migrations``; a migration that raises is rolled back and left
unstamped, so the next invocation retries it.
"""
import importlib.util
import logging
import sqlite3
from pathlib import Path

MIGRATIONS_DIR = Path(__file__).parent

logger = logging.getLogger(__name__)


def available_migrations(directory: Path = MIGRATIONS_DIR) -> list[Path]:
    return sorted(directory.glob("[0-9][0-9][0-9]_*.py"))


def applied_versions(conn: sqlite3.Connection) -> set[str]:
    conn.execute('''
        CREATE TABLE IF NOT EXISTS schema_migrations (
            version     TEXT PRIMARY KEY,
            applied_at  TEXT NOT NULL DEFAULT (datetime('now'))
        )
    ''')
    conn.commit()
    return {row[0] for row in conn.execute("SELECT version FROM schema_migrations")}


def _load(path: Path):
    spec = importlib.util.spec_from_file_location(f"migration_{path.stem}", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    if not callable(getattr(module, "up", None)):
        raise RuntimeError(f"migration {path.name} has no up(conn)")
    return module


def run_migrations(conn: sqlite3.Connection, directory: Path = MIGRATIONS_DIR) -> list[str]:
    """Apply pending migrations in numeric order; returns the versions applied."""
    done = applied_versions(conn)
    applied = []
    for path in available_migrations(directory):
        if path.stem in done:
            continue
        module = _load(path)
        logger.info("Applying ledger migration %s", path.stem)
        try:
            module.up(conn)
            conn.execute("INSERT INTO schema_migrations (version) VALUES (?)", (path.stem,))
            conn.commit()
        except sqlite3.Error:
            conn.rollback()
            raise
        applied.append(path.stem)
    return applied
