"""Migration 001: run ledger (one row per CLI invocation)."""
import sqlite3


def up(conn: sqlite3.Connection):
    c = conn.cursor()

    c.execute('''
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            started_at TEXT NOT NULL,
            subcommand TEXT NOT NULL,
            argv TEXT NOT NULL,
            out_dir TEXT,
            exit_code INTEGER NOT NULL,
            manifest_sha256 TEXT,
            message TEXT
        )
    ''')

    c.execute('CREATE INDEX IF NOT EXISTS idx_runs_subcommand ON runs(subcommand)')
    c.execute('CREATE INDEX IF NOT EXISTS idx_runs_manifest ON runs(manifest_sha256)')
