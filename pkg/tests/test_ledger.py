"""Tests for the run ledger migrations and run manifests."""
import sqlite3

import pytest

import dynlab
from file_utils import build_manifest, hash_files, read_manifest, sha256_file, write_json
from migrations.runner import available_migrations, run_migrations


def test_migrations_apply_once(tmp_path):
    conn = sqlite3.connect(tmp_path / "ledger.db")
    try:
        first = run_migrations(conn)
        assert first == [p.stem for p in available_migrations()]
        assert run_migrations(conn) == []
        columns = [row[1] for row in conn.execute("PRAGMA table_info(runs)")]
        assert columns[:3] == ["id", "started_at", "subcommand"]
    finally:
        conn.close()


def test_failing_migration_is_not_stamped(tmp_path):
    (tmp_path / "001_broken.py").write_text(
        "def up(conn):\n    conn.execute('CREATE TABLE t (x)')\n    conn.execute('NOT SQL')\n"
    )
    conn = sqlite3.connect(":memory:")
    try:
        with pytest.raises(sqlite3.Error):
            run_migrations(conn, tmp_path)
        assert conn.execute("SELECT COUNT(*) FROM schema_migrations").fetchone()[0] == 0
    finally:
        conn.close()


def test_record_and_list_runs(ledger_dir):
    dynlab.record_run("fit", ["fit", "--panel", "p.csv"], None, 2, None, "missing column")
    dynlab.record_run("simulate", ["simulate"], ledger_dir, 0, "abc")
    rows = dynlab.list_runs()
    assert [(r[2], r[3]) for r in rows] == [("simulate", 0), ("fit", 2)]
    assert (ledger_dir / dynlab.DB_NAME).is_file()


def test_manifest_is_stable(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    table = write_json(out / "table.json", {"b": 1, "a": [1, 2]})
    assert table.read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    kwargs = dict(subcommand="fit", argv=["fit"], config={"seed": 1}, inputs=[], outputs=[table],
                  out_dir=out, version="0")
    assert build_manifest(**kwargs) == build_manifest(**kwargs)
    manifest = build_manifest(**kwargs)
    assert manifest["outputs"] == {"table.json": sha256_file(table)[0]}
    assert hash_files([tmp_path / "absent.csv"]) == {}


def test_read_manifest_rejects_other_json(tmp_path):
    path = write_json(tmp_path / "other.json", {"seed": 1})
    with pytest.raises(ValueError):
        read_manifest(path)
