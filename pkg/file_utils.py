import errno
import hashlib
import json
import time
from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

CHUNK_SIZE = 4 * 1024 * 1024                 # 4MB


def sha256_file(filepath: Path) -> tuple[str, int]:
    """Hash a file using SHA256 with retries for transient IO errors."""
    max_retries = 3
    for attempt in range(max_retries):
        try:
            sha256 = hashlib.sha256()
            size = 0
            with open(filepath, "rb") as f:
                for chunk in iter(lambda: f.read(CHUNK_SIZE), b""):
                    sha256.update(chunk)
                    size += len(chunk)
            return sha256.hexdigest(), size
        except OSError as e:
            if e.errno == errno.EIO and attempt < max_retries - 1:
                time.sleep(0.5 * (attempt + 1))
                continue
            raise


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_json(path: Path, payload) -> Path:
    """Write JSON with sorted keys and a trailing newline (stable bytes)."""
    path = Path(path)
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text.rstrip("\n") + "\n")
    return path


def write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> Path:
    path = Path(path)
    frame.to_csv(path, index=index, float_format="%.17g", lineterminator="\n")
    return path


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.write_text(text.rstrip("\n") + "\n")
    return path


def hash_files(paths: Iterable[Path], relative_to: Optional[Path] = None) -> dict[str, str]:
    """{path: sha256} for every existing file, keys relative when possible."""
    out = {}
    for p in sorted(set(Path(x) for x in paths)):
        if not p.is_file():
            continue
        key = str(p)
        if relative_to is not None:
            try:
                key = str(p.resolve().relative_to(Path(relative_to).resolve()))
            except ValueError:
                pass
        out[key] = sha256_file(p)[0]
    return out


def build_manifest(
    subcommand: str,
    argv: list[str],
    config: dict,
    inputs: Iterable[Path],
    outputs: Iterable[Path],
    out_dir: Path,
    version: str,
) -> dict:
    """Everything needed to re-run a command and check its outputs.

    No timestamps: two identical runs produce identical manifests.
    """
    return {
        "tool": "dynlab",
        "version": version,
        "subcommand": subcommand,
        "argv": list(argv),
        "config": config,
        "config_sha256": sha256_text(json.dumps(config, sort_keys=True)),
        "inputs": hash_files(inputs),
        "outputs": hash_files(outputs, relative_to=out_dir),
    }


def read_manifest(path: Path) -> dict:
    path = Path(path)
    with open(path, "r") as f:
        manifest = json.load(f)
    if "argv" not in manifest or "subcommand" not in manifest:
        raise ValueError(f"{path} is not a run manifest")
    return manifest
