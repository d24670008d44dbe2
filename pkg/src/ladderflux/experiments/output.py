"""Run manifests and output files.

All outputs are rendered to text before anything touches the disk, so the
manifest (with per-file checksums) can be written first.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any

from .scenarios import ScenarioResult

MANIFEST_NAME = "manifest.json"


class OutputError(OSError):
    def __init__(self, path: Path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def write_manifest(out_dir: Path, manifest: dict[str, Any]) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    _write(path, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def emit_outputs(result: ScenarioResult, manifest: dict[str, Any], out_dir: Path) -> list[Path]:
    """Write the manifest, then every result file; returns the written paths."""
    out_dir = Path(out_dir)
    manifest = dict(manifest)
    manifest["outputs"] = {name: sha256_text(text) for name, text in result.files.items()}
    manifest["summary"] = result.summary
    manifest["geometry"] = result.geometry
    written = [write_manifest(out_dir, manifest)]
    for name, text in result.files.items():
        target = (out_dir / name).resolve()
        if out_dir.resolve() not in target.parents:
            raise OutputError(target, "output name escapes the output directory")
        _write(target, text)
        written.append(target)
    return written


def verify_outputs(out_dir: Path) -> dict[str, bool]:
    """Compare files on disk with the checksums in the manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
    ok = {}
    for name, digest in manifest.get("outputs", {}).items():
        p = out_dir / name
        ok[name] = p.is_file() and sha256_text(p.read_text(encoding="utf-8")) == digest
    return ok
