from __future__ import annotations

import hashlib
from importlib import metadata
from pathlib import Path
from typing import Iterable

DEV_VERSION = "0.0.0-dev"


def get_version() -> str:
    try:
        return metadata.version("cogflow")
    except metadata.PackageNotFoundError:
        return DEV_VERSION


def _iter_py_files(root: Path) -> Iterable[Path]:
    for path in sorted(root.rglob("*.py")):
        if "__pycache__" in path.parts:
            continue
        yield path


def code_fingerprint(root: Path | None = None) -> str:
    """Hash package sources by relative path and bytes, for run provenance."""
    package_root = root or Path(__file__).resolve().parent
    digest = hashlib.sha256()
    for path in _iter_py_files(package_root):
        digest.update(path.relative_to(package_root).as_posix().encode("utf-8"))
        digest.update(b"\n")
        digest.update(path.read_bytes())
        digest.update(b"\n")
    return digest.hexdigest()
