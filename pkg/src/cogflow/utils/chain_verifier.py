"""Hash-chain checks for the append-only run ledger.

Each entry stores ``prev_hash`` (the digest of the entry before it, or ``GENESIS_HASH``)
and ``sha256`` (the digest of its own canonical JSON without that field).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List

from cogflow.errors import CogflowError

GENESIS_HASH = "0" * 64
DIGEST_FIELD = "sha256"

Entry = Dict[str, Any]


class TamperDetectedError(CogflowError, RuntimeError):
    """A ledger entry no longer links to its predecessor or to its own digest."""

    def __init__(self, message: str, *, seq: int | None = None) -> None:
        super().__init__(message)
        self.seq = seq


def canonical_serialize(entry: Entry) -> str:
    return json.dumps(entry, sort_keys=True, separators=(",", ":"))


def entry_hash(entry: Entry) -> str:
    body = dict(entry)
    body.pop(DIGEST_FIELD, None)
    return hashlib.sha256(canonical_serialize(body).encode("utf-8")).hexdigest()


def _check_entry(position: int, entry: Any, expected_prev: str) -> str:
    if not isinstance(entry, dict):
        raise TamperDetectedError(f"ledger entry {position} is not an object", seq=position)
    problems = []
    if entry.get("seq") != position:
        problems.append(f"seq {entry.get('seq')!r}")
    if entry.get("prev_hash") != expected_prev:
        problems.append("broken prev_hash link")
    digest = str(entry.get(DIGEST_FIELD) or "")
    if digest != entry_hash(entry):
        problems.append("digest mismatch")
    if problems:
        raise TamperDetectedError(f"ledger entry {position}: {', '.join(problems)}", seq=position)
    return digest


def verify_chain(entries: Iterable[Entry]) -> int:
    """Walk the chain from the genesis hash; returns the number of entries checked."""
    link = GENESIS_HASH
    checked = 0
    for checked, entry in enumerate(entries, start=1):
        link = _check_entry(checked, entry, link)
    return checked


def read_entries(path: str | Path) -> List[Entry]:
    ledger = Path(path)
    try:
        lines = ledger.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise TamperDetectedError(f"ledger {ledger} is missing") from exc
    entries: List[Entry] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entries.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TamperDetectedError(f"ledger {ledger.name} line {number} is not JSON") from exc
    return entries


def verify_chain_file(path: str | Path) -> int:
    return verify_chain(read_entries(path))
