from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

from cogflow.utils.chain_verifier import GENESIS_HASH, entry_hash, read_entries, verify_chain_file

LEDGER_NAME = "run_ledger.jsonl"


class RunLedger:
    """Append-only, hash-chained record of one harness run.

    Entries are numbered instead of timestamped so two identical runs write identical
    ledgers.
    """

    def __init__(self, path: str | Path = LEDGER_NAME) -> None:
        self.path = Path(path)
        self._seq = 0
        self._last_hash = GENESIS_HASH
        if self.path.exists():
            entries = read_entries(self.path)
            if entries:
                self._seq = int(entries[-1].get("seq", len(entries)))
                self._last_hash = str(entries[-1].get("sha256") or GENESIS_HASH)

    @classmethod
    def fresh(cls, path: str | Path) -> "RunLedger":
        """Start a new ledger, discarding one left by an earlier run in the same directory."""
        target = Path(path)
        if target.exists():
            target.unlink()
        return cls(target)

    def record(self, event: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        self._seq += 1
        entry: Dict[str, Any] = {
            "seq": self._seq,
            "event": event,
            "payload": payload,
            "prev_hash": self._last_hash,
        }
        entry["sha256"] = entry_hash(entry)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")
        self._last_hash = entry["sha256"]
        return entry

    def verify_chain(self) -> int:
        """Verify the on-disk chain; raises TamperDetectedError on any break."""
        return verify_chain_file(self.path)
