import json
from pathlib import Path

import pytest

from cogflow import RunLedger
from cogflow.utils.chain_verifier import (
    GENESIS_HASH,
    TamperDetectedError,
    verify_chain,
    verify_chain_file,
)


def test_record_writes_chained_digest_and_payload(tmp_path: Path) -> None:
    ledger = RunLedger(tmp_path / "run_ledger.jsonl")
    entry = ledger.record("run_started", {"config_sha256": "abc"})

    lines = (tmp_path / "run_ledger.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    stored = json.loads(lines[0])
    assert stored == entry
    assert stored["seq"] == 1
    assert stored["prev_hash"] == GENESIS_HASH
    assert "ts" not in stored


def test_verify_chain_detects_tampering_and_truncation(tmp_path: Path) -> None:
    path = tmp_path / "run_ledger.jsonl"
    ledger = RunLedger(path)
    ledger.record("experiment_completed", {"experiment": "scaling"})
    ledger.record("run_finished", {"exit_code": 0})
    assert ledger.verify_chain() == 2

    lines = path.read_text(encoding="utf-8").splitlines()
    tampered = json.loads(lines[1])
    tampered["payload"] = {"exit_code": 1}
    lines[1] = json.dumps(tampered)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(TamperDetectedError):
        ledger.verify_chain()

    with pytest.raises(TamperDetectedError):
        verify_chain([json.loads(lines[0])] * 2)


def test_ledger_resumes_and_fresh_restarts(tmp_path: Path) -> None:
    path = tmp_path / "run_ledger.jsonl"
    RunLedger(path).record("run_started", {})
    resumed = RunLedger(path)
    assert resumed.record("run_finished", {})["seq"] == 2
    assert verify_chain_file(path) == 2

    fresh = RunLedger.fresh(path)
    assert fresh.record("run_started", {})["seq"] == 1
    assert verify_chain_file(path) == 1


def test_identical_records_give_identical_ledgers(tmp_path: Path) -> None:
    for name in ("a.jsonl", "b.jsonl"):
        ledger = RunLedger(tmp_path / name)
        for index in range(50):
            ledger.record("tick", {"index": index})
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
