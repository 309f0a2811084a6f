"""CSV artifacts, verdict records and hashing helpers for experiment outputs."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from cogflow.core.models import Trajectory
from cogflow.errors import ContractError

VERDICT_HEADER = ("criterion", "observed", "bound", "pass")
FAILED_MARKER = "FAILED"

_RANGE = re.compile(r"^(?P<lo>[^<>=]+)<=x<=(?P<hi>[^<>=]+)$")
_SINGLE = re.compile(r"^(?P<op>>=|<=|==|>|<)(?P<value>[^<>=]+)$")


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return "nan"
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        return f"{number:.17g}"
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])
    return target


def trajectory_header(dimension: int) -> List[str]:
    return (
        ["t"]
        + [f"eta_{index}" for index in range(1, dimension + 1)]
        + ["J"]
        + [f"v_{index}" for index in range(1, dimension + 1)]
    )


def write_trajectory_csv(path: str | Path, trajectory: Trajectory) -> Path:
    rows = (
        [trajectory.times[i], *trajectory.states[i], trajectory.potential_values[i], *trajectory.velocities[i]]
        for i in range(len(trajectory))
    )
    return write_csv(path, trajectory_header(trajectory.dimension), rows)


def bound_number(value: float) -> str:
    return repr(float(value))


def range_bound(low: float, high: float) -> str:
    return f"{bound_number(low)}<=x<={bound_number(high)}"


def evaluate_bound(observed: float | None, bound: str) -> bool:
    """Single pass/fail rule for every verdict criterion. NaN or missing never passes."""
    if observed is None:
        return False
    value = float(observed)
    if math.isnan(value):
        return False
    text = bound.replace(" ", "")
    match = _RANGE.match(text)
    if match:
        return float(match["lo"]) <= value <= float(match["hi"])
    match = _SINGLE.match(text)
    if match is None:
        raise ContractError(f"unrecognised verdict bound: {bound!r}")
    limit = float(match["value"])
    op = match["op"]
    if op == ">=":
        return value >= limit
    if op == "<=":
        return value <= limit
    if op == ">":
        return value > limit
    if op == "<":
        return value < limit
    return value == limit


@dataclass(frozen=True)
class Criterion:
    name: str
    observed: float | None
    bound: str

    @property
    def passed(self) -> bool:
        return evaluate_bound(self.observed, self.bound)

    def as_row(self) -> List[str]:
        return [self.name, format_cell(self.observed), self.bound, format_cell(self.passed)]


def write_verdict_csv(path: str | Path, criteria: Sequence[Criterion]) -> Path:
    return write_csv(path, VERDICT_HEADER, (criterion.as_row() for criterion in criteria))


def _parse_observed(text: str) -> float | None:
    if text == "":
        return None
    return float(text)


def read_verdict_csv(path: str | Path) -> List[tuple[Criterion, bool]]:
    """Criteria plus the recorded pass flag, in file order."""
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None or tuple(header) != VERDICT_HEADER:
            raise ContractError(f"{path}: not a verdict file (header {header!r})")
        records = []
        for row in reader:
            if not row:
                continue
            name, observed, bound, recorded = row
            records.append((Criterion(name, _parse_observed(observed), bound), recorded == "true"))
    return records


def reverify_verdict_csv(path: str | Path) -> List[Criterion]:
    """Recompute pass/fail from observed values and bounds; the stored flags must agree."""
    criteria = []
    for criterion, recorded in read_verdict_csv(path):
        if criterion.passed != recorded:
            raise ContractError(
                f"{path}: criterion {criterion.name!r} recorded pass={recorded} "
                f"but re-evaluates to {criterion.passed}"
            )
        criteria.append(criterion)
    return criteria


def write_failed_marker(output_dir: str | Path, reason: str) -> Path:
    marker = Path(output_dir) / FAILED_MARKER
    marker.parent.mkdir(parents=True, exist_ok=True)
    marker.write_text(reason.rstrip("\n") + "\n", encoding="utf-8")
    return marker


def canonical_json_bytes(payload: Dict[str, Any]) -> bytes:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return text.encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_hex(Path(path).read_bytes())
