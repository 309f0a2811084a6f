import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from cogflow.errors import ContractError, DomainError
from cogflow.sim.plots import emit_svg_lineplot, series

SVG_NS = "{http://www.w3.org/2000/svg}"


def _series_points(path: Path, index: int) -> np.ndarray:
    root = ET.parse(path).getroot()
    group = next(node for node in root.iter(f"{SVG_NS}g") if node.get("id") == f"series-{index}")
    d = next(group.iter(f"{SVG_NS}path")).get("d")
    numbers = [float(token) for token in re.findall(r"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?", d)]
    return np.array(numbers).reshape(-1, 2)


def test_single_linear_series(tmp_path: Path) -> None:
    out = emit_svg_lineplot(
        [series("line", [0.0, 1.0, 2.0], [0.0, 1.0, 4.0])],
        tmp_path / "one.svg",
        title="one",
        xlabel="x",
        ylabel="y",
    )
    root = ET.parse(out).getroot()
    assert root.tag == f"{SVG_NS}svg"
    groups = [node.get("id") for node in root.iter(f"{SVG_NS}g")]
    assert "series-0" in groups
    assert "series-1" not in groups
    assert len(_series_points(out, 0)) == 3


def test_loglog_power_law_renders_collinear(tmp_path: Path) -> None:
    xs = np.geomspace(0.01, 1.0, 12)
    out = emit_svg_lineplot(
        [series("y = x^2", xs, xs**2)], tmp_path / "loglog.svg", xscale="log", yscale="log"
    )
    points = _series_points(out, 0)
    slope, intercept = np.polyfit(points[:, 0], points[:, 1], 1)
    residual = points[:, 1] - (slope * points[:, 0] + intercept)
    assert np.max(np.abs(residual)) < 0.05


def test_identical_input_gives_identical_bytes(tmp_path: Path) -> None:
    data = [series("a", [1.0, 2.0, 3.0], [3.0, 1.0, 2.0]), series("b", [1.0, 2.0], [1.0, 1.0])]
    first = emit_svg_lineplot(data, tmp_path / "a.svg")
    second = emit_svg_lineplot(data, tmp_path / "b.svg")
    assert first.read_bytes() == second.read_bytes()


def test_log_axis_rejects_nonpositive_data(tmp_path: Path) -> None:
    with pytest.raises(DomainError, match="bad"):
        emit_svg_lineplot([series("bad", [1.0, 2.0], [0.0, 1.0])], tmp_path / "x.svg", yscale="log")


def test_empty_series_list_is_rejected(tmp_path: Path) -> None:
    with pytest.raises(ContractError):
        emit_svg_lineplot([], tmp_path / "x.svg")
    with pytest.raises(ContractError):
        series("empty", [], [])
