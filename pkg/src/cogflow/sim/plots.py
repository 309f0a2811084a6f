from __future__ import annotations

from pathlib import Path
from typing import Literal, NamedTuple, Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from numpy.typing import ArrayLike

from cogflow.core.models import FloatArray
from cogflow.errors import ContractError, DomainError

AxisScale = Literal["linear", "log"]

# fixed salt and no timestamp keep the SVG byte-identical across runs
SVG_RC = {"svg.hashsalt": "cogflow", "svg.fonttype": "none", "path.simplify": False}


class Series(NamedTuple):
    label: str
    x: FloatArray
    y: FloatArray


def series(label: str, x: ArrayLike, y: ArrayLike) -> Series:
    xs = np.asarray(x, dtype=float).reshape(-1)
    ys = np.asarray(y, dtype=float).reshape(-1)
    if xs.size != ys.size:
        raise ContractError(f"series {label!r}: x and y differ in length ({xs.size} vs {ys.size})")
    if xs.size == 0:
        raise ContractError(f"series {label!r} is empty")
    return Series(label, xs, ys)


def _check_scale(data: Sequence[Series], axis: str, scale: AxisScale) -> None:
    if scale not in ("linear", "log"):
        raise ContractError(f"unsupported {axis} axis scale: {scale!r}")
    if scale != "log":
        return
    for item in data:
        values = item.x if axis == "x" else item.y
        if np.any(~(values > 0)):
            raise DomainError(f"series {item.label!r} has nonpositive {axis} values on a log axis")


def emit_svg_lineplot(
    data: Sequence[Series],
    path: str | Path,
    *,
    xscale: AxisScale = "linear",
    yscale: AxisScale = "linear",
    title: str | None = None,
    xlabel: str | None = None,
    ylabel: str | None = None,
) -> Path:
    """Write a line chart with axes, ticks and a legend. Line i carries gid ``series-i``."""
    if not data:
        raise ContractError("emit_svg_lineplot needs at least one series")
    _check_scale(data, "x", xscale)
    _check_scale(data, "y", yscale)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        figure = Figure(figsize=(6.4, 4.8))
        axes = figure.add_subplot()
        for index, item in enumerate(data):
            (line,) = axes.plot(item.x, item.y, label=item.label)
            line.set_gid(f"series-{index}")
        axes.set_xscale(xscale)
        axes.set_yscale(yscale)
        if title:
            axes.set_title(title)
        if xlabel:
            axes.set_xlabel(xlabel)
        if ylabel:
            axes.set_ylabel(ylabel)
        axes.grid(True, which="major", linewidth=0.4)
        axes.legend(loc="best")
        figure.savefig(target, format="svg", metadata={"Date": None})
    return target
