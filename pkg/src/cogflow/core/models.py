from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cogflow.errors import ConfigError, ContractError, DimensionError

FloatArray = NDArray[np.float64]

DEFAULT_DT = 0.01
DEFAULT_T_END = 20.0
DEFAULT_SOLVER_TOL = 1e-10

PerturbationTarget = Literal["fast", "slow", "full"]
PERTURBATION_TARGETS: tuple[str, ...] = ("fast", "slow", "full")


def as_vector(values: ArrayLike, *, name: str = "vector") -> FloatArray:
    """Copy ``values`` into a flat float64 array."""
    vector = np.array(values, dtype=float).reshape(-1)
    if vector.size == 0:
        raise DimensionError(f"{name} must not be empty")
    return vector


def _frozen(array: FloatArray) -> FloatArray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Partition:
    """Split of an n-dimensional state into m fast and k slow coordinates."""

    m: int
    k: int

    def __post_init__(self) -> None:
        for label, value in (("m", self.m), ("k", self.k)):
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise DimensionError(f"partition {label} must be a positive integer, got {value!r}")

    @property
    def n(self) -> int:
        return self.m + self.k

    def check(self, n: int) -> None:
        if n != self.n:
            raise DimensionError(f"partition expects dimension {self.n}, got {n}")

    def fast(self, coords: ArrayLike) -> FloatArray:
        return np.asarray(coords, dtype=float)[..., : self.m]

    def slow(self, coords: ArrayLike) -> FloatArray:
        return np.asarray(coords, dtype=float)[..., self.m : self.n]

    def join(self, h: ArrayLike, c: ArrayLike) -> FloatArray:
        fast = np.asarray(h, dtype=float).reshape(-1)
        slow = np.asarray(c, dtype=float).reshape(-1)
        if fast.size != self.m or slow.size != self.k:
            raise DimensionError(
                f"expected fast block of {self.m} and slow block of {self.k}, "
                f"got {fast.size} and {slow.size}"
            )
        return np.concatenate((fast, slow))


@dataclass(frozen=True, eq=False)
class State:
    coords: FloatArray
    time: float = 0.0
    partition: Partition | None = None

    def __post_init__(self) -> None:
        coords = as_vector(self.coords, name="state")
        if not np.all(np.isfinite(coords)):
            raise ContractError(f"state coordinates must be finite, got {coords.tolist()}")
        if self.partition is not None:
            self.partition.check(coords.size)
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "time", float(self.time))

    @property
    def dimension(self) -> int:
        return int(self.coords.size)

    def _require_partition(self) -> Partition:
        if self.partition is None:
            raise ContractError("state has no fast/slow partition attached")
        return self.partition

    @property
    def fast(self) -> FloatArray:
        return self._require_partition().fast(self.coords)

    @property
    def slow(self) -> FloatArray:
        return self._require_partition().slow(self.coords)

    def evolve(self, coords: ArrayLike, time: float) -> "State":
        return State(np.asarray(coords, dtype=float), time, self.partition)

    def as_dict(self) -> Dict[str, Any]:
        return {"coords": self.coords.tolist(), "time": self.time}


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Instantaneous kick added to the state at the first grid time >= t_kick."""

    t_kick: float
    delta: FloatArray
    target: PerturbationTarget = "fast"

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_kick) or self.t_kick < 0:
            raise ConfigError(f"t_kick must be a finite time >= 0, got {self.t_kick!r}")
        if self.target not in PERTURBATION_TARGETS:
            raise ConfigError(f"unknown perturbation target: {self.target!r}")
        delta = as_vector(self.delta, name="delta")
        if not np.all(np.isfinite(delta)):
            raise ConfigError("perturbation delta must be finite")
        object.__setattr__(self, "delta", _frozen(delta))
        object.__setattr__(self, "t_kick", float(self.t_kick))

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.delta))

    def apply(self, coords: ArrayLike, partition: Partition | None) -> FloatArray:
        kicked = np.array(coords, dtype=float)
        if self.target == "full":
            if self.delta.size != kicked.size:
                raise DimensionError(
                    f"full-state delta needs {kicked.size} entries, got {self.delta.size}"
                )
            return kicked + self.delta
        if partition is None:
            raise ContractError(f"a {self.target}-block kick needs a partition")
        if self.target == "fast":
            block = slice(0, partition.m)
        else:
            block = slice(partition.m, partition.n)
        width = block.stop - block.start
        if self.delta.size != width:
            raise DimensionError(f"{self.target}-block delta needs {width} entries, got {self.delta.size}")
        kicked[block] = kicked[block] + self.delta
        return kicked


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = DEFAULT_DT
    t_end: float = DEFAULT_T_END
    record_stride: int = 1
    t_start: float = 0.0
    method: Literal["rk4"] = "rk4"

    def __post_init__(self) -> None:
        if not math.isfinite(self.dt) or self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt!r}", key="dt")
        if not math.isfinite(self.t_end) or self.t_end <= self.t_start:
            raise ConfigError(
                f"t_end must exceed t_start={self.t_start}, got {self.t_end!r}", key="t_end"
            )
        if self.dt > self.t_end - self.t_start:
            raise ConfigError(
                f"dt={self.dt} exceeds the integration window {self.t_end - self.t_start}",
                key="dt",
            )
        if isinstance(self.record_stride, bool) or not isinstance(self.record_stride, int):
            raise ConfigError("record_stride must be an integer", key="record_stride")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1", key="record_stride")
        if self.method != "rk4":
            raise ConfigError(f"unsupported integration method: {self.method!r}", key="method")

    @property
    def steps(self) -> int:
        # rounding guards against 20/0.01 == 2000.0000000000002
        return int(math.ceil(round((self.t_end - self.t_start) / self.dt, 9)))

    def grid_time(self, index: int) -> float:
        return self.t_start + index * self.dt

    def grid_index_at_or_after(self, t: float) -> int:
        return max(0, int(math.ceil(round((t - self.t_start) / self.dt, 9))))

    def with_dt(self, dt: float) -> "IntegratorConfig":
        return replace(self, dt=dt)


def _as_rows(values: ArrayLike, count: int) -> FloatArray:
    rows = np.array(values, dtype=float)
    if rows.size == 0:
        return rows.reshape(count, 0)
    if rows.ndim == 1:
        rows = rows.reshape(count, -1)
    return rows


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded output of one integration run.

    ``states`` and ``velocities`` are (N, d) arrays. For reduced runs d is the slow
    dimension and ``manifold`` holds h*(c) at every recorded point.
    """

    times: FloatArray
    states: FloatArray
    potential_values: FloatArray
    velocities: FloatArray
    partition: Partition | None = None
    time_varying: bool = False
    kick_index: int | None = None
    kick_time: float | None = None
    error: str | None = None
    manifold: FloatArray | None = field(default=None)

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        count = times.size
        states = _as_rows(self.states, count)
        velocities = _as_rows(self.velocities, count)
        values = np.array(self.potential_values, dtype=float).reshape(-1)
        if not (states.shape[0] == velocities.shape[0] == values.size == count):
            raise ContractError(
                "trajectory arrays differ in length: "
                f"times={count} states={states.shape[0]} "
                f"J={values.size} velocities={velocities.shape[0]}"
            )
        if count > 1 and not np.all(np.diff(times) > 0):
            raise ContractError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "velocities", _frozen(velocities))
        object.__setattr__(self, "potential_values", _frozen(values))
        if self.manifold is not None:
            object.__setattr__(self, "manifold", _frozen(_as_rows(self.manifold, count)))

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def diverged(self) -> bool:
        return self.error is not None

    @property
    def dimension(self) -> int:
        return int(self.states.shape[1])

    @property
    def final_state(self) -> FloatArray:
        if len(self) == 0:
            raise ContractError("trajectory is empty")
        return self.states[-1]

    def _require_partition(self, partition: Partition | None) -> Partition:
        resolved = partition or self.partition
        if resolved is None:
            raise ContractError("trajectory has no fast/slow partition")
        resolved.check(self.dimension)
        return resolved

    def fast_states(self, partition: Partition | None = None) -> FloatArray:
        return self._require_partition(partition).fast(self.states)

    def slow_states(self, partition: Partition | None = None) -> FloatArray:
        return self._require_partition(partition).slow(self.states)


@dataclass(frozen=True, eq=False)
class FastEquilibrium:
    c: FloatArray
    h_star: FloatArray
    stability_margin: float
    residual: float
    iterations: int = 0
    residual_history: tuple[float, ...] = ()
    tol: float = DEFAULT_SOLVER_TOL
    time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.residual <= self.tol

    @property
    def stable(self) -> bool:
        return self.stability_margin > 0

    @property
    def accepted(self) -> bool:
        return self.converged and self.stable

    def as_dict(self) -> Dict[str, Any]:
        return {
            "c": np.asarray(self.c).tolist(),
            "h_star": np.asarray(self.h_star).tolist(),
            "stability_margin": self.stability_margin,
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class CriticalManifoldSample:
    points: tuple[FastEquilibrium, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ContractError("critical manifold sample needs at least one point")
        grid = np.array([np.asarray(point.c, dtype=float) for point in self.points])
        if grid.shape[0] > 1 and not np.all(np.diff(grid, axis=0) > 0):
            raise ContractError("critical manifold grid must increase in every slow coordinate")
        rejected = [point for point in self.points if not point.accepted]
        if rejected:
            raise ContractError(
                f"{len(rejected)} manifold point(s) not accepted, first at c={rejected[0].c.tolist()}"
            )

    @property
    def c_values(self) -> FloatArray:
        return np.array([point.c for point in self.points], dtype=float)

    @property
    def h_values(self) -> FloatArray:
        return np.array([point.h_star for point in self.points], dtype=float)

    @property
    def margins(self) -> FloatArray:
        return np.array([point.stability_margin for point in self.points], dtype=float)

    @property
    def residuals(self) -> FloatArray:
        return np.array([point.residual for point in self.points], dtype=float)


@dataclass(frozen=True)
class ReductionReport:
    epsilon: float
    max_error: float
    transient_cutoff: float
    time_of_max: float = float("nan")

    def __post_init__(self) -> None:
        if not self.max_error >= 0:
            raise ContractError(f"max_error must be >= 0, got {self.max_error!r}")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "max_error": self.max_error,
            "transient_cutoff": self.transient_cutoff,
            "time_of_max": self.time_of_max,
        }
