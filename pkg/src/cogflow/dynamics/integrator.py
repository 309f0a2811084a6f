from __future__ import annotations

import logging
import math
import warnings
from typing import List, NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import trapezoid

from cogflow.core.geometry import Metric, riemannian_gradient
from cogflow.core.models import (
    FloatArray,
    IntegratorConfig,
    Partition,
    Perturbation,
    State,
    Trajectory,
)
from cogflow.core.potentials import Potential, evaluate, hessian_fast_block
from cogflow.errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    EvaluationError,
    StepSizeWarning,
)

LOGGER = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
STABILITY_FACTOR = 0.2
DESCENT_SLACK = 1e-9


class FlowSystem(NamedTuple):
    potential: Potential
    metric: Metric


class MonotonicityReport(NamedTuple):
    max_increase: float
    violating_index: int | None

    @property
    def ok(self) -> bool:
        return self.violating_index is None


class BlockSpeeds(NamedTuple):
    fast: float
    slow: float


def flow_field(system: FlowSystem, coords: ArrayLike, t: float) -> FloatArray:
    """d eta / dt = -G(eta)^-1 grad J(eta, t)."""
    return -riemannian_gradient(system.potential, system.metric, coords, t)


def _rk4_coords(system: FlowSystem, y: FloatArray, t: float, dt: float) -> FloatArray:
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            k1 = flow_field(system, y, t)
            k2 = flow_field(system, y + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = flow_field(system, y + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = flow_field(system, y + dt * k3, t + dt)
        except EvaluationError as exc:
            raise DivergenceError(
                f"non-finite RK4 stage in step from t={t:.6g}", time=t, state=y.copy()
            ) from exc
        y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        finite = bool(np.all(np.isfinite(y_next)))
        norm = float(np.linalg.norm(y_next)) if finite else math.inf
    if not finite or norm > DIVERGENCE_NORM:
        raise DivergenceError(
            f"state left the finite region (|eta|={norm:.3e}) at t={t + dt:.6g}",
            time=t + dt,
            state=y.copy(),
        )
    return y_next


def step_rk4(system: FlowSystem, state: State, t: float, dt: float) -> State:
    """One classical fourth-order Runge-Kutta step of the gradient flow."""
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt!r}", key="dt")
    return State(_rk4_coords(system, state.coords, t, dt), t + dt, state.partition)


def stability_bound(potential: Potential, coords: ArrayLike, t: float = 0.0) -> float:
    """0.2 / largest fast-block Hessian eigenvalue at ``coords`` (inf when none is positive)."""
    block = hessian_fast_block(potential, coords, t, allow_fallback=True)
    lambda_max = float(np.linalg.eigvalsh(block)[-1])
    if lambda_max <= 0:
        return math.inf
    return STABILITY_FACTOR / lambda_max


def _initial_coords(initial: State | ArrayLike) -> FloatArray:
    if isinstance(initial, State):
        return np.array(initial.coords, dtype=float)
    return State(np.asarray(initial, dtype=float)).coords.copy()


def integrate(
    system: FlowSystem,
    initial: State | ArrayLike,
    config: IntegratorConfig,
    perturbation: Perturbation | None = None,
) -> Trajectory:
    """Integrate the flow on the fixed grid t_start + i*dt.

    Divergence never raises: the trajectory recorded so far comes back with ``error`` set.
    """
    partition = system.potential.partition
    y = _initial_coords(initial)
    partition.check(y.size)
    if perturbation is not None and perturbation.t_kick >= config.t_end:
        raise ConfigError(
            f"t_kick={perturbation.t_kick} must precede t_end={config.t_end}", key="t_kick"
        )

    bound = stability_bound(system.potential, y, config.t_start)
    if config.dt > bound:
        message = f"dt={config.dt} exceeds the explicit stability bound {bound:.4g}"
        LOGGER.warning(message, extra={"dt": config.dt, "stability_bound": bound})
        warnings.warn(message, StepSizeWarning, stacklevel=2)

    steps = config.steps
    kick_step = (
        min(config.grid_index_at_or_after(perturbation.t_kick), steps)
        if perturbation is not None
        else None
    )

    times: List[float] = []
    states: List[FloatArray] = []
    values: List[float] = []
    velocities: List[FloatArray] = []
    kick_row: int | None = None
    kick_time: float | None = None
    error: str | None = None

    for index in range(steps + 1):
        t = config.grid_time(index)
        if index == kick_step and perturbation is not None:
            y = perturbation.apply(y, partition)
            kick_row = len(times)
            kick_time = t
        if index % config.record_stride == 0 or index == kick_step or index == steps:
            try:
                value = evaluate(system.potential, y, t)
                velocity = flow_field(system, y, t)
            except EvaluationError as exc:
                error = str(exc)
                break
            times.append(t)
            states.append(y.copy())
            values.append(value)
            velocities.append(velocity)
        if index == steps:
            break
        try:
            y = _rk4_coords(system, y, t, config.dt)
        except DivergenceError as exc:
            error = str(exc)
            LOGGER.warning(
                "integration diverged",
                extra={"time": exc.time, "steps_completed": index, "potential": system.potential.name},
            )
            break

    return Trajectory(
        times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=float).reshape(len(times), partition.n),
        potential_values=np.asarray(values, dtype=float),
        velocities=np.asarray(velocities, dtype=float).reshape(len(times), partition.n),
        partition=partition,
        time_varying=system.potential.time_varying,
        kick_index=kick_row,
        kick_time=kick_time,
        error=error,
    )


def descent_slack(trajectory: Trajectory) -> float:
    if len(trajectory) == 0:
        return DESCENT_SLACK
    return DESCENT_SLACK * (1.0 + float(np.max(np.abs(trajectory.potential_values))))


def monotonicity_report(trajectory: Trajectory) -> MonotonicityReport:
    """Largest step-to-step increase of J, skipping the jump into a kicked state."""
    if trajectory.time_varying:
        raise ContractError("descent monitor applies to autonomous potentials only")
    if len(trajectory) < 2:
        return MonotonicityReport(0.0, None)
    increases = np.diff(trajectory.potential_values)
    if trajectory.kick_index is not None and trajectory.kick_index > 0:
        increases[trajectory.kick_index - 1] = -math.inf
    if not np.any(np.isfinite(increases)):
        return MonotonicityReport(0.0, None)
    max_increase = float(np.max(increases))
    slack = descent_slack(trajectory)
    violations = np.flatnonzero(increases > slack)
    violating = int(violations[0]) + 1 if violations.size else None
    return MonotonicityReport(max_increase, violating)


def mean_speed_by_block(trajectory: Trajectory, partition: Partition | None = None) -> BlockSpeeds:
    """Time averages of |dh/dt| and |dc/dt| over the full recorded window."""
    if len(trajectory) == 0:
        raise ContractError("mean speeds of an empty trajectory are undefined")
    resolved = partition or trajectory.partition
    if resolved is None:
        raise ContractError("mean_speed_by_block needs a partition")
    resolved.check(trajectory.dimension)
    fast = np.linalg.norm(resolved.fast(trajectory.velocities), axis=1)
    slow = np.linalg.norm(resolved.slow(trajectory.velocities), axis=1)
    if len(trajectory) == 1:
        return BlockSpeeds(float(fast[0]), float(slow[0]))
    span = float(trajectory.times[-1] - trajectory.times[0])
    return BlockSpeeds(
        float(trapezoid(fast, trajectory.times)) / span,
        float(trapezoid(slow, trajectory.times)) / span,
    )
