"""Experiment drivers, their result records and verdict builders.

Drivers are plain library calls; the runner only wires configuration, artifacts and exit
codes around them.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Mapping, Sequence, Tuple, TypeVar

import numpy as np
from numpy.typing import ArrayLike

from cogflow.core.geometry import BlockAnisotropicMetric
from cogflow.core.models import (
    CriticalManifoldSample,
    FloatArray,
    IntegratorConfig,
    Perturbation,
    PerturbationTarget,
    ReductionReport,
    Trajectory,
)
from cogflow.core.potentials import (
    DecisionPotential,
    Potential,
    evaluate,
    finite_difference_gradient,
    finite_difference_hessian_fast_block,
    gradient,
    hessian_fast_block,
    relative_error,
)
from cogflow.dynamics.fastslow import (
    fast_deviation_series,
    integrate_reduced,
    max_manifold_offset,
    reduction_error,
    sample_critical_manifold,
    solve_fast_equilibrium,
)
from cogflow.dynamics.integrator import (
    FlowSystem,
    integrate,
    mean_speed_by_block,
    monotonicity_report,
)
from cogflow.errors import (
    CogflowError,
    ConfigError,
    DegenerateFitError,
    DivergenceError,
    NonConvergenceError,
)
from cogflow.sim.fitting import (
    DECAY_FLOOR,
    LogLogFit,
    fit_exponential_decay,
    fit_loglog_slope,
    log_decay_rate,
)
from cogflow.sim.reporting import Criterion, bound_number, range_bound

LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MIN_SCALING_EPSILONS = 3
WINDOW_TOL = 1e-9


def ordered_map(function: Callable[[T], R], items: Sequence[T], max_workers: int = 1) -> List[R]:
    """Map over items, in parallel when allowed; results keep the input order."""
    if max_workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
        return list(pool.map(function, items))


def _require_finite_run(trajectory: Trajectory, *, epsilon: float | None = None) -> Trajectory:
    if trajectory.error is not None:
        last = float(trajectory.times[-1]) if len(trajectory) else None
        state = trajectory.states[-1].tolist() if len(trajectory) else None
        label = f" at epsilon={epsilon}" if epsilon is not None else ""
        raise DivergenceError(
            f"integration diverged{label}: {trajectory.error}",
            time=last,
            state=state,
            epsilon=epsilon,
        )
    return trajectory


# gradcheck ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GradcheckRow:
    potential: str
    samples: int
    max_gradient_rel_error: float
    max_hessian_rel_error: float


@dataclass(frozen=True)
class GradcheckResult:
    rows: Tuple[GradcheckRow, ...]


def run_gradcheck(
    potentials: Mapping[str, Potential],
    samples: int = 200,
    times: int = 10,
    step: float = 1e-5,
    seed: int = 1729,
    *,
    box: float = 2.0,
    t_max: float = 60.0,
) -> GradcheckResult:
    """Analytic gradient and fast Hessian against central differences at random states.

    Each row keeps the worst normwise relative error (see ``relative_error``), which is the
    value the tolerance gate compares.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for name, potential in potentials.items():
        n = potential.partition.n
        worst_gradient = 0.0
        worst_hessian = 0.0
        evaluated = 0
        for _ in range(samples):
            point = rng.uniform(-box, box, size=n)
            instants = rng.uniform(0.0, t_max, size=times) if potential.time_varying else [0.0]
            for t in instants:
                analytic = gradient(potential, point, float(t))
                numeric = finite_difference_gradient(potential, point, float(t), step)
                worst_gradient = max(worst_gradient, relative_error(analytic, numeric))
                block = hessian_fast_block(potential, point, float(t))
                numeric_block = finite_difference_hessian_fast_block(potential, point, float(t), step)
                worst_hessian = max(worst_hessian, relative_error(block, numeric_block))
                evaluated += 1
        rows.append(GradcheckRow(name, evaluated, worst_gradient, worst_hessian))
    return GradcheckResult(tuple(rows))


def gradcheck_verdict(result: GradcheckResult, tolerance: float) -> List[Criterion]:
    bound = f"<={bound_number(tolerance)}"
    criteria = []
    for row in result.rows:
        criteria.append(Criterion(f"{row.potential}_gradient_rel_error", row.max_gradient_rel_error, bound))
        criteria.append(Criterion(f"{row.potential}_hessian_rel_error", row.max_hessian_rel_error, bound))
    return criteria


# critical manifold ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManifoldResult:
    sample: CriticalManifoldSample
    closed_form_error: float | None
    min_margin: float
    landscape: FloatArray


def run_critical_manifold(
    potential: Potential,
    c_grid: ArrayLike,
    *,
    tol: float = 1e-10,
    landscape_points: int = 41,
    t: float = 0.0,
) -> ManifoldResult:
    sample = sample_critical_manifold(potential, c_grid, t, tol=tol)
    errors = []
    for point in sample.points:
        closed = potential.fast_equilibrium(point.c, t)
        if closed is None:
            errors = []
            break
        errors.append(float(np.max(np.abs(point.h_star - np.asarray(closed, dtype=float)))))
    closed_error = max(errors) if errors else None

    c_values = sample.c_values[:, 0]
    h_values = sample.h_values[:, 0]
    c_axis = np.linspace(float(c_values.min()), float(c_values.max()), landscape_points)
    h_axis = np.linspace(float(h_values.min()) - 1.0, float(h_values.max()) + 1.0, landscape_points)
    rows = [
        (h, c, evaluate(potential, potential.partition.join([h], [c]), t))
        for c in c_axis
        for h in h_axis
    ]
    return ManifoldResult(
        sample=sample,
        closed_form_error=closed_error,
        min_margin=float(sample.margins.min()),
        landscape=np.asarray(rows, dtype=float),
    )


def manifold_verdict(result: ManifoldResult, points: int, tolerance: float) -> List[Criterion]:
    criteria = [
        Criterion("accepted_points", float(len(result.sample.points)), f"=={bound_number(points)}"),
        Criterion("min_stability_margin", result.min_margin, ">0.0"),
    ]
    if result.closed_form_error is not None:
        criteria.append(
            Criterion("max_closed_form_error", result.closed_form_error, f"<={bound_number(tolerance)}")
        )
    return criteria


# timescale scaling ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalingResult:
    rows: Tuple[Tuple[float, float, float], ...]
    fast_slope: float
    slow_slope: float
    r_squared_slow: float
    r_squared_fast: float
    descent_violations: int | None
    max_increase: float | None
    trajectories: Tuple[Trajectory, ...]


def run_timescale_scaling(
    epsilons: Sequence[float],
    eta0: ArrayLike,
    t_end: float = 20.0,
    dt: float = 0.01,
    *,
    potential: Potential,
    record_stride: int = 1,
    max_workers: int = 1,
) -> ScalingResult:
    """Mean block speeds per epsilon and their log-log slopes against epsilon."""
    if len(epsilons) < MIN_SCALING_EPSILONS:
        raise ConfigError(
            f"scaling needs at least {MIN_SCALING_EPSILONS} epsilons, got {len(epsilons)}",
            key="epsilons",
        )
    if len(set(epsilons)) != len(epsilons):
        raise DegenerateFitError(f"repeated epsilon values {list(epsilons)} leave the fit degenerate")
    ordered = sorted((float(eps) for eps in epsilons), reverse=True)
    partition = potential.partition
    metrics = [BlockAnisotropicMetric(eps, partition) for eps in ordered]
    config = IntegratorConfig(dt=dt, t_end=t_end, record_stride=record_stride)
    start = np.asarray(eta0, dtype=float)

    def run_one(index: int) -> Trajectory:
        run = integrate(FlowSystem(potential, metrics[index]), start, config)
        return _require_finite_run(run, epsilon=ordered[index])

    trajectories = ordered_map(run_one, list(range(len(ordered))), max_workers)
    speeds = [mean_speed_by_block(run, partition) for run in trajectories]
    rows = tuple((eps, speed.fast, speed.slow) for eps, speed in zip(ordered, speeds))
    slow_fit = fit_loglog_slope(ordered, [row[2] for row in rows])
    fast_fit = fit_loglog_slope(ordered, [row[1] for row in rows])

    violations: int | None = None
    max_increase: float | None = None
    if not potential.time_varying:
        reports = [monotonicity_report(run) for run in trajectories]
        violations = sum(0 if report.ok else 1 for report in reports)
        max_increase = max(report.max_increase for report in reports)
    LOGGER.info(
        "scaling fitted",
        extra={"slow_slope": slow_fit.slope, "fast_slope": fast_fit.slope, "epsilons": ordered},
    )
    return ScalingResult(
        rows=rows,
        fast_slope=fast_fit.slope,
        slow_slope=slow_fit.slope,
        r_squared_slow=slow_fit.r_squared,
        r_squared_fast=fast_fit.r_squared,
        descent_violations=violations,
        max_increase=max_increase,
        trajectories=tuple(trajectories),
    )


def scaling_verdict(
    result: ScalingResult,
    *,
    slow_slope: Tuple[float, float],
    fast_slope: Tuple[float, float],
    min_r_squared: float,
) -> List[Criterion]:
    criteria = [
        Criterion("slow_slope", result.slow_slope, range_bound(*slow_slope)),
        Criterion("fast_slope", result.fast_slope, range_bound(*fast_slope)),
        Criterion("r_squared_slow", result.r_squared_slow, f">={bound_number(min_r_squared)}"),
    ]
    if result.descent_violations is not None:
        criteria.append(Criterion("descent_violations", float(result.descent_violations), "==0.0"))
    return criteria


@dataclass(frozen=True, eq=False)
class PortraitResult:
    epsilon: float
    starts: FloatArray
    trajectories: Tuple[Trajectory, ...]


def ring_starts(radius: float, count: int, center: ArrayLike = (0.0, 0.0)) -> FloatArray:
    angles = 2.0 * np.pi * np.arange(count) / count
    origin = np.asarray(center, dtype=float)
    return origin + radius * np.column_stack((np.cos(angles), np.sin(angles)))


def run_phase_portrait(
    potential: Potential,
    epsilon: float,
    radius: float = 1.5,
    count: int = 6,
    t_end: float = 20.0,
    dt: float = 0.01,
    *,
    record_stride: int = 1,
    max_workers: int = 1,
) -> PortraitResult:
    """Several trajectories from a ring of starts around the origin."""
    starts = ring_starts(radius, count)
    system = FlowSystem(potential, BlockAnisotropicMetric(epsilon, potential.partition))
    config = IntegratorConfig(dt=dt, t_end=t_end, record_stride=record_stride)
    runs = ordered_map(
        lambda start: _require_finite_run(integrate(system, start, config), epsilon=epsilon),
        list(starts),
        max_workers,
    )
    return PortraitResult(epsilon, starts, tuple(runs))


# perturbation recovery -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    trajectory: Trajectory
    times: FloatArray
    distances: FloatArray
    kick_time: float
    pre_kick_rate: float
    post_kick_rate: float
    pre_kick_log_rate: float
    post_kick_log_rate: float
    distance_at_horizon: float
    horizon: float
    delta_norm: float
    jump: float
    stability_margin: float

    @property
    def distance_series(self) -> Tuple[FloatArray, FloatArray]:
        return self.times, self.distances


def _window(times: FloatArray, low: float, high: float, *, include_low: bool, include_high: bool) -> np.ndarray:
    tol = WINDOW_TOL * max(1.0, abs(high))
    above = times >= low - tol if include_low else times > low + tol
    below = times <= high + tol if include_high else times < high - tol
    return above & below


def run_perturbation_recovery(
    epsilon: float,
    eta0: ArrayLike,
    t_kick: float = 8.0,
    delta: ArrayLike = (1.0,),
    t_end: float = 25.0,
    *,
    potential: Potential,
    dt: float = 0.01,
    target: PerturbationTarget = "fast",
    pre_window_start: float = 1.0,
    post_window_offset: float = 0.5,
    post_window_length: float = 5.0,
) -> RecoveryResult:
    """Kick the state once and measure how fast D(t) relaxes before and after."""
    system = FlowSystem(potential, BlockAnisotropicMetric(epsilon, potential.partition))
    kick = Perturbation(t_kick, np.asarray(delta, dtype=float), target)
    run = _require_finite_run(
        integrate(system, eta0, IntegratorConfig(dt=dt, t_end=t_end), kick), epsilon=epsilon
    )
    times, deviations = fast_deviation_series(run, potential)
    distances = np.linalg.norm(deviations, axis=1)
    kick_time = float(run.kick_time if run.kick_time is not None else t_kick)

    pre = _window(times, pre_window_start, kick_time, include_low=True, include_high=False)
    post = _window(
        times,
        kick_time + post_window_offset,
        kick_time + post_window_length,
        include_low=False,
        include_high=True,
    )
    pre_fit = fit_exponential_decay(times[pre], deviations[pre], strict=False)
    post_fit = fit_exponential_decay(times[post], deviations[post], t0=kick_time, strict=False)

    row = run.kick_index if run.kick_index is not None else 0
    jump = float(distances[row] - distances[row - 1]) if row > 0 else 0.0
    kick_state = run.states[row]
    margin = solve_fast_equilibrium(
        potential, potential.partition.slow(kick_state), potential.partition.fast(kick_state), kick_time
    ).stability_margin
    horizon = kick_time + post_window_length
    return RecoveryResult(
        trajectory=run,
        times=times,
        distances=distances,
        kick_time=kick_time,
        pre_kick_rate=pre_fit.rate,
        post_kick_rate=post_fit.rate,
        pre_kick_log_rate=log_decay_rate(times[pre], distances[pre], DECAY_FLOOR),
        post_kick_log_rate=log_decay_rate(times[post], distances[post], DECAY_FLOOR),
        distance_at_horizon=float(np.interp(horizon, times, distances)),
        horizon=horizon,
        delta_norm=kick.magnitude,
        jump=jump,
        stability_margin=float(margin),
    )


def recovery_verdict(
    result: RecoveryResult, *, rate_tolerance: float, residual_fraction: float
) -> List[Criterion]:
    margin = result.stability_margin
    return [
        Criterion(
            "post_kick_rate",
            result.post_kick_rate,
            range_bound(margin * (1.0 - rate_tolerance), margin * (1.0 + rate_tolerance)),
        ),
        Criterion(
            "distance_at_horizon",
            result.distance_at_horizon,
            f"<={bound_number(residual_fraction * result.delta_norm)}",
        ),
    ]


# reduction validation ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReductionResult:
    reports: Tuple[ReductionReport, ...]
    fit: LogLogFit | None
    fit_error: str | None
    offsets: Tuple[float, ...]
    offset_exponent: float | None
    overlay: FloatArray

    @property
    def slope(self) -> float | None:
        return None if self.fit is None else self.fit.slope

    @property
    def strictly_decreasing(self) -> bool:
        errors = [report.max_error for report in self.reports]
        return all(later < earlier for earlier, later in zip(errors, errors[1:]))


def reduction_horizon(epsilon: float, *, scaled: bool, horizon: float, t_end: float) -> float:
    return horizon / (epsilon * epsilon) if scaled else t_end


def _safe_slope(xs: Sequence[float], ys: Sequence[float]) -> Tuple[LogLogFit | None, str | None]:
    try:
        return fit_loglog_slope(xs, ys), None
    except (CogflowError, ValueError) as exc:
        return None, str(exc)


def run_reduction_validation(
    epsilons: Sequence[float],
    c0: ArrayLike = (1.0,),
    t_end_scaled: bool = True,
    *,
    potential: Potential,
    offset: float = 0.5,
    horizon: float = 10.0,
    t_end: float = 50.0,
    transient_cutoff: float = 5.0,
    dt: float = 0.1,
    reduced_dt: float = 0.5,
    max_workers: int = 1,
) -> ReductionResult:
    """Full flow from h*(c0) + offset against the reduced flow, one pair per epsilon."""
    if not epsilons:
        raise ConfigError("reduction needs at least one epsilon", key="reduction.epsilons")
    ordered = sorted((float(eps) for eps in epsilons), reverse=True)
    partition = potential.partition
    slow0 = np.asarray(c0, dtype=float).reshape(-1)
    h_star0 = solve_fast_equilibrium(potential, slow0, potential.fast_equilibrium(slow0, 0.0)).h_star
    full_start = partition.join(h_star0 + offset, slow0)

    def run_pair(eps: float) -> Tuple[ReductionReport, float, Trajectory, Trajectory]:
        window = reduction_horizon(eps, scaled=t_end_scaled, horizon=horizon, t_end=t_end)
        full = _require_finite_run(
            integrate(
                FlowSystem(potential, BlockAnisotropicMetric(eps, partition)),
                full_start,
                IntegratorConfig(dt=dt, t_end=window),
            ),
            epsilon=eps,
        )
        reduced = integrate_reduced(potential, eps, slow0, IntegratorConfig(dt=reduced_dt, t_end=window))
        if reduced.error is not None:
            raise NonConvergenceError(f"reduced flow failed at epsilon={eps}: {reduced.error}")
        report = reduction_error(full, reduced, partition, transient_cutoff, epsilon=eps)
        manifold_offset = max_manifold_offset(full, potential, transient_cutoff)
        return report, manifold_offset, full, reduced

    pairs = ordered_map(run_pair, ordered, max_workers)
    reports = tuple(pair[0] for pair in pairs)
    offsets = tuple(pair[1] for pair in pairs)
    if len(ordered) < 2:
        fit, fit_error = None, "slope undefined for a single epsilon"
    else:
        fit, fit_error = _safe_slope(ordered, [report.max_error for report in reports])
    offset_fit, _ = _safe_slope(ordered, offsets) if len(ordered) > 1 else (None, None)

    _, _, full, reduced = pairs[0]
    grid = np.union1d(full.times, reduced.times)
    overlay = np.column_stack(
        (
            grid,
            np.interp(grid, full.times, full.slow_states()[:, 0]),
            np.interp(grid, reduced.times, reduced.states[:, 0]),
        )
    )
    if fit_error:
        LOGGER.warning("reduction slope not fitted", extra={"reason": fit_error})
    return ReductionResult(
        reports=reports,
        fit=fit,
        fit_error=fit_error,
        offsets=offsets,
        offset_exponent=None if offset_fit is None else offset_fit.slope,
        overlay=overlay,
    )


def reduction_verdict(result: ReductionResult, *, slope: Tuple[float, float]) -> List[Criterion]:
    return [
        Criterion("errors_strictly_decreasing", 1.0 if result.strictly_decreasing else 0.0, "==1.0"),
        Criterion("error_slope", result.slope, range_bound(*slope)),
    ]


# decision dynamics ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecisionResult:
    trajectory: Trajectory
    switch_time: float | None
    switch_count: int
    bias_at_switch: float | None
    tracking_error: FloatArray
    bias: FloatArray
    max_tracking_error_outside: float

    @property
    def tracking_error_series(self) -> Tuple[FloatArray, FloatArray]:
        return self.trajectory.times, self.tracking_error


def _sign_switches(times: FloatArray, c: FloatArray, reference: float, after: float) -> List[float]:
    """Times at which c first sits strictly on the other side of zero from its last side."""
    side = 1.0 if reference >= 0 else -1.0
    switches: List[float] = []
    for t, value in zip(times, c):
        if t < after or value == 0.0:
            continue
        if value * side < 0:
            switches.append(float(t))
            side = -side
    return switches


def run_decision_simulation(
    potential: DecisionPotential,
    epsilon: float = 0.15,
    c0: float = 1.0,
    t_end: float = 320.0,
    dt: float = 0.02,
    *,
    window_before: float = 1.0,
    window_after: float = 3.0,
    record_stride: int = 1,
) -> DecisionResult:
    """Start on the habit curve h = g(c0) and let the evidence ramp tilt the wells."""
    eta0 = np.array([potential.habit(c0), c0], dtype=float)
    system = FlowSystem(potential, BlockAnisotropicMetric(epsilon, potential.partition))
    run = _require_finite_run(
        integrate(system, eta0, IntegratorConfig(dt=dt, t_end=t_end, record_stride=record_stride)),
        epsilon=epsilon,
    )
    h = run.states[:, 0]
    c = run.states[:, 1]
    tracking = np.abs(h - np.tanh(potential.beta * c))
    bias = np.array([potential.bias(float(t)) for t in run.times])
    switches = _sign_switches(run.times, c, c0, potential.bias.start)
    switch_time = switches[0] if switches else None
    if switch_time is None:
        outside = np.ones(len(run), dtype=bool)
    else:
        outside = (run.times <= switch_time - window_before) | (run.times >= switch_time + window_after)
    max_outside = float(np.max(tracking[outside])) if outside.any() else 0.0
    return DecisionResult(
        trajectory=run,
        switch_time=switch_time,
        switch_count=len(switches),
        bias_at_switch=None if switch_time is None else potential.bias(switch_time),
        tracking_error=tracking,
        bias=bias,
        max_tracking_error_outside=max_outside,
    )


def decision_verdict(
    result: DecisionResult,
    capped: DecisionResult,
    *,
    min_switch_bias: float,
    tracking_tolerance: float,
) -> List[Criterion]:
    return [
        Criterion("switch_count", float(result.switch_count), "==1.0"),
        Criterion("bias_at_switch", result.bias_at_switch, f">={bound_number(min_switch_bias)}"),
        Criterion(
            "max_tracking_error_outside_switch",
            result.max_tracking_error_outside,
            f"<={bound_number(tracking_tolerance)}",
        ),
        Criterion("capped_switch_count", float(capped.switch_count), "==0.0"),
    ]
