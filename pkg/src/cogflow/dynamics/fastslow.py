"""Fast equilibria h*(c), the critical manifold and the reduced slow flow."""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from cogflow.core.models import (
    DEFAULT_SOLVER_TOL,
    CriticalManifoldSample,
    FastEquilibrium,
    FloatArray,
    IntegratorConfig,
    Partition,
    ReductionReport,
    Trajectory,
)
from cogflow.core.potentials import Potential, evaluate, gradient, hessian_fast_block
from cogflow.errors import (
    BranchDependenceError,
    ConfigError,
    ContractError,
    EvaluationError,
    NonConvergenceError,
    StabilityViolationError,
)

LOGGER = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100
ARMIJO = 1e-4
MIN_STEP = 1e-12
BRANCH_SEPARATION = 1e-6


def _slow_vector(potential: Potential, c: ArrayLike) -> FloatArray:
    vector = np.array(c, dtype=float).reshape(-1)
    if vector.size != potential.partition.k:
        raise ConfigError(
            f"{potential.name} has {potential.partition.k} slow coordinate(s), got {vector.size}"
        )
    return vector


def _initial_fast(potential: Potential, c: FloatArray, h_init: ArrayLike | None) -> FloatArray:
    m = potential.partition.m
    if h_init is None:
        return np.zeros(m)
    guess = np.array(h_init, dtype=float).reshape(-1)
    if guess.size != m:
        raise ConfigError(f"{potential.name} has {m} fast coordinate(s), h_init has {guess.size}")
    return guess


def solve_fast_equilibrium(
    potential: Potential,
    c: ArrayLike,
    h_init: ArrayLike | None = None,
    t: float = 0.0,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    allow_fallback: bool = False,
    require_stable: bool = False,
) -> FastEquilibrium:
    """Newton on grad_h J(., c) = 0 with backtracking on |grad_h J|^2.

    When the fast Hessian has no Cholesky factor, or Newton finds no sufficient decrease,
    the iteration takes a backtracked gradient-descent step on J instead.
    """
    partition = potential.partition
    m = partition.m
    slow = _slow_vector(potential, c)
    h = _initial_fast(potential, slow, h_init)

    def fast_gradient(fast: FloatArray) -> FloatArray:
        return gradient(potential, partition.join(fast, slow), t)[:m]

    def energy(fast: FloatArray) -> float:
        return evaluate(potential, partition.join(fast, slow), t)

    g = fast_gradient(h)
    residual = float(np.linalg.norm(g))
    history: List[float] = [residual]
    best_h, best_residual = h.copy(), residual
    iterations = 0

    while residual > tol and iterations < max_iter:
        iterations += 1
        accepted: Tuple[FloatArray, FloatArray] | None = None
        block = hessian_fast_block(potential, partition.join(h, slow), t, allow_fallback=allow_fallback)
        try:
            factor = cho_factor(block, lower=True)
            direction = -cho_solve(factor, g)
        except (LinAlgError, ValueError):
            direction = None
        if direction is not None and np.all(np.isfinite(direction)):
            merit = residual * residual
            alpha = 1.0
            while alpha >= MIN_STEP:
                trial = h + alpha * direction
                try:
                    trial_g = fast_gradient(trial)
                except EvaluationError:
                    alpha *= 0.5
                    continue
                if float(np.dot(trial_g, trial_g)) <= (1.0 - 2.0 * ARMIJO * alpha) * merit:
                    accepted = (trial, trial_g)
                    break
                alpha *= 0.5
        if accepted is None:
            start_energy = energy(h)
            slope = float(np.dot(g, g))
            alpha = 1.0
            while alpha >= MIN_STEP:
                trial = h - alpha * g
                try:
                    trial_energy = energy(trial)
                except EvaluationError:
                    alpha *= 0.5
                    continue
                if trial_energy <= start_energy - ARMIJO * alpha * slope:
                    accepted = (trial, fast_gradient(trial))
                    break
                alpha *= 0.5
        if accepted is None:
            LOGGER.debug("fast solve stalled", extra={"c": slow.tolist(), "residual": residual})
            break
        h, g = accepted
        residual = float(np.linalg.norm(g))
        history.append(residual)
        if residual < best_residual:
            best_h, best_residual = h.copy(), residual

    if residual > tol:
        raise NonConvergenceError(
            f"fast equilibrium at c={slow.tolist()} not reached after {iterations} iteration(s), "
            f"residual {best_residual:.3e} > tol {tol:.1e}",
            best_iterate=best_h,
            residual=best_residual,
        )

    block = hessian_fast_block(potential, partition.join(h, slow), t, allow_fallback=allow_fallback)
    margin = float(np.linalg.eigvalsh(block)[0])
    equilibrium = FastEquilibrium(
        c=slow,
        h_star=h,
        stability_margin=margin,
        residual=residual,
        iterations=iterations,
        residual_history=tuple(history),
        tol=tol,
        time=t,
    )
    if margin <= 0:
        LOGGER.warning(
            "fast equilibrium is not strongly stable",
            extra={"c": slow.tolist(), "h_star": h.tolist(), "margin": margin},
        )
        if require_stable:
            raise StabilityViolationError(
                f"fast Hessian at c={slow.tolist()}, h*={h.tolist()} has smallest "
                f"eigenvalue {margin:.6g} <= 0",
                margin=margin,
            )
    return equilibrium


def _grid_rows(potential: Potential, c_grid: ArrayLike) -> FloatArray:
    grid = np.array(c_grid, dtype=float)
    k = potential.partition.k
    if grid.ndim <= 1:
        grid = grid.reshape(-1, k)
    if grid.ndim != 2 or grid.shape[1] != k or grid.shape[0] == 0:
        raise ConfigError(f"c grid must hold rows of {k} slow coordinate(s), got shape {grid.shape}")
    return grid


def _first_guess(potential: Potential, c: FloatArray, t: float) -> FloatArray | None:
    closed = potential.fast_equilibrium(c, t)
    return None if closed is None else np.asarray(closed, dtype=float).reshape(-1)


def probe_branches(
    potential: Potential,
    c: ArrayLike,
    starts: Sequence[ArrayLike],
    t: float = 0.0,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> List[FastEquilibrium]:
    """Solve from several initial guesses and insist they agree on one stable minimiser."""
    if not starts:
        raise ContractError("probe_branches needs at least one start")
    solutions = [solve_fast_equilibrium(potential, c, start, t, tol=tol) for start in starts]
    branches: List[FloatArray] = []
    for solution in solutions:
        if not solution.accepted:
            continue
        if all(np.linalg.norm(solution.h_star - known) > BRANCH_SEPARATION for known in branches):
            branches.append(solution.h_star)
    if len(branches) > 1:
        raise BranchDependenceError(
            f"c={np.asarray(c, dtype=float).tolist()} has {len(branches)} distinct fast minimisers: "
            + ", ".join(str(branch.tolist()) for branch in branches),
            branches=[branch.tolist() for branch in branches],
        )
    return solutions


def _solve_along_grid(
    potential: Potential,
    grid: FloatArray,
    t: float,
    tol: float,
    require_stable: bool,
    probe_starts: Sequence[ArrayLike] | None = None,
) -> List[FastEquilibrium]:
    points: List[FastEquilibrium] = []
    guess = _first_guess(potential, grid[0], t)
    for row in grid:
        if probe_starts:
            probe_branches(potential, row, probe_starts, t, tol=tol)
        point = solve_fast_equilibrium(
            potential, row, guess, t, tol=tol, require_stable=require_stable
        )
        points.append(point)
        guess = point.h_star
    return points


def stability_margin_over_grid(
    potential: Potential,
    c_grid: ArrayLike,
    t: float = 0.0,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
    probe_starts: Sequence[ArrayLike] | None = None,
) -> float:
    """Minimum fast-Hessian eigenvalue at h*(c) over the grid, warm-started point to point."""
    grid = _grid_rows(potential, c_grid)
    points = _solve_along_grid(potential, grid, t, tol, False, probe_starts)
    return float(min(point.stability_margin for point in points))


def sample_critical_manifold(
    potential: Potential,
    c_grid: ArrayLike,
    t: float = 0.0,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> CriticalManifoldSample:
    grid = _grid_rows(potential, c_grid)
    return CriticalManifoldSample(tuple(_solve_along_grid(potential, grid, t, tol, True)))


def _check_epsilon(epsilon: float) -> float:
    if not (isinstance(epsilon, (int, float)) and 0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must lie in (0,1), got {epsilon!r}", key="epsilon")
    return float(epsilon)


def reduced_velocity(
    potential: Potential,
    epsilon: float,
    c: ArrayLike,
    h_star: ArrayLike,
    t: float = 0.0,
) -> FloatArray:
    """-eps^2 grad_c J(h*(c), c)."""
    eps = _check_epsilon(epsilon)
    partition = potential.partition
    slow = _slow_vector(potential, c)
    coords = partition.join(h_star, slow)
    return -(eps * eps) * gradient(potential, coords, t)[partition.m :]


def integrate_reduced(
    potential: Potential,
    epsilon: float,
    c0: ArrayLike,
    config: IntegratorConfig,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> Trajectory:
    """RK4 on the reduced flow; every stage re-solves h*(c), warm-started.

    States hold the slow coordinates only and ``manifold`` carries h*(c) per row. A failed
    fast solve ends the run with the partial trajectory and ``error`` set.
    """
    eps = _check_epsilon(epsilon)
    partition = potential.partition
    c = _slow_vector(potential, c0)
    dt = config.dt
    guess = _first_guess(potential, c, config.t_start)

    def field(slow: FloatArray, t: float, h_guess: FloatArray | None) -> Tuple[FloatArray, FloatArray]:
        point = solve_fast_equilibrium(potential, slow, h_guess, t, tol=tol, require_stable=True)
        return reduced_velocity(potential, eps, slow, point.h_star, t), point.h_star

    times: List[float] = []
    states: List[FloatArray] = []
    values: List[float] = []
    velocities: List[FloatArray] = []
    manifold: List[FloatArray] = []
    error: str | None = None
    steps = config.steps

    for index in range(steps + 1):
        t = config.grid_time(index)
        try:
            velocity, h_star = field(c, t, guess)
            guess = h_star
            if index % config.record_stride == 0 or index == steps:
                times.append(t)
                states.append(c.copy())
                values.append(evaluate(potential, partition.join(h_star, c), t))
                velocities.append(velocity)
                manifold.append(h_star.copy())
            if index == steps:
                break
            k1 = velocity
            k2, h2 = field(c + 0.5 * dt * k1, t + 0.5 * dt, guess)
            k3, h3 = field(c + 0.5 * dt * k2, t + 0.5 * dt, h2)
            k4, _ = field(c + dt * k3, t + dt, h3)
            c = c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(c)):
                error = f"reduced flow left the finite region at t={t + dt:.6g}"
                break
        except (NonConvergenceError, StabilityViolationError, EvaluationError) as exc:
            error = str(exc)
            LOGGER.warning("reduced integration stopped", extra={"time": t, "reason": error})
            break

    k = partition.k
    return Trajectory(
        times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=float).reshape(len(times), k),
        potential_values=np.asarray(values, dtype=float),
        velocities=np.asarray(velocities, dtype=float).reshape(len(times), k),
        partition=None,
        time_varying=potential.time_varying,
        error=error,
        manifold=np.asarray(manifold, dtype=float).reshape(len(times), partition.m),
    )


def fast_deviation_series(
    trajectory: Trajectory,
    potential: Potential,
    partition: Partition | None = None,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> Tuple[FloatArray, FloatArray]:
    """Signed fast-block deviation h(t) - h*(c(t)) at every recorded point."""
    resolved = partition or trajectory.partition or potential.partition
    fast = trajectory.fast_states(resolved)
    slow = trajectory.slow_states(resolved)
    rows = np.zeros_like(fast)
    guess: FloatArray | None = None
    for index, t in enumerate(trajectory.times):
        if guess is None:
            guess = _first_guess(potential, slow[index], float(t))
            if guess is None:
                guess = fast[index]
        point = solve_fast_equilibrium(potential, slow[index], guess, float(t), tol=tol)
        rows[index] = fast[index] - point.h_star
        guess = point.h_star
    return trajectory.times.copy(), rows


def manifold_distance_series(
    trajectory: Trajectory,
    potential: Potential,
    partition: Partition | None = None,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> Tuple[FloatArray, FloatArray]:
    """D(t) = |h(t) - h*(c(t))|."""
    times, deviations = fast_deviation_series(trajectory, potential, partition, tol=tol)
    return times, np.linalg.norm(deviations, axis=1)


def _slow_rows(trajectory: Trajectory, partition: Partition | None) -> FloatArray:
    resolved = partition or trajectory.partition
    if resolved is not None and trajectory.dimension == resolved.n:
        return trajectory.slow_states(resolved)
    return trajectory.states


def reduction_error(
    full: Trajectory,
    reduced: Trajectory,
    partition: Partition | None = None,
    transient_cutoff: float = 5.0,
    *,
    epsilon: float = math.nan,
) -> ReductionReport:
    """Max |c_full - c_reduced| on the union of both time grids after the cutoff."""
    if not transient_cutoff >= 0:
        raise ContractError(f"transient_cutoff must be >= 0, got {transient_cutoff!r}")
    if len(full) == 0 or len(reduced) == 0:
        raise ContractError("reduction_error needs two non-empty trajectories")
    full_slow = _slow_rows(full, partition)
    reduced_slow = _slow_rows(reduced, partition)
    if full_slow.shape[1] != reduced_slow.shape[1]:
        raise ContractError(
            f"slow blocks differ in size: {full_slow.shape[1]} vs {reduced_slow.shape[1]}"
        )
    lower = max(float(full.times[0]), float(reduced.times[0]), float(transient_cutoff))
    upper = min(float(full.times[-1]), float(reduced.times[-1]))
    if upper < lower:
        raise ContractError(
            f"trajectories do not overlap after t={transient_cutoff}: "
            f"[{full.times[0]}, {full.times[-1]}] vs [{reduced.times[0]}, {reduced.times[-1]}]"
        )
    grid = np.union1d(full.times, reduced.times)
    grid = grid[(grid >= lower) & (grid <= upper)]
    if grid.size == 0:
        raise ContractError("no shared grid points after the transient cutoff")
    gaps = np.column_stack(
        [
            np.interp(grid, full.times, full_slow[:, column])
            - np.interp(grid, reduced.times, reduced_slow[:, column])
            for column in range(full_slow.shape[1])
        ]
    )
    errors = np.linalg.norm(gaps, axis=1)
    worst = int(np.argmax(errors))
    return ReductionReport(
        epsilon=float(epsilon),
        max_error=float(errors[worst]),
        transient_cutoff=float(transient_cutoff),
        time_of_max=float(grid[worst]),
    )


def max_manifold_offset(
    trajectory: Trajectory,
    potential: Potential,
    transient_cutoff: float,
    *,
    tol: float = DEFAULT_SOLVER_TOL,
) -> float:
    """max over t >= cutoff of D(t); the displacement of the slow manifold from h*(c)."""
    times, distances = manifold_distance_series(trajectory, potential, tol=tol)
    window = distances[times >= transient_cutoff]
    if window.size == 0:
        raise ContractError(f"no recorded points after t={transient_cutoff}")
    return float(np.max(window))

