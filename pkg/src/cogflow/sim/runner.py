from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np

from cogflow.config import EFFECTIVE_CONFIG_NAME, RunConfig, render_config, resolve_thread_cap
from cogflow.core.models import DEFAULT_SOLVER_TOL
from cogflow.core.potentials import (
    BUILTIN_POTENTIALS,
    BiasRamp,
    DecisionPotential,
    Potential,
    PotentialSettings,
    build_potential,
)
from cogflow.dynamics.fastslow import sample_critical_manifold
from cogflow.errors import (
    BranchDependenceError,
    CogflowError,
    ConfigError,
    DivergenceError,
    EvaluationError,
    NonConvergenceError,
    SingularMetricError,
    StabilityViolationError,
)
from cogflow.logger import LEDGER_NAME, RunLedger
from cogflow.sim import experiments
from cogflow.sim.plots import Series, emit_svg_lineplot, series
from cogflow.sim.reporting import (
    FAILED_MARKER,
    Criterion,
    sha256_file,
    sha256_hex,
    write_csv,
    write_failed_marker,
    write_trajectory_csv,
    write_verdict_csv,
)
from cogflow.versioning import code_fingerprint, get_version

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3

NUMERICAL_ERRORS = (
    DivergenceError,
    EvaluationError,
    NonConvergenceError,
    StabilityViolationError,
    BranchDependenceError,
    SingularMetricError,
)
PLOT_POINTS = 2000


@dataclass(frozen=True)
class ExperimentOutcome:
    name: str
    criteria: Tuple[Criterion, ...]
    artifacts: Tuple[Path, ...]

    @property
    def passed(self) -> bool:
        return all(criterion.passed for criterion in self.criteria)


@dataclass(frozen=True)
class RunResult:
    exit_code: int
    output_dir: Path | None
    outcomes: Tuple[ExperimentOutcome, ...] = ()
    error: str | None = None
    failed: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class _Context:
    config: RunConfig
    output_dir: Path
    max_workers: int

    @property
    def plots(self) -> bool:
        return self.config.plots

    def path(self, name: str) -> Path:
        return self.output_dir / name


def config_hash(config: RunConfig) -> str:
    return sha256_hex(render_config(config).encode("utf-8"))


def prepare_output_dir(path: str | Path) -> Path:
    """Create the output directory and prove it is writable before any computation."""
    target = Path(path)
    try:
        target.mkdir(parents=True, exist_ok=True)
        probe = target / ".cogflow-write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(
            f"output_dir {str(target)!r} is not a writable directory: {exc.strerror or exc}",
            key="output_dir",
        ) from exc
    return target


def _settings(config: RunConfig) -> PotentialSettings:
    section = config.potential
    return PotentialSettings(
        beta=section.beta,
        ramp_start=section.ramp_start,
        ramp_end=section.ramp_end,
        ramp_level=section.ramp_level,
        prediction_weight=section.prediction_weight,
        complexity_weight=section.complexity_weight,
    )


def _configured_potential(config: RunConfig) -> Potential:
    return build_potential(config.potential.name, _settings(config))


def _thinned(values: np.ndarray) -> np.ndarray:
    stride = max(1, len(values) // PLOT_POINTS)
    return values[::stride]


# experiment handlers --------------------------------------------------------------------


def _run_gradcheck(ctx: _Context) -> ExperimentOutcome:
    section = ctx.config.gradcheck
    settings = _settings(ctx.config)
    potentials = {name: build_potential(name, settings) for name in BUILTIN_POTENTIALS}
    result = experiments.run_gradcheck(
        potentials,
        samples=section.samples,
        times=section.times,
        step=section.step,
        seed=ctx.config.seed,
        box=section.box,
        t_max=section.t_max,
    )
    data = write_csv(
        ctx.path("gradcheck_data.csv"),
        ("potential", "samples", "max_gradient_rel_error", "max_hessian_rel_error"),
        (
            (row.potential, row.samples, row.max_gradient_rel_error, row.max_hessian_rel_error)
            for row in result.rows
        ),
    )
    criteria = experiments.gradcheck_verdict(result, section.tolerance)
    verdict = write_verdict_csv(ctx.path("gradcheck_verdict.csv"), criteria)
    return ExperimentOutcome("gradcheck", tuple(criteria), (data, verdict))


def _run_manifold(ctx: _Context) -> ExperimentOutcome:
    section = ctx.config.manifold
    potential = _configured_potential(ctx.config)
    grid = np.linspace(section.c_min, section.c_max, section.points)
    result = experiments.run_critical_manifold(
        potential, grid, tol=DEFAULT_SOLVER_TOL, landscape_points=section.landscape_points
    )
    sample = result.sample
    partition = potential.partition
    header = (
        [f"c_{index}" for index in range(1, partition.k + 1)]
        + [f"h_{index}" for index in range(1, partition.m + 1)]
        + ["margin", "residual"]
    )
    artifacts = [
        write_csv(
            ctx.path("manifold_data.csv"),
            header,
            (
                [*point.c.tolist(), *point.h_star.tolist(), point.stability_margin, point.residual]
                for point in sample.points
            ),
        ),
        write_csv(ctx.path("manifold_landscape.csv"), ("h", "c", "J"), result.landscape.tolist()),
    ]
    criteria = experiments.manifold_verdict(result, section.points, section.tolerance)
    artifacts.append(write_verdict_csv(ctx.path("manifold_verdict.csv"), criteria))
    if ctx.plots:
        artifacts.append(
            emit_svg_lineplot(
                [series("h*(c)", sample.c_values[:, 0], sample.h_values[:, 0])],
                ctx.path("manifold.svg"),
                title=f"critical manifold of {potential.name}",
                xlabel="c",
                ylabel="h*",
            )
        )
    return ExperimentOutcome("manifold", tuple(criteria), tuple(artifacts))


def _portrait_artifacts(ctx: _Context, potential: Potential) -> List[Path]:
    section = ctx.config.scaling
    integrator = ctx.config.integrator
    portrait = experiments.run_phase_portrait(
        potential,
        section.portrait_epsilon,
        section.portrait_radius,
        section.portrait_starts,
        integrator.t_end,
        integrator.dt,
        record_stride=integrator.record_stride,
        max_workers=ctx.max_workers,
    )
    rows = (
        (index, t, state[0], state[1])
        for index, run in enumerate(portrait.trajectories)
        for t, state in zip(run.times, run.states)
    )
    artifacts = [write_csv(ctx.path("scaling_portrait.csv"), ("trajectory", "t", "h", "c"), rows)]
    if ctx.plots:
        radius = section.portrait_radius
        manifold = sample_critical_manifold(potential, np.linspace(-radius, radius, 81))
        lines: List[Series] = [
            series(f"start {index}", _thinned(run.states[:, 1]), _thinned(run.states[:, 0]))
            for index, run in enumerate(portrait.trajectories)
        ]
        lines.append(series("h*(c)", manifold.c_values[:, 0], manifold.h_values[:, 0]))
        artifacts.append(
            emit_svg_lineplot(
                lines,
                ctx.path("scaling_portrait.svg"),
                title=f"phase portrait, epsilon={portrait.epsilon!r}",
                xlabel="c",
                ylabel="h",
            )
        )
    return artifacts


def _run_scaling(ctx: _Context) -> ExperimentOutcome:
    config = ctx.config
    section = config.scaling
    potential = _configured_potential(config)
    result = experiments.run_timescale_scaling(
        config.epsilons,
        config.initial_state,
        config.integrator.t_end,
        config.integrator.dt,
        potential=potential,
        record_stride=config.integrator.record_stride,
        max_workers=ctx.max_workers,
    )
    artifacts = [
        write_csv(
            ctx.path("scaling_data.csv"),
            ("epsilon", "mean_fast_speed", "mean_slow_speed"),
            result.rows,
        )
    ]
    criteria = experiments.scaling_verdict(
        result,
        slow_slope=(section.slow_slope_min, section.slow_slope_max),
        fast_slope=(section.fast_slope_min, section.fast_slope_max),
        min_r_squared=section.min_r_squared,
    )
    artifacts.append(write_verdict_csv(ctx.path("scaling_verdict.csv"), criteria))
    if ctx.plots:
        eps = np.array([row[0] for row in result.rows])
        artifacts.append(
            emit_svg_lineplot(
                [
                    series("mean |dh/dt|", eps, [row[1] for row in result.rows]),
                    series("mean |dc/dt|", eps, [row[2] for row in result.rows]),
                ],
                ctx.path("scaling.svg"),
                xscale="log",
                yscale="log",
                title="block speeds against epsilon",
                xlabel="epsilon",
                ylabel="mean speed",
            )
        )
    artifacts.extend(_portrait_artifacts(ctx, potential))
    return ExperimentOutcome("scaling", tuple(criteria), tuple(artifacts))


def _run_recovery(ctx: _Context) -> ExperimentOutcome:
    config = ctx.config
    section = config.recovery
    result = experiments.run_perturbation_recovery(
        section.epsilon,
        config.initial_state,
        section.t_kick,
        section.delta,
        section.t_end,
        potential=_configured_potential(config),
        dt=config.integrator.dt,
        target=section.target,
        pre_window_start=section.pre_window_start,
        post_window_offset=section.post_window_offset,
        post_window_length=section.post_window_length,
    )
    artifacts = [
        write_csv(ctx.path("recovery_data.csv"), ("t", "D"), zip(result.times, result.distances)),
        write_trajectory_csv(ctx.path("recovery_trajectory.csv"), result.trajectory),
        write_csv(
            ctx.path("recovery_rates.csv"),
            ("quantity", "value"),
            (
                ("kick_time", result.kick_time),
                ("pre_kick_rate", result.pre_kick_rate),
                ("post_kick_rate", result.post_kick_rate),
                ("pre_kick_log_rate", result.pre_kick_log_rate),
                ("post_kick_log_rate", result.post_kick_log_rate),
                ("stability_margin", result.stability_margin),
                ("distance_at_horizon", result.distance_at_horizon),
                ("kick_jump", result.jump),
            ),
        ),
    ]
    criteria = experiments.recovery_verdict(
        result, rate_tolerance=section.rate_tolerance, residual_fraction=section.residual_fraction
    )
    artifacts.append(write_verdict_csv(ctx.path("recovery_verdict.csv"), criteria))
    if ctx.plots:
        positive = bool(np.all(result.distances > 0))
        artifacts.append(
            emit_svg_lineplot(
                [series("D(t)", _thinned(result.times), _thinned(result.distances))],
                ctx.path("recovery.svg"),
                yscale="log" if positive else "linear",
                title="distance to the critical manifold",
                xlabel="t",
                ylabel="D",
            )
        )
    return ExperimentOutcome("recovery", tuple(criteria), tuple(artifacts))


def _run_reduction(ctx: _Context) -> ExperimentOutcome:
    config = ctx.config
    section = config.reduction
    result = experiments.run_reduction_validation(
        section.epsilons,
        section.c0,
        section.t_end_scaled,
        potential=_configured_potential(config),
        offset=section.offset,
        horizon=section.horizon,
        t_end=section.t_end,
        transient_cutoff=section.transient_cutoff,
        dt=section.dt,
        reduced_dt=section.reduced_dt,
        max_workers=ctx.max_workers,
    )
    artifacts = [
        write_csv(
            ctx.path("reduction_data.csv"),
            ("epsilon", "max_error", "time_of_max", "manifold_offset"),
            (
                (report.epsilon, report.max_error, report.time_of_max, offset)
                for report, offset in zip(result.reports, result.offsets)
            ),
        ),
        write_csv(
            ctx.path("reduction_overlay.csv"), ("t", "c_full", "c_reduced"), result.overlay.tolist()
        ),
        write_csv(
            ctx.path("reduction_fit.csv"),
            ("quantity", "value"),
            (
                ("error_slope", result.slope),
                ("error_r_squared", None if result.fit is None else result.fit.r_squared),
                ("offset_exponent", result.offset_exponent),
                ("fit_error", result.fit_error),
            ),
        ),
    ]
    criteria = experiments.reduction_verdict(result, slope=(section.slope_min, section.slope_max))
    artifacts.append(write_verdict_csv(ctx.path("reduction_verdict.csv"), criteria))
    if ctx.plots:
        eps = np.array([report.epsilon for report in result.reports])
        errors = np.array([report.max_error for report in result.reports])
        if len(eps) > 1 and np.all(errors > 0):
            artifacts.append(
                emit_svg_lineplot(
                    [series("max |c_full - c_reduced|", eps, errors)],
                    ctx.path("reduction.svg"),
                    xscale="log",
                    yscale="log",
                    title="reduction error against epsilon",
                    xlabel="epsilon",
                    ylabel="max error",
                )
            )
        overlay = result.overlay
        artifacts.append(
            emit_svg_lineplot(
                [
                    series("c full", _thinned(overlay[:, 0]), _thinned(overlay[:, 1])),
                    series("c reduced", _thinned(overlay[:, 0]), _thinned(overlay[:, 2])),
                ],
                ctx.path("reduction_overlay.svg"),
                title=f"full and reduced slow coordinate, epsilon={result.reports[0].epsilon!r}",
                xlabel="t",
                ylabel="c",
            )
        )
    return ExperimentOutcome("reduction", tuple(criteria), tuple(artifacts))


def _run_decision(ctx: _Context) -> ExperimentOutcome:
    config = ctx.config
    section = config.decision
    ramp = BiasRamp(config.potential.ramp_start, config.potential.ramp_end, config.potential.ramp_level)
    arguments = dict(
        epsilon=section.epsilon,
        c0=section.c0,
        t_end=section.t_end,
        dt=section.dt,
        window_before=section.window_before,
        window_after=section.window_after,
    )
    result = experiments.run_decision_simulation(
        DecisionPotential(config.potential.beta, ramp), **arguments
    )
    capped = experiments.run_decision_simulation(
        DecisionPotential(config.potential.beta, ramp.capped(section.capped_level)), **arguments
    )
    run = result.trajectory
    artifacts = [
        write_csv(
            ctx.path("decision_data.csv"),
            ("t", "h", "c", "bias", "tracking_error"),
            zip(run.times, run.states[:, 0], run.states[:, 1], result.bias, result.tracking_error),
        ),
        write_csv(
            ctx.path("decision_summary.csv"),
            ("quantity", "value"),
            (
                ("switch_time", result.switch_time),
                ("bias_at_switch", result.bias_at_switch),
                ("switch_count", result.switch_count),
                ("capped_switch_count", capped.switch_count),
                ("capped_final_c", float(capped.trajectory.states[-1, 1])),
            ),
        ),
    ]
    criteria = experiments.decision_verdict(
        result,
        capped,
        min_switch_bias=section.min_switch_bias,
        tracking_tolerance=section.tracking_tolerance,
    )
    artifacts.append(write_verdict_csv(ctx.path("decision_verdict.csv"), criteria))
    if ctx.plots:
        times = _thinned(run.times)
        artifacts.append(
            emit_svg_lineplot(
                [
                    series("c", times, _thinned(run.states[:, 1])),
                    series("h", times, _thinned(run.states[:, 0])),
                    series("bias", times, _thinned(result.bias)),
                ],
                ctx.path("decision.svg"),
                title="decision under a ramped bias",
                xlabel="t",
                ylabel="value",
            )
        )
    return ExperimentOutcome("decision", tuple(criteria), tuple(artifacts))


HANDLERS: Dict[str, Callable[[_Context], ExperimentOutcome]] = {
    "gradcheck": _run_gradcheck,
    "manifold": _run_manifold,
    "scaling": _run_scaling,
    "recovery": _run_recovery,
    "reduction": _run_reduction,
    "decision": _run_decision,
}


# orchestration ---------------------------------------------------------------------------


def _digests(outcome: ExperimentOutcome, output_dir: Path) -> Dict[str, str]:
    return {
        path.relative_to(output_dir).as_posix(): sha256_file(path)
        for path in sorted(outcome.artifacts)
    }


def _finish(
    ledger: RunLedger | None,
    output_dir: Path | None,
    exit_code: int,
    outcomes: List[ExperimentOutcome],
    error: str | None = None,
) -> RunResult:
    failed = [
        f"{outcome.name}.{criterion.name}"
        for outcome in outcomes
        for criterion in outcome.criteria
        if not criterion.passed
    ]
    if output_dir is not None and exit_code in (EXIT_FAIL, EXIT_DIVERGENCE):
        reason = error or "failing criteria: " + ", ".join(failed)
        write_failed_marker(output_dir, reason)
    if ledger is not None:
        ledger.record("run_finished", {"exit_code": exit_code, "error": error, "failed": failed})
    return RunResult(exit_code, output_dir, tuple(outcomes), error, failed)


def run_experiments(config: RunConfig, *, max_workers: int | None = None) -> RunResult:
    """Dispatch the configured experiments and write every artifact.

    A numerical failure stops the run with the artifacts written so far and a FAILED
    marker; failing criteria do not stop later experiments.
    """
    try:
        workers = max_workers if max_workers is not None else resolve_thread_cap()
        output_dir = prepare_output_dir(config.output_dir)
    except ConfigError as exc:
        LOGGER.error("run rejected", extra={"reason": str(exc)})
        return RunResult(EXIT_CONFIG, None, error=str(exc))

    stale = output_dir / FAILED_MARKER
    if stale.exists():
        stale.unlink()
    (output_dir / EFFECTIVE_CONFIG_NAME).write_text(render_config(config), encoding="utf-8")
    ledger = RunLedger.fresh(output_dir / LEDGER_NAME)
    ledger.record(
        "run_started",
        {
            "config_sha256": config_hash(config),
            "experiments": list(config.experiments()),
            "version": get_version(),
            "code_fingerprint": code_fingerprint(),
        },
    )

    ctx = _Context(config, output_dir, workers)
    outcomes: List[ExperimentOutcome] = []
    for name in config.experiments():
        LOGGER.info("experiment started", extra={"experiment": name})
        try:
            outcome = HANDLERS[name](ctx)
        except ConfigError as exc:
            return _finish(ledger, output_dir, EXIT_CONFIG, outcomes, f"{name}: {exc}")
        except NUMERICAL_ERRORS as exc:
            LOGGER.error("experiment diverged", extra={"experiment": name, "reason": str(exc)})
            return _finish(ledger, output_dir, EXIT_DIVERGENCE, outcomes, f"{name}: {exc}")
        except CogflowError as exc:
            LOGGER.error("experiment failed", extra={"experiment": name, "reason": str(exc)})
            return _finish(ledger, output_dir, EXIT_FAIL, outcomes, f"{name}: {exc}")
        outcomes.append(outcome)
        ledger.record(
            "experiment_completed",
            {
                "experiment": name,
                "criteria": [criterion.as_row() for criterion in outcome.criteria],
                "artifacts": _digests(outcome, output_dir),
            },
        )
        LOGGER.info("experiment finished", extra={"experiment": name, "passed": outcome.passed})

    exit_code = EXIT_OK if all(outcome.passed for outcome in outcomes) else EXIT_FAIL
    return _finish(ledger, output_dir, exit_code, outcomes)


def run(config: RunConfig, *, max_workers: int | None = None) -> int:
    return run_experiments(config, max_workers=max_workers).exit_code
