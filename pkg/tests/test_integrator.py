import math

import numpy as np
import pytest

from cogflow.core.geometry import BlockAnisotropicMetric, IdentityMetric
from cogflow.core.models import IntegratorConfig, Partition, Perturbation, State
from cogflow.core.potentials import (
    BiasRamp,
    CubicBenchmark,
    DecisionPotential,
    Potential,
    PredictionMismatch,
    QuadraticBowl,
)
from cogflow.dynamics.integrator import (
    FlowSystem,
    flow_field,
    integrate,
    mean_speed_by_block,
    monotonicity_report,
    stability_bound,
    step_rk4,
)
from cogflow.errors import ConfigError, ContractError, StepSizeWarning

PARTITION = Partition(1, 1)


class _Reversed(Potential):
    """Negated potential, so the flow runs the original field backwards."""

    def __init__(self, inner: Potential) -> None:
        self.inner = inner
        self.partition = inner.partition

    def value(self, eta, t):
        return -self.inner.value(eta, t)

    def gradient(self, eta, t):
        return -np.asarray(self.inner.gradient(eta, t), dtype=float)

    def hessian_fast_block(self, eta, t):
        return -np.asarray(self.inner.hessian_fast_block(eta, t), dtype=float)


def _system(epsilon: float, potential=None) -> FlowSystem:
    return FlowSystem(potential or CubicBenchmark(), BlockAnisotropicMetric(epsilon, PARTITION))


def test_flow_field_slows_the_slow_block() -> None:
    field = flow_field(_system(0.1), [1.5, -1.0], 0.0)
    # grad J = (2.5, 2.5 * -3 - 1)
    assert field[0] == pytest.approx(-2.5)
    assert field[1] == pytest.approx(0.01 * 8.5)


def test_equilibrium_is_a_fixed_point() -> None:
    run = integrate(_system(0.2), [0.0, 0.0], IntegratorConfig(dt=0.01, t_end=1.0))
    assert np.all(run.states == 0.0)
    assert run.error is None


def test_recording_stride_keeps_last_point() -> None:
    run = integrate(_system(0.2), [1.5, -1.0], IntegratorConfig(dt=0.01, t_end=1.05, record_stride=10))
    assert run.times[:3].tolist() == pytest.approx([0.0, 0.1, 0.2])
    assert run.times[-1] == pytest.approx(1.05)
    assert len(run) == 12


def test_potential_decreases_along_benchmark_flow() -> None:
    run = integrate(_system(0.1), [1.5, -1.0], IntegratorConfig(dt=0.01, t_end=20.0))
    report = monotonicity_report(run)
    assert report.ok
    assert run.potential_values[-1] < run.potential_values[0]


@pytest.mark.parametrize("epsilon", [0.4, 0.1])
def test_descent_holds_from_random_starts(epsilon: float) -> None:
    rng = np.random.default_rng(2024)
    system = _system(epsilon)
    config = IntegratorConfig(dt=0.01, t_end=2.0)
    for start in rng.uniform(-2.0, 2.0, size=(50, 2)):
        run = integrate(system, start, config)
        assert run.error is None
        report = monotonicity_report(run)
        assert report.violating_index is None, (start.tolist(), report.max_increase)


def test_rk4_is_fourth_order() -> None:
    system = FlowSystem(QuadraticBowl(), IdentityMetric())
    start = np.array([1.0, -0.5])
    exact = start * math.exp(-2.0)
    errors = []
    for dt in (0.1, 0.05, 0.025):
        run = integrate(system, start, IntegratorConfig(dt=dt, t_end=2.0))
        errors.append(float(np.max(np.abs(run.final_state - exact))))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(orders) >= 3.5


def test_step_rk4_advances_time() -> None:
    state = State([1.5, -1.0], 0.0, PARTITION)
    nxt = step_rk4(_system(0.2), state, 0.0, 0.01)
    assert nxt.time == pytest.approx(0.01)
    assert nxt.coords[0] < 1.5
    with pytest.raises(ConfigError):
        step_rk4(_system(0.2), state, 0.0, 0.0)


def test_kick_is_recorded_at_first_grid_time() -> None:
    kick = Perturbation(0.505, [1.0], "fast")
    run = integrate(_system(0.2), [0.0, 0.0], IntegratorConfig(dt=0.01, t_end=1.0), kick)
    assert run.kick_time == pytest.approx(0.51)
    row = run.kick_index
    assert row is not None
    assert run.times[row] == pytest.approx(0.51)
    assert run.states[row, 0] == pytest.approx(1.0)
    assert run.states[row - 1, 0] == 0.0
    assert monotonicity_report(run).ok


def test_kick_after_end_is_rejected() -> None:
    with pytest.raises(ConfigError):
        integrate(
            _system(0.2), [0.0, 0.0], IntegratorConfig(dt=0.01, t_end=1.0), Perturbation(1.0, [1.0])
        )


def test_zero_kick_matches_unkicked_run() -> None:
    config = IntegratorConfig(dt=0.01, t_end=5.0)
    plain = integrate(_system(0.2), [1.5, -1.0], config)
    kicked = integrate(_system(0.2), [1.5, -1.0], config, Perturbation(2.0, [0.0]))
    assert np.array_equal(plain.states, kicked.states)


def test_large_step_warns_and_diverges() -> None:
    with pytest.warns(StepSizeWarning):
        run = integrate(_system(0.1), [1.5, -1.0], IntegratorConfig(dt=10.0, t_end=20.0))
    assert run.diverged
    assert len(run) >= 1
    assert np.all(np.isfinite(run.states))


def test_stability_bound_for_benchmark(benchmark: CubicBenchmark) -> None:
    assert stability_bound(benchmark, [0.0, 0.0]) == pytest.approx(0.2)


def test_pure_fast_potential_has_zero_slow_speed() -> None:
    run = integrate(_system(0.1, PredictionMismatch()), [1.0, 0.0], IntegratorConfig(dt=0.01, t_end=5.0))
    speeds = mean_speed_by_block(run)
    assert speeds.slow == 0.0
    assert speeds.fast > 0.0


def test_slow_speed_ratio_between_epsilons() -> None:
    config = IntegratorConfig(dt=0.01, t_end=20.0)
    coarse = mean_speed_by_block(integrate(_system(0.1), [1.5, -1.0], config))
    fine = mean_speed_by_block(integrate(_system(0.05), [1.5, -1.0], config))
    assert 3.2 <= coarse.slow / fine.slow <= 4.6
    assert 0.8 <= coarse.fast / fine.fast <= 1.25


def test_descent_monitor_rejects_time_varying_runs() -> None:
    run = integrate(_system(0.2, DecisionPotential()), [0.9, 1.0], IntegratorConfig(dt=0.05, t_end=1.0))
    with pytest.raises(ContractError):
        monotonicity_report(run)


def test_single_step_on_quadratic_matches_exponential() -> None:
    system = FlowSystem(QuadraticBowl(), IdentityMetric())
    nxt = step_rk4(system, State([1.0, 0.0], 0.0, PARTITION), 0.0, 0.1)
    assert abs(nxt.coords[0] - math.exp(-0.1)) <= 1e-7
    assert nxt.coords[1] == 0.0


def test_backward_run_returns_to_start(benchmark: CubicBenchmark) -> None:
    metric = BlockAnisotropicMetric(0.3, PARTITION)
    start = np.array([0.8, -0.6])
    config = IntegratorConfig(dt=0.01, t_end=1.0)
    forward = integrate(FlowSystem(benchmark, metric), start, config)
    backward = integrate(FlowSystem(_Reversed(benchmark), metric), forward.final_state, config)
    assert backward.error is None
    assert np.max(np.abs(backward.final_state - start)) <= 1e-5


def test_kicked_run_shares_prefix_with_plain_run() -> None:
    config = IntegratorConfig(dt=0.01, t_end=4.0)
    delta = np.array([0.6, -0.8])
    plain = integrate(_system(0.2), [1.5, -1.0], config)
    kicked = integrate(_system(0.2), [1.5, -1.0], config, Perturbation(2.0, delta, "full"))
    row = kicked.kick_index
    assert row is not None
    assert kicked.states[:row].tobytes() == plain.states[:row].tobytes()
    assert kicked.potential_values[:row].tobytes() == plain.potential_values[:row].tobytes()
    jump = np.linalg.norm(kicked.states[row] - plain.states[row])
    assert jump == pytest.approx(1.0, abs=1e-12)


def test_decision_flow_mirrors_under_sign_flip() -> None:
    config = IntegratorConfig(dt=0.02, t_end=60.0)
    up = DecisionPotential(2.0, BiasRamp(0.0, 40.0, 0.5))
    down = DecisionPotential(2.0, BiasRamp(0.0, 40.0, -0.5))
    start = np.array([math.tanh(2.0), 1.0])
    forward = integrate(_system(0.15, up), start, config)
    mirrored = integrate(_system(0.15, down), -start, config)
    assert np.max(np.abs(forward.states + mirrored.states)) <= 1e-9
