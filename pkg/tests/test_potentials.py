import math

import numpy as np
import pytest

from cogflow.core.potentials import (
    BUILTIN_POTENTIALS,
    SADDLE_NODE_BIAS,
    ZERO_BIAS,
    BiasRamp,
    BranchingPotential,
    Component,
    CompositePotential,
    ConstantPotential,
    CubicBenchmark,
    DecisionPotential,
    LinearPotential,
    Potential,
    PotentialSettings,
    QuadraticBowl,
    build_composite,
    build_potential,
    evaluate,
    finite_difference_gradient,
    finite_difference_hessian_fast_block,
    gradient,
    hessian_fast_block,
    relative_error,
)
from cogflow.errors import ConfigError, ContractError, DimensionError, EvaluationError


class _NoHessian(Potential):
    name = "no-hessian"

    def value(self, eta, t):
        return float(0.5 * eta[0] ** 2 + 0.25 * eta[1] ** 4)

    def gradient(self, eta, t):
        return np.array([eta[0], eta[1] ** 3])


class _Overflow(Potential):
    name = "overflow"

    def value(self, eta, t):
        return float("inf")

    def gradient(self, eta, t):
        return np.array([np.nan, 0.0])


def test_benchmark_values(benchmark: CubicBenchmark) -> None:
    assert evaluate(benchmark, [1.5, -1.0]) == pytest.approx(0.5 * 2.5**2 + 0.5)
    assert gradient(benchmark, [1.0, 1.0]).tolist() == [0.0, 1.0]
    assert benchmark.fast_equilibrium(np.array([2.0]), 0.0).tolist() == [8.0]


@pytest.mark.parametrize("name", BUILTIN_POTENTIALS)
def test_builtin_gradients_match_central_differences(name: str) -> None:
    potential = build_potential(name)
    rng = np.random.default_rng(7)
    for _ in range(200):
        point = rng.uniform(-2.0, 2.0, size=2)
        t = float(rng.uniform(0.0, 60.0))
        analytic = gradient(potential, point, t)
        assert relative_error(analytic, finite_difference_gradient(potential, point, t)) <= 1e-6
        block = hessian_fast_block(potential, point, t)
        numeric = finite_difference_hessian_fast_block(potential, point, t)
        assert relative_error(block, numeric) <= 1e-6


def test_composite_is_weighted_sum_of_components() -> None:
    composite = build_composite(prediction_weight=2.0, complexity_weight=0.5)
    point = np.array([0.3, 0.7])
    expected = 2.0 * 0.5 * (0.3 - 0.7**3) ** 2 + 0.5 * 0.5 * 0.7**2
    assert evaluate(composite, point) == pytest.approx(expected)
    assert composite.weight_of("complexity") == 0.5


def test_composite_default_matches_benchmark(benchmark: CubicBenchmark) -> None:
    composite = build_composite()
    point = [0.4, -1.2]
    assert evaluate(composite, point) == pytest.approx(evaluate(benchmark, point))
    assert np.allclose(gradient(composite, point), gradient(benchmark, point))


def test_composite_rejects_bad_components() -> None:
    with pytest.raises(ConfigError):
        CompositePotential([])
    with pytest.raises(ConfigError):
        CompositePotential([Component("a", -1.0, CubicBenchmark())])
    with pytest.raises(ConfigError):
        CompositePotential([Component("a", 1.0, CubicBenchmark()), Component("a", 1.0, CubicBenchmark())])


def test_bias_ramp_shape_and_cap() -> None:
    ramp = BiasRamp(0.0, 40.0, 0.5)
    assert ramp(-1.0) == 0.0
    assert ramp(20.0) == pytest.approx(0.25)
    assert ramp(100.0) == 0.5
    capped = ramp.capped(0.2)
    assert capped(100.0) == pytest.approx(0.2)
    assert capped(10.0) == pytest.approx(0.125)
    with pytest.raises(ConfigError):
        BiasRamp(10.0, 5.0, 0.5)


def test_saddle_node_threshold_value() -> None:
    assert SADDLE_NODE_BIAS == pytest.approx(2.0 / (3.0 * math.sqrt(3.0)))
    assert 0.3849 < SADDLE_NODE_BIAS < 0.385


def test_decision_potential_habit_and_bias_term() -> None:
    potential = DecisionPotential(2.0, BiasRamp(0.0, 40.0, 0.5))
    assert potential.time_varying
    assert potential.habit(0.5) == pytest.approx(math.tanh(1.0))
    before = gradient(potential, [0.0, 1.0], 0.0)[1]
    after = gradient(potential, [0.0, 1.0], 40.0)[1]
    assert after - before == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        DecisionPotential(0.0)


def test_helper_potentials() -> None:
    assert evaluate(QuadraticBowl(), [3.0, 4.0]) == pytest.approx(12.5)
    assert gradient(LinearPotential([1.0, -2.0]), [5.0, 5.0]).tolist() == [1.0, -2.0]
    assert gradient(ConstantPotential(3.0), [1.0, 1.0]).tolist() == [0.0, 0.0]
    branching = BranchingPotential()
    assert gradient(branching, [1.0, 1.0]).tolist() == [0.0, 0.0]
    assert gradient(branching, [-1.0, 1.0]).tolist() == [0.0, 0.0]


def test_missing_hessian_needs_explicit_fallback() -> None:
    potential = _NoHessian()
    with pytest.raises(ContractError):
        hessian_fast_block(potential, [0.1, 0.2])
    block = hessian_fast_block(potential, [0.1, 0.2], allow_fallback=True)
    assert block[0, 0] == pytest.approx(1.0, abs=1e-8)


def test_non_finite_evaluation_raises() -> None:
    with pytest.raises(EvaluationError):
        evaluate(_Overflow(), [0.0, 0.0])
    with pytest.raises(EvaluationError):
        gradient(_Overflow(), [0.0, 0.0])


def test_wrong_state_dimension(benchmark: CubicBenchmark) -> None:
    with pytest.raises(DimensionError):
        evaluate(benchmark, [1.0, 2.0, 3.0])


def test_unknown_potential_name() -> None:
    with pytest.raises(ConfigError) as excinfo:
        build_potential("mystery", PotentialSettings())
    assert excinfo.value.key == "potential.name"


def test_relative_error_uses_floor() -> None:
    assert relative_error([0.0], [1e-9]) == pytest.approx(0.1)
    assert relative_error([2.0, 1.0], [2.0, 1.5]) == pytest.approx(0.25)


def test_relative_error_is_normwise() -> None:
    # a small component off by 100% only counts against the largest entry
    assert relative_error([1.0, 1e-3], [1.0, 2e-3]) == pytest.approx(1e-3)


def test_benchmark_fast_gradient_vanishes_on_cubic(benchmark: CubicBenchmark) -> None:
    for c in np.linspace(-2.0, 2.0, 81):
        assert abs(gradient(benchmark, [c**3, c])[0]) <= 1e-12


def test_composite_hessian_adds_weights() -> None:
    composite = CompositePotential(
        [Component("first", 2.0, CubicBenchmark()), Component("second", 3.0, CubicBenchmark())]
    )
    assert hessian_fast_block(composite, [0.3, -0.8]).tolist() == [[5.0]]


def test_unbiased_decision_potential_is_symmetric() -> None:
    potential = DecisionPotential(2.0, ZERO_BIAS)
    rng = np.random.default_rng(5)
    for h, c, t in zip(rng.uniform(-2.0, 2.0, 100), rng.uniform(-2.0, 2.0, 100), rng.uniform(0.0, 60.0, 100)):
        value = evaluate(potential, [h, c], t)
        mirrored = evaluate(potential, [-h, -c], t)
        assert abs(value - mirrored) <= 1e-12 * max(1.0, abs(value))
        assert np.allclose(gradient(potential, [-h, -c], t), -gradient(potential, [h, c], t), rtol=0, atol=1e-12)
