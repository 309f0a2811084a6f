"""Cognitive potentials J(eta, t) and finite-difference oracles for their derivatives."""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from cogflow.core.models import FloatArray, Partition, State
from cogflow.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    EvaluationError,
    NumericalDifferentiationWarning,
)

DEFAULT_FD_STEP = 1e-5
FD_ASYMMETRY_LIMIT = 1e-8
RELATIVE_ERROR_FLOOR = 1e-8

CUBIC_BENCHMARK = "cubic-benchmark"
DECISION = "decision"
COMPOSITE = "composite"
BUILTIN_POTENTIALS: tuple[str, ...] = (CUBIC_BENCHMARK, DECISION, COMPOSITE)

DEFAULT_BETA = 2.0
SADDLE_NODE_BIAS = 2.0 / (3.0 * math.sqrt(3.0))


class Potential(ABC):
    """Scalar field J(eta, t) with its gradient and, optionally, the fast-block Hessian.

    Implementations receive raw coordinate arrays; the module-level helpers below do
    the validation and finiteness checks.
    """

    name: str = "potential"
    time_varying: bool = False
    partition: Partition = Partition(1, 1)

    @abstractmethod
    def value(self, eta: FloatArray, t: float) -> float:
        raise NotImplementedError

    @abstractmethod
    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        raise NotImplementedError

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray | None:
        return None

    def fast_equilibrium(self, c: FloatArray, t: float) -> FloatArray | None:
        """Closed-form h*(c) when one is known."""
        return None


class CubicBenchmark(Potential):
    """J(h, c) = 1/2 (h - c^3)^2 + 1/2 c^2, critical manifold h = c^3."""

    name = CUBIC_BENCHMARK

    def value(self, eta: FloatArray, t: float) -> float:
        h, c = eta[0], eta[1]
        residual = h - c**3
        return float(0.5 * residual * residual + 0.5 * c * c)

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        h, c = eta[0], eta[1]
        residual = h - c**3
        return np.array([residual, residual * (-3.0 * c * c) + c], dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.ones((1, 1))

    def fast_equilibrium(self, c: FloatArray, t: float) -> FloatArray:
        return np.asarray(c, dtype=float) ** 3


class PredictionMismatch(Potential):
    """Prediction-error term 1/2 (h - c^3)^2."""

    name = "prediction"

    def value(self, eta: FloatArray, t: float) -> float:
        residual = eta[0] - eta[1] ** 3
        return float(0.5 * residual * residual)

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        c = eta[1]
        residual = eta[0] - c**3
        return np.array([residual, residual * (-3.0 * c * c)], dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.ones((1, 1))


class ComplexityPenalty(Potential):
    """Complexity term 1/2 |c|^2 on the slow block."""

    name = "complexity"

    def value(self, eta: FloatArray, t: float) -> float:
        c = eta[1]
        return float(0.5 * c * c)

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        return np.array([0.0, eta[1]], dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.zeros((1, 1))


@dataclass(frozen=True)
class Component:
    label: str
    weight: float
    potential: Potential


class CompositePotential(Potential):
    """Labeled weighted sum of potentials sharing one partition."""

    name = COMPOSITE

    def __init__(self, components: Sequence[Component]) -> None:
        if not components:
            raise ConfigError("composite potential needs at least one component")
        labels = [component.label for component in components]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"composite component labels must be unique, got {labels}")
        partition = components[0].potential.partition
        for component in components:
            if not math.isfinite(component.weight) or component.weight < 0:
                raise ConfigError(
                    f"component {component.label!r} weight must be a finite value >= 0, "
                    f"got {component.weight!r}"
                )
            if component.potential.partition != partition:
                raise DimensionError(
                    f"component {component.label!r} has partition "
                    f"{component.potential.partition}, expected {partition}"
                )
        self.components: tuple[Component, ...] = tuple(components)
        self.partition = partition
        self.time_varying = any(component.potential.time_varying for component in components)

    def weight_of(self, label: str) -> float:
        for component in self.components:
            if component.label == label:
                return component.weight
        raise KeyError(label)

    def value(self, eta: FloatArray, t: float) -> float:
        return float(
            sum(component.weight * component.potential.value(eta, t) for component in self.components)
        )

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        total = np.zeros(self.partition.n)
        for component in self.components:
            total = total + component.weight * np.asarray(
                component.potential.gradient(eta, t), dtype=float
            )
        return total

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray | None:
        m = self.partition.m
        total = np.zeros((m, m))
        for component in self.components:
            block = component.potential.hessian_fast_block(eta, t)
            if block is None:
                return None
            total = total + component.weight * np.atleast_2d(np.asarray(block, dtype=float))
        return total


@dataclass(frozen=True)
class BiasRamp:
    """Piecewise-linear evidence bias: 0 before start, linear to level at end, flat after.

    ``cap`` clips |b| to a ceiling, used to hold the ramp below the saddle-node threshold.
    """

    start: float = 0.0
    end: float = 40.0
    level: float = 0.5
    cap: float | None = None

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ConfigError(
                f"ramp_end ({self.end}) must not precede ramp_start ({self.start})", key="ramp_end"
            )
        if self.cap is not None and self.cap < 0:
            raise ConfigError(f"ramp cap must be >= 0, got {self.cap}", key="capped_level")

    def __call__(self, t: float) -> float:
        if t <= self.start:
            bias = 0.0
        elif t >= self.end:
            bias = self.level
        else:
            bias = self.level * (t - self.start) / (self.end - self.start)
        if self.cap is not None:
            bias = min(max(bias, -self.cap), self.cap)
        return float(bias)

    def capped(self, cap: float) -> "BiasRamp":
        return BiasRamp(self.start, self.end, self.level, cap)


ZERO_BIAS = BiasRamp(0.0, 0.0, 0.0)


class DecisionPotential(Potential):
    """Tilting double well with a fast habitual response g(c) = tanh(beta c).

    J(h, c, t) = 1/2 (h - g(c))^2 + 1/4 c^4 - 1/2 c^2 + b(t) c
    """

    name = DECISION
    time_varying = True

    def __init__(self, beta: float = DEFAULT_BETA, bias: BiasRamp | None = None) -> None:
        if not math.isfinite(beta) or beta <= 0:
            raise ConfigError(f"beta must be > 0, got {beta!r}", key="beta")
        self.beta = float(beta)
        self.bias = bias if bias is not None else BiasRamp()

    def habit(self, c: float) -> float:
        return float(np.tanh(self.beta * c))

    def value(self, eta: FloatArray, t: float) -> float:
        h, c = eta[0], eta[1]
        mismatch = h - np.tanh(self.beta * c)
        return float(0.5 * mismatch * mismatch + 0.25 * c**4 - 0.5 * c * c + self.bias(t) * c)

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        h, c = eta[0], eta[1]
        g = np.tanh(self.beta * c)
        mismatch = h - g
        d_slow = -mismatch * self.beta * (1.0 - g * g) + c**3 - c + self.bias(t)
        return np.array([mismatch, d_slow], dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.ones((1, 1))

    def fast_equilibrium(self, c: FloatArray, t: float) -> FloatArray:
        return np.tanh(self.beta * np.asarray(c, dtype=float))


class QuadraticBowl(Potential):
    name = "quadratic-bowl"

    def __init__(self, partition: Partition = Partition(1, 1)) -> None:
        self.partition = partition

    def value(self, eta: FloatArray, t: float) -> float:
        return float(0.5 * np.dot(eta, eta))

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        return np.array(eta, dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.eye(self.partition.m)

    def fast_equilibrium(self, c: FloatArray, t: float) -> FloatArray:
        return np.zeros(self.partition.m)


class LinearPotential(Potential):
    name = "linear"

    def __init__(self, coefficients: ArrayLike, partition: Partition = Partition(1, 1)) -> None:
        self.coefficients = np.array(coefficients, dtype=float).reshape(-1)
        partition.check(self.coefficients.size)
        self.partition = partition

    def value(self, eta: FloatArray, t: float) -> float:
        return float(np.dot(self.coefficients, eta))

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        return self.coefficients.copy()

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.zeros((self.partition.m, self.partition.m))


class ConstantPotential(Potential):
    name = "constant"

    def __init__(self, level: float = 0.0, partition: Partition = Partition(1, 1)) -> None:
        self.level = float(level)
        self.partition = partition

    def value(self, eta: FloatArray, t: float) -> float:
        return self.level

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        return np.zeros(self.partition.n)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        return np.zeros((self.partition.m, self.partition.m))


class BranchingPotential(Potential):
    """J = 1/2 (h^2 - c)^2: for c > 0 the fast block has two minimisers h = +-sqrt(c)."""

    name = "branching"

    def value(self, eta: FloatArray, t: float) -> float:
        gap = eta[0] * eta[0] - eta[1]
        return float(0.5 * gap * gap)

    def gradient(self, eta: FloatArray, t: float) -> FloatArray:
        h = eta[0]
        gap = h * h - eta[1]
        return np.array([2.0 * h * gap, -gap], dtype=float)

    def hessian_fast_block(self, eta: FloatArray, t: float) -> FloatArray:
        h = eta[0]
        return np.array([[6.0 * h * h - 2.0 * eta[1]]], dtype=float)


@dataclass(frozen=True)
class PotentialSettings:
    beta: float = DEFAULT_BETA
    ramp_start: float = 0.0
    ramp_end: float = 40.0
    ramp_level: float = 0.5
    prediction_weight: float = 1.0
    complexity_weight: float = 1.0
    extra_components: tuple[Component, ...] = field(default=())


def build_composite(
    prediction_weight: float = 1.0,
    complexity_weight: float = 1.0,
    extra: Sequence[Component] = (),
) -> CompositePotential:
    """Prediction and complexity slots plus any user-supplied labeled terms."""
    components = [
        Component("prediction", prediction_weight, PredictionMismatch()),
        Component("complexity", complexity_weight, ComplexityPenalty()),
        *extra,
    ]
    return CompositePotential(components)


def build_potential(name: str, settings: PotentialSettings | None = None) -> Potential:
    resolved = settings or PotentialSettings()
    normalized = name.strip().lower()
    if normalized == CUBIC_BENCHMARK:
        return CubicBenchmark()
    if normalized == DECISION:
        ramp = BiasRamp(resolved.ramp_start, resolved.ramp_end, resolved.ramp_level)
        return DecisionPotential(resolved.beta, ramp)
    if normalized == COMPOSITE:
        return build_composite(
            resolved.prediction_weight,
            resolved.complexity_weight,
            resolved.extra_components,
        )
    raise ConfigError(
        f"unknown potential {name!r}; expected one of {', '.join(BUILTIN_POTENTIALS)}",
        key="potential.name",
    )


def _coords(potential: Potential, state: State | ArrayLike) -> FloatArray:
    coords = state.coords if isinstance(state, State) else np.asarray(state, dtype=float).reshape(-1)
    if coords.size != potential.partition.n:
        raise DimensionError(
            f"{potential.name} expects a state of dimension {potential.partition.n}, "
            f"got {coords.size}"
        )
    return coords


def evaluate(potential: Potential, state: State | ArrayLike, t: float = 0.0) -> float:
    coords = _coords(potential, state)
    value = float(potential.value(coords, t))
    if not math.isfinite(value):
        raise EvaluationError(
            f"{potential.name} is not finite at {coords.tolist()} (t={t})", state=coords.copy()
        )
    return value


def gradient(potential: Potential, state: State | ArrayLike, t: float = 0.0) -> FloatArray:
    coords = _coords(potential, state)
    grad = np.asarray(potential.gradient(coords, t), dtype=float).reshape(-1)
    if grad.size != coords.size:
        raise DimensionError(f"{potential.name} gradient has length {grad.size}, expected {coords.size}")
    if not np.all(np.isfinite(grad)):
        raise EvaluationError(
            f"{potential.name} gradient is not finite at {coords.tolist()} (t={t})",
            state=coords.copy(),
        )
    return grad


def finite_difference_gradient(
    potential: Potential,
    state: State | ArrayLike,
    t: float = 0.0,
    step: float = DEFAULT_FD_STEP,
) -> FloatArray:
    if not step > 0:
        raise ContractError(f"finite-difference step must be > 0, got {step!r}")
    coords = _coords(potential, state)
    approx = np.zeros(coords.size)
    for index in range(coords.size):
        forward = coords.copy()
        backward = coords.copy()
        forward[index] += step
        backward[index] -= step
        approx[index] = (potential.value(forward, t) - potential.value(backward, t)) / (2.0 * step)
    return approx


def finite_difference_hessian_fast_block(
    potential: Potential,
    state: State | ArrayLike,
    t: float = 0.0,
    step: float = DEFAULT_FD_STEP,
) -> FloatArray:
    """Central differences of the analytic fast gradient, symmetrized.

    Emits NumericalDifferentiationWarning when the raw estimate is asymmetric beyond 1e-8.
    """
    if not step > 0:
        raise ContractError(f"finite-difference step must be > 0, got {step!r}")
    coords = _coords(potential, state)
    m = potential.partition.m
    block = np.zeros((m, m))
    for column in range(m):
        forward = coords.copy()
        backward = coords.copy()
        forward[column] += step
        backward[column] -= step
        fast_forward = np.asarray(potential.gradient(forward, t), dtype=float)[:m]
        fast_backward = np.asarray(potential.gradient(backward, t), dtype=float)[:m]
        block[:, column] = (fast_forward - fast_backward) / (2.0 * step)
    asymmetry = float(np.max(np.abs(block - block.T)))
    if asymmetry > FD_ASYMMETRY_LIMIT:
        warnings.warn(
            f"finite-difference fast Hessian of {potential.name} is asymmetric "
            f"by {asymmetry:.3e} at {coords.tolist()}",
            NumericalDifferentiationWarning,
            stacklevel=2,
        )
    return 0.5 * (block + block.T)


def hessian_fast_block(
    potential: Potential,
    state: State | ArrayLike,
    t: float = 0.0,
    *,
    allow_fallback: bool = False,
    step: float = DEFAULT_FD_STEP,
) -> FloatArray:
    coords = _coords(potential, state)
    block = potential.hessian_fast_block(coords, t)
    if block is None:
        if not allow_fallback:
            raise ContractError(
                f"{potential.name} has no analytic fast-block Hessian; "
                "pass allow_fallback=True for finite differences"
            )
        return finite_difference_hessian_fast_block(potential, coords, t, step)
    matrix = np.atleast_2d(np.asarray(block, dtype=float))
    m = potential.partition.m
    if matrix.shape != (m, m):
        raise DimensionError(f"fast-block Hessian has shape {matrix.shape}, expected {(m, m)}")
    return matrix


def relative_error(analytic: ArrayLike, approx: ArrayLike) -> float:
    """Normwise relative error |a - f|_inf / max(|a|_inf, 1e-8).

    One max-norm over the whole vector or block, not a per-component ratio: a tiny entry
    with a large relative miss only counts against the largest analytic entry.
    """
    exact = np.asarray(analytic, dtype=float).reshape(-1)
    estimate = np.asarray(approx, dtype=float).reshape(-1)
    scale = max(float(np.max(np.abs(exact))), RELATIVE_ERROR_FLOOR)
    return float(np.max(np.abs(exact - estimate))) / scale
