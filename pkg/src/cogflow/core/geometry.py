"""Metric fields on the state space and the Riemannian gradient G^-1 grad J."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from cogflow.core.models import FloatArray, Partition, State
from cogflow.core.potentials import Potential, gradient
from cogflow.errors import (
    ConfigError,
    DimensionError,
    MetricValidationError,
    SingularMetricError,
)

SYMMETRY_RTOL = 1e-12
CONDITION_LIMIT = 1e12
SPD_TOL = 1e-10


@dataclass(frozen=True)
class IdentityMetric:
    dimension: int | None = None

    def expected_dimension(self) -> int | None:
        return self.dimension


@dataclass(frozen=True)
class BlockAnisotropicMetric:
    """G = diag(I_m, eps^-2 I_k): slow motion costs eps^-2 times more."""

    epsilon: float
    partition: Partition

    def __post_init__(self) -> None:
        if not (isinstance(self.epsilon, (int, float)) and 0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0,1), got {self.epsilon!r}", key="epsilon")

    def expected_dimension(self) -> int | None:
        return self.partition.n


@dataclass(frozen=True)
class ExplicitMetric:
    """User-supplied matrix field, validated for symmetry and SPD at every evaluation."""

    field: Callable[[FloatArray], ArrayLike]
    dimension: int | None = None

    def expected_dimension(self) -> int | None:
        return self.dimension


Metric = Union[IdentityMetric, BlockAnisotropicMetric, ExplicitMetric]


def _coords(state: State | ArrayLike) -> FloatArray:
    if isinstance(state, State):
        return state.coords
    return np.asarray(state, dtype=float).reshape(-1)


def _check_dimension(metric: Metric, n: int) -> None:
    expected = metric.expected_dimension()
    if expected is not None and expected != n:
        raise DimensionError(f"{type(metric).__name__} expects dimension {expected}, got {n}")


def check_spd(matrix: ArrayLike, tol: float = SPD_TOL) -> tuple[bool, float]:
    """Return (is_spd, smallest eigenvalue); symmetry is judged relative to max(1, max|A|)."""
    array = np.asarray(matrix, dtype=float)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimensionError(f"check_spd needs a square matrix, got shape {array.shape}")
    if array.size == 0:
        raise DimensionError("check_spd needs a non-empty matrix")
    scale = max(1.0, float(np.max(np.abs(array))))
    asymmetry = float(np.max(np.abs(array - array.T)))
    symmetric_part = 0.5 * (array + array.T)
    lambda_min = float(np.linalg.eigvalsh(symmetric_part)[0])
    return (asymmetry <= tol * scale and lambda_min > tol), lambda_min


def _validated_explicit(metric: ExplicitMetric, coords: FloatArray) -> FloatArray:
    n = coords.size
    matrix = np.array(metric.field(coords), dtype=float)
    if matrix.shape != (n, n):
        raise DimensionError(f"explicit metric returned shape {matrix.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(matrix)):
        raise MetricValidationError("explicit metric returned non-finite entries")
    scale = float(np.max(np.abs(matrix)))
    asymmetry = float(np.max(np.abs(matrix - matrix.T)))
    if asymmetry > SYMMETRY_RTOL * scale:
        raise MetricValidationError(
            f"explicit metric is not symmetric (max |G_ij - G_ji| = {asymmetry:.3e})"
        )
    lambda_min = float(np.linalg.eigvalsh(matrix)[0])
    if lambda_min <= 0.0:
        raise MetricValidationError(
            f"explicit metric is not positive definite: smallest eigenvalue {lambda_min:.6g}",
            eigenvalue=lambda_min,
        )
    return matrix


def metric_matrix(metric: Metric, state: State | ArrayLike) -> FloatArray:
    coords = _coords(state)
    n = coords.size
    _check_dimension(metric, n)
    if isinstance(metric, IdentityMetric):
        return np.eye(n)
    if isinstance(metric, BlockAnisotropicMetric):
        m = metric.partition.m
        diagonal = np.ones(n)
        diagonal[m:] = 1.0 / (metric.epsilon * metric.epsilon)
        return np.diag(diagonal)
    return _validated_explicit(metric, coords)


def metric_inverse_apply(metric: Metric, state: State | ArrayLike, v: ArrayLike) -> FloatArray:
    """Solve G(eta) w = v. Diagonal kinds never touch a linear solver."""
    coords = _coords(state)
    vector = np.array(v, dtype=float).reshape(-1)
    if vector.size != coords.size:
        raise DimensionError(f"vector has length {vector.size}, state has {coords.size}")
    _check_dimension(metric, coords.size)
    if isinstance(metric, IdentityMetric):
        return vector
    if isinstance(metric, BlockAnisotropicMetric):
        m = metric.partition.m
        vector[m:] = (metric.epsilon * metric.epsilon) * vector[m:]
        return vector
    matrix = _validated_explicit(metric, coords)
    condition = float(np.linalg.cond(matrix))
    if not math.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularMetricError(
            f"explicit metric condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e}",
            condition=condition,
        )
    try:
        factor = cho_factor(matrix, lower=True)
    except LinAlgError as exc:
        raise SingularMetricError(
            "Cholesky factorization of the explicit metric failed", condition=condition
        ) from exc
    return np.asarray(cho_solve(factor, vector), dtype=float)


def riemannian_gradient(
    potential: Potential,
    metric: Metric,
    state: State | ArrayLike,
    t: float = 0.0,
) -> FloatArray:
    coords = _coords(state)
    raw = gradient(potential, coords, t)
    return metric_inverse_apply(metric, coords, raw)
