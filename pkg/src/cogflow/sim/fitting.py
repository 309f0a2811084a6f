from __future__ import annotations

import logging
import math
import warnings
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from cogflow.core.models import FloatArray
from cogflow.errors import ContractError, DegenerateFitError, DomainError, FitWindowWarning

LOGGER = logging.getLogger(__name__)

DECAY_FLOOR = 1e-10
RATE_SCAN = np.geomspace(1e-2, 1e2, 81)
MIN_DECAY_POINTS = 3


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


class DecayFit(NamedTuple):
    rate: float
    amplitude: FloatArray
    offset: FloatArray
    points: int
    residual: float


def fit_loglog_slope(xs: ArrayLike, ys: ArrayLike) -> LogLogFit:
    """Ordinary least squares of log y on log x."""
    x = np.asarray(xs, dtype=float).reshape(-1)
    y = np.asarray(ys, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ContractError(f"xs and ys differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateFitError(f"log-log fit needs at least 2 points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("log-log fit needs finite inputs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs strictly positive xs and ys")
    log_x = np.log(x)
    log_y = np.log(y)
    if float(np.ptp(log_x)) == 0.0:
        raise DegenerateFitError("zero variance in log x: all abscissae are equal")
    if float(np.ptp(log_y)) == 0.0:
        return LogLogFit(0.0, float(log_y[0]), 1.0)
    result = linregress(log_x, log_y)
    return LogLogFit(float(result.slope), float(result.intercept), float(result.rvalue**2))


def _projected_residual(rate: float, shifted: FloatArray, targets: FloatArray) -> tuple[float, FloatArray]:
    basis = np.column_stack((np.exp(-rate * shifted), np.ones_like(shifted)))
    coefficients, *_ = np.linalg.lstsq(basis, targets, rcond=None)
    misfit = basis @ coefficients - targets
    return float(np.sum(misfit * misfit)), coefficients


def fit_exponential_decay(
    times: ArrayLike,
    deviations: ArrayLike,
    t0: float | None = None,
    floor: float = DECAY_FLOOR,
    *,
    strict: bool = True,
) -> DecayFit:
    """Fit deviation(t) ~ a exp(-r (t - t0)) + b with one rate shared by every column.

    a and b are solved linearly for each trial r; r comes from a log-spaced scan refined
    by bounded Brent search. Rows with |deviation| <= floor are dropped.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    rows = np.asarray(deviations, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    if rows.shape[0] != t.size:
        raise ContractError(f"times and deviations differ in length: {t.size} vs {rows.shape[0]}")
    usable = np.linalg.norm(rows, axis=1) > floor
    if usable.sum() < t.size and usable.any():
        warnings.warn(
            f"decay window shortened to {int(usable.sum())} of {t.size} points above {floor:.0e}",
            FitWindowWarning,
            stacklevel=2,
        )
    count = int(usable.sum())
    width = rows.shape[1]
    if count < MIN_DECAY_POINTS:
        message = f"decay fit needs {MIN_DECAY_POINTS} points above {floor:.0e}, got {count}"
        if strict:
            raise DegenerateFitError(message)
        warnings.warn(message, FitWindowWarning, stacklevel=2)
        LOGGER.warning(message)
        nan = np.full(width, math.nan)
        return DecayFit(math.nan, nan, nan.copy(), count, math.nan)

    t_used = t[usable]
    targets = rows[usable]
    origin = float(t_used[0]) if t0 is None else float(t0)
    shifted = t_used - origin

    scores = [_projected_residual(rate, shifted, targets)[0] for rate in RATE_SCAN]
    best = int(np.argmin(scores))
    low = RATE_SCAN[max(best - 1, 0)]
    high = RATE_SCAN[min(best + 1, RATE_SCAN.size - 1)]
    refined = minimize_scalar(
        lambda rate: _projected_residual(float(rate), shifted, targets)[0],
        bounds=(float(low), float(high)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    rate = float(refined.x) if refined.fun <= scores[best] else float(RATE_SCAN[best])
    residual, coefficients = _projected_residual(rate, shifted, targets)
    return DecayFit(rate, coefficients[0].copy(), coefficients[1].copy(), count, residual)


def log_decay_rate(times: ArrayLike, distances: ArrayLike, floor: float = DECAY_FLOOR) -> float:
    """-slope of log D against t, the plain regression without an offset term."""
    t = np.asarray(times, dtype=float).reshape(-1)
    d = np.asarray(distances, dtype=float).reshape(-1)
    keep = d > floor
    if keep.sum() < 2:
        return math.nan
    result = linregress(t[keep], np.log(d[keep]))
    return float(-result.slope)
