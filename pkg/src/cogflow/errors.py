"""Exception hierarchy and warning categories shared across cogflow."""

from __future__ import annotations

from typing import Any, Sequence


class CogflowError(Exception):
    """Base class for every error raised by cogflow."""


class ConfigError(CogflowError, ValueError):
    """Invalid configuration: unknown key, bad value, inconsistent settings."""

    def __init__(self, message: str, *, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class ConfigParseError(ConfigError):
    """Malformed configuration document."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        super().__init__(message)
        self.line = line


class DimensionError(ConfigError):
    """State, vector or partition sizes do not agree."""


class ContractError(CogflowError, ValueError):
    """An operation was called outside its precondition."""


class DomainError(CogflowError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. log of zero)."""


class DegenerateFitError(CogflowError, ValueError):
    """Regression input carries no information (zero abscissa variance, too few points)."""


class MetricValidationError(CogflowError, ValueError):
    """A user-supplied metric matrix is not symmetric positive definite."""

    def __init__(self, message: str, *, eigenvalue: float | None = None) -> None:
        super().__init__(message)
        self.eigenvalue = eigenvalue


class SingularMetricError(CogflowError, ArithmeticError):
    """Metric too ill-conditioned to invert reliably."""

    def __init__(self, message: str, *, condition: float) -> None:
        super().__init__(message)
        self.condition = condition


class EvaluationError(CogflowError, ArithmeticError):
    """A potential returned a non-finite value or gradient."""

    def __init__(self, message: str, *, state: Any = None) -> None:
        super().__init__(message)
        self.state = state


class DivergenceError(CogflowError, ArithmeticError):
    """Integration produced non-finite or runaway values."""

    def __init__(
        self,
        message: str,
        *,
        time: float | None = None,
        state: Any = None,
        epsilon: float | None = None,
    ) -> None:
        super().__init__(message)
        self.time = time
        self.state = state
        self.epsilon = epsilon


class NonConvergenceError(CogflowError, RuntimeError):
    """Fast-equilibrium solve exhausted its iteration budget."""

    def __init__(
        self, message: str, *, best_iterate: Any = None, residual: float = float("nan")
    ) -> None:
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual = residual


class StabilityViolationError(CogflowError, RuntimeError):
    """Equilibrium found but the fast Hessian is not positive definite there."""

    def __init__(self, message: str, *, margin: float) -> None:
        super().__init__(message)
        self.margin = margin


class BranchDependenceError(CogflowError, RuntimeError):
    """Different initial guesses converge to different fast minimisers."""

    def __init__(self, message: str, *, branches: Sequence[Any] = ()) -> None:
        super().__init__(message)
        self.branches = tuple(branches)


class StepSizeWarning(RuntimeWarning):
    """dt exceeds the explicit stability bound of the integrator."""


class NumericalDifferentiationWarning(RuntimeWarning):
    """Finite-difference Hessian came out visibly asymmetric."""


class FitWindowWarning(RuntimeWarning):
    """A fit window had to be shortened or held too few usable points."""
