"""State space, metrics and potentials of the gradient-flow model."""

from .geometry import (
    BlockAnisotropicMetric,
    ExplicitMetric,
    IdentityMetric,
    Metric,
    check_spd,
    metric_inverse_apply,
    metric_matrix,
    riemannian_gradient,
)
from .models import (
    CriticalManifoldSample,
    FastEquilibrium,
    IntegratorConfig,
    Partition,
    Perturbation,
    ReductionReport,
    State,
    Trajectory,
)
from .potentials import (
    BUILTIN_POTENTIALS,
    BiasRamp,
    Component,
    CompositePotential,
    CubicBenchmark,
    DecisionPotential,
    Potential,
    PotentialSettings,
    build_potential,
    evaluate,
    finite_difference_gradient,
    finite_difference_hessian_fast_block,
    gradient,
    hessian_fast_block,
)

__all__ = [
    "BUILTIN_POTENTIALS",
    "BiasRamp",
    "BlockAnisotropicMetric",
    "Component",
    "CompositePotential",
    "CriticalManifoldSample",
    "CubicBenchmark",
    "DecisionPotential",
    "ExplicitMetric",
    "FastEquilibrium",
    "IdentityMetric",
    "IntegratorConfig",
    "Metric",
    "Partition",
    "Perturbation",
    "Potential",
    "PotentialSettings",
    "ReductionReport",
    "State",
    "Trajectory",
    "build_potential",
    "check_spd",
    "evaluate",
    "finite_difference_gradient",
    "finite_difference_hessian_fast_block",
    "gradient",
    "hessian_fast_block",
    "metric_inverse_apply",
    "metric_matrix",
    "riemannian_gradient",
]
