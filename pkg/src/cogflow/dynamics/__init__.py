"""Gradient-flow integration and fast-slow analysis."""

from .fastslow import (
    fast_deviation_series,
    integrate_reduced,
    manifold_distance_series,
    max_manifold_offset,
    probe_branches,
    reduced_velocity,
    reduction_error,
    sample_critical_manifold,
    solve_fast_equilibrium,
    stability_margin_over_grid,
)
from .integrator import (
    BlockSpeeds,
    FlowSystem,
    MonotonicityReport,
    flow_field,
    integrate,
    mean_speed_by_block,
    monotonicity_report,
    stability_bound,
    step_rk4,
)

__all__ = [
    "BlockSpeeds",
    "FlowSystem",
    "MonotonicityReport",
    "fast_deviation_series",
    "flow_field",
    "integrate",
    "integrate_reduced",
    "manifold_distance_series",
    "max_manifold_offset",
    "mean_speed_by_block",
    "monotonicity_report",
    "probe_branches",
    "reduced_velocity",
    "reduction_error",
    "sample_critical_manifold",
    "solve_fast_equilibrium",
    "stability_bound",
    "stability_margin_over_grid",
    "step_rk4",
]
