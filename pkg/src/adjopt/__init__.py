"""Adjoint-based gradients and state-constraint enforcement for PDE optimization."""

from .numerics import (
    BvpBoundaryKind,
    SobolevMetric,
    TimeSignal,
    UniformGrid1D,
    inner_product,
    solve_gradient_bvp,
    trapezoid,
)
from .descent import (
    DescentOptions,
    DescentTrace,
    ProblemAdapter,
    brent_minimize,
    descend,
    pr_cg_direction,
    project_tangent,
    retract_rescale,
)
from .kappa import KappaReport, KappaSpec, kappa_sweep, plateau_fit

__all__ = [
    "BvpBoundaryKind",
    "SobolevMetric",
    "TimeSignal",
    "UniformGrid1D",
    "inner_product",
    "solve_gradient_bvp",
    "trapezoid",
    "DescentOptions",
    "DescentTrace",
    "ProblemAdapter",
    "brent_minimize",
    "descend",
    "pr_cg_direction",
    "project_tangent",
    "retract_rescale",
    "KappaReport",
    "KappaSpec",
    "kappa_sweep",
    "plateau_fit",
]

__version__ = "0.1.0"
