"""Spectral solvers for complex Monge-Ampere equations on flat tori C^n / (Z + iZ)^n, n = 1, 2."""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    Form11,
    GeometryError,
    GridSpec,
    ScalarField,
    TopDensity,
    ddc,
    integrate,
    random_admissible,
    torsion_top,
)
from .ma import curvature_constant, gauduchon, ma_density, mixed_density, trace  # noqa: E402
from .solvers import (  # noqa: E402
    SolveReport,
    SolverConfig,
    SolverError,
    solve_degenerate,
    solve_degenerate_lambda_zero,
    solve_lambda_positive,
    solve_lambda_zero,
)
from .flow import FlowConfig, FlowTrace, chern_ricci_flow  # noqa: E402

__all__ = [
    "GridSpec", "ScalarField", "TopDensity", "Form11", "GeometryError",
    "ddc", "integrate", "torsion_top", "random_admissible",
    "ma_density", "mixed_density", "curvature_constant", "trace", "gauduchon",
    "SolverConfig", "SolveReport", "SolverError", "solve_lambda_positive", "solve_lambda_zero",
    "solve_degenerate", "solve_degenerate_lambda_zero",
    "FlowConfig", "FlowTrace", "chern_ricci_flow",
]
