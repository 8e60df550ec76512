"""Prescribed mean curvature radial graphs over sphere bundles.

Finite-difference discretization on lat-long fibers, homotopy continuation
with Newton polishing, and independent curvature checks.
"""

__version__ = "0.1.0"

from radialmc.curvature import (
    CurvatureSpec,
    GrowthReport,
    anisotropic_benchmark,
    check_growth,
    crossing_benchmark,
    eval_K,
    homogeneous,
    sphere_benchmark,
)
from radialmc.grid import BundleGrid, build_grid
from radialmc.operator import residual
from radialmc.oracle import embed, mean_curvature_direct, mean_curvature_discrete, verify
from radialmc.solver import SolverOptions, SolveResult, continuation_solve

__all__ = [
    "BundleGrid",
    "CurvatureSpec",
    "GrowthReport",
    "SolveResult",
    "SolverOptions",
    "anisotropic_benchmark",
    "build_grid",
    "check_growth",
    "continuation_solve",
    "crossing_benchmark",
    "embed",
    "eval_K",
    "homogeneous",
    "mean_curvature_direct",
    "mean_curvature_discrete",
    "residual",
    "sphere_benchmark",
    "verify",
]
