"""Sparse and smooth scalar-on-image regression via a generalized Dantzig selector."""

from .bases import (BSplineBasis, GridSpec, PiecewiseConstantBasis, basis_matrix,
                    eval_basis, project_beta)
from .design import ImageSample, center, design_matrix, quadrature_weights
from .diffops import assemble_A, bivariate_operator, difference_matrix, pseudoinverse
from .gds import (GdsConfig, GdsFit, GeneralizedDantzigSelector, evaluate_surface,
                  fit, predict, refit)
from .lp import LPError, build_gds_lp, solve_lp

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis", "GridSpec", "PiecewiseConstantBasis", "basis_matrix",
    "eval_basis", "project_beta", "ImageSample", "center", "design_matrix",
    "quadrature_weights", "assemble_A", "bivariate_operator", "difference_matrix",
    "pseudoinverse", "GdsConfig", "GdsFit", "GeneralizedDantzigSelector",
    "evaluate_surface", "fit", "predict", "refit", "LPError", "build_gds_lp",
    "solve_lp",
]
