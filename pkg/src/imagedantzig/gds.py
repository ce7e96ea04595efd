"""The generalized Dantzig selector: fitting, prediction and refitting."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_response, make_basis
from .bases import Basis, BasisMatrix, GridSpec, basis_matrix
from .design import DesignSet, center, design_matrix, quadrature_weights
from .diffops import VARIANTS, TransformA, assemble_A
from .lp import LPError, build_gds_lp, solve_lp

__all__ = [
    "GdsConfig",
    "GdsFit",
    "Surface",
    "fit",
    "predict",
    "evaluate_surface",
    "refit",
    "GeneralizedDantzigSelector",
]


@dataclass(frozen=True)
class GdsConfig:
    basis: Basis
    grid: GridSpec
    variant: str = "separable"
    d1: int = 3
    d2: int = 3
    w: float = 1.0
    lam: float = 0.1
    zero_threshold: float = 1e-8
    solver: str = "highs"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.w < 0:
            raise ValueError("w must be nonnegative")
        if self.zero_threshold <= 0:
            raise ValueError("zero_threshold must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def replace(self, **changes) -> "GdsConfig":
        return dataclasses.replace(self, **changes)

    def describe(self) -> dict:
        return {"lam": self.lam, "w": self.w, "d1": self.d1, "d2": self.d2,
                "variant": self.variant}


@dataclass(frozen=True)
class GdsFit:
    """Result of one selector or refit solve.

    ``gamma_hat`` is recomputed as ``A @ eta_hat``; the LP's own split
    variables are kept in ``diagnostics['gamma_lp']``.
    """

    eta_hat: np.ndarray
    alpha_hat: float
    gamma_hat: np.ndarray
    active_set: np.ndarray
    config: GdsConfig
    transform: TransformA
    Bt: BasisMatrix
    diagnostics: dict = field(default_factory=dict)
    refitted: bool = False

    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def df(self) -> int:
        return int(self.active_set.size)


@dataclass(frozen=True)
class Surface:
    grid: GridSpec
    raw: np.ndarray
    truncated: np.ndarray


def _solve(ds, A, cfg, zero_rows=None, what="selector"):
    lp = build_gds_lp(ds, A, cfg.lam, zero_rows=zero_rows)
    sol = solve_lp(lp, method=cfg.solver)
    if not sol.ok:
        raise LPError(sol.status, f"{what} LP ended with status {sol.status!r} "
                                  f"(lam={cfg.lam:g}, w={A.w:g})")
    eta = lp.part(sol.z, "eta_plus") - lp.part(sol.z, "eta_minus")
    gamma_lp = lp.part(sol.z, "gamma_plus") - lp.part(sol.z, "gamma_minus")
    return lp, sol, eta, gamma_lp


def _package(ds, cfg, A, Bt, sol, eta, gamma_lp, refitted=False, extra=None):
    gamma = A.values @ eta
    corr = ds.correlation(eta)
    diag = {
        "objective": sol.objective,
        "primal_residual": sol.primal_residual,
        "constraint_max": float(np.abs(corr).max()) if corr.size else 0.0,
        "dropped_columns": ds.dropped.tolist(),
        "D_max": ds.D_max,
        "sigma_min": A.sigma_min,
        "iterations": sol.iterations,
        "gamma_lp": gamma_lp,
    }
    if extra:
        diag.update(extra)
    active = np.flatnonzero(np.abs(eta) > cfg.zero_threshold)
    alpha = float(ds.y_mean - ds.x_means @ eta)
    return GdsFit(eta, alpha, gamma, active, cfg, A, Bt, diag, refitted)


def fit(ds: DesignSet, cfg: GdsConfig, Bt: BasisMatrix | None = None,
        A: TransformA | None = None) -> GdsFit:
    """Fit the selector on centred data at ``cfg.lam``.

    Raises :class:`~imagedantzig.lp.LPError` when the LP is not solved
    to optimality.
    """
    if Bt is None:
        Bt = basis_matrix(cfg.basis, cfg.grid)
    if A is None:
        A = assemble_A(cfg.variant, cfg.w, cfg.d1, cfg.d2, cfg.grid, Bt)
    if ds.p != Bt.values.shape[1]:
        raise ValueError("design matrix and basis disagree on p")
    _, sol, eta, gamma_lp = _solve(ds, A, cfg)
    return _package(ds, cfg, A, Bt, sol, eta, gamma_lp)


def predict(fit: GdsFit, images, weights=None) -> np.ndarray:
    """``alpha_hat + X eta_hat`` for images on the fit grid."""
    X = design_matrix(images, fit.Bt, weights)
    return fit.alpha_hat + X @ fit.eta_hat


def evaluate_surface(fit: GdsFit, eval_grid: GridSpec | None = None) -> Surface:
    """Coefficient surface on a grid, raw and with small values zeroed."""
    if eval_grid is None:
        eval_grid = fit.Bt.grid
        B = fit.Bt.values
    else:
        B = basis_matrix(fit.config.basis, eval_grid).values
    raw = B @ fit.eta_hat
    trunc = np.where(np.abs(raw) < fit.config.zero_threshold, 0.0, raw)
    return Surface(eval_grid, raw, trunc)


def zero_set(fit: GdsFit) -> np.ndarray:
    """Grid indices where the truncated fitted surface vanishes."""
    return np.flatnonzero(evaluate_surface(fit).truncated == 0.0)


def refit(fit: GdsFit, ds: DesignSet, lambda2: float | None = None) -> GdsFit:
    """Second solve that removes shrinkage on the detected support.

    The weighted identity block is dropped (``w = 0``) and the surface
    is pinned to zero on every grid point where the first fit vanished.
    Raises :class:`~imagedantzig.lp.LPError` when those equalities
    cannot be met together with the correlation bound.
    """
    cfg = fit.config.replace(w=0.0, lam=fit.lam if lambda2 is None else lambda2)
    Bt = fit.Bt
    idx = zero_set(fit)
    Z = Bt.values[idx]
    A0 = assemble_A(cfg.variant, 0.0, cfg.d1, cfg.d2, cfg.grid, Bt)
    try:
        _, sol, eta, gamma_lp = _solve(ds, A0, cfg, zero_rows=Z, what="refit")
    except LPError as err:
        if err.status == "infeasible":
            raise LPError("infeasible", "refit infeasible: the zero-set "
                          f"equality block B_I0 eta = 0 ({len(idx)} rows) "
                          "conflicts with the correlation constraint") from err
        raise
    if len(idx):
        # remove solver round-off from the pinned equalities
        resid = Z @ eta
        if np.abs(resid).max() > 0:
            eta = eta - np.linalg.lstsq(Z, resid, rcond=None)[0]
    extra = {"zero_set_size": int(len(idx)),
             "vacuous_refit": len(idx) == 0,
             "zero_set_residual": float(np.abs(Z @ eta).max()) if len(idx) else 0.0}
    return _package(ds, cfg, A0, Bt, sol, eta, gamma_lp, refitted=True, extra=extra)


class GeneralizedDantzigSelector(RegressorMixin, BaseEstimator):
    """Sparse and smooth scalar-on-image regression.

    Images are read on a pixel-centre grid over the unit square and the
    coefficient surface is expanded in a piecewise-constant or tensor
    B-spline basis. The basis coefficients minimise the l1 norm of
    ``A eta`` (surface values and finite differences on the grid) under a
    bound on the scaled residual correlations.

    Parameters
    ----------
    lam : float, default=0.1
        Bound on ``|| (1/n) D^-1 X^T (y - X eta) ||_inf``.
    w : float, default=1.0
        Weight on the surface-value rows of ``A`` (sparsity).
    diff_orders : (int, int), default=(3, 3)
        Difference orders in t and s.
    variant : {'separable', 'joint'}, default='separable'
        Separate t and s difference blocks, or one mixed block.
    basis : {'piecewise', 'bspline'}, default='piecewise'
    pieces : (int, int), default=(20, 20)
        Piece counts for the piecewise basis.
    spline_order : (int, int), default=(3, 3)
        B-spline orders (degree + 1).
    interior_knots : (int, int), default=(7, 7)
    grid_shape : (int, int), optional
        Needed when images are passed flattened on a non-square grid.
    mask : bool array of grid shape, optional
        Cells to include in the integrals; others get zero weight.
    refit : bool, default=False
        Run the support-restricted second solve after fitting.
    refit_lam : float, optional
        Bound used by the refit; defaults to ``lam``.
    zero_threshold : float, default=1e-8
    solver : {'highs', 'simplex'}, default='highs'

    Attributes
    ----------
    coef_ : ndarray of shape (p,)
        Basis coefficients.
    intercept_ : float
    gamma_ : ndarray of shape (L,)
        ``A @ coef_``.
    active_set_ : ndarray
        Indices of nonzero coefficients.
    grid_ : GridSpec
    fit_ : GdsFit
        Full result, including diagnostics.
    """

    def __init__(self, lam=0.1, w=1.0, diff_orders=(3, 3), variant="separable",
                 basis="piecewise", pieces=(20, 20), spline_order=(3, 3),
                 interior_knots=(7, 7), grid_shape=None, mask=None, refit=False,
                 refit_lam=None, zero_threshold=1e-8, solver="highs"):
        self.lam = lam
        self.w = w
        self.diff_orders = diff_orders
        self.variant = variant
        self.basis = basis
        self.pieces = pieces
        self.spline_order = spline_order
        self.interior_knots = interior_knots
        self.grid_shape = grid_shape
        self.mask = mask
        self.refit = refit
        self.refit_lam = refit_lam
        self.zero_threshold = zero_threshold
        self.solver = solver

    def _prepare(self, X, y):
        Xf, shape = check_images(X, self.grid_shape)
        y = check_response(y, Xf.shape[0])
        grid = GridSpec.midpoints(*shape)
        weights = quadrature_weights(grid, self.mask)
        spec = make_basis(self.basis, self.pieces, self.spline_order,
                          self.interior_knots)
        Bt = basis_matrix(spec, grid)
        ds = center(design_matrix(Xf, Bt, weights), y, weights)
        return Xf, y, ds, Bt, weights

    def _base_config(self, Bt, lam=None, w=None, orders=None):
        d1, d2 = self.diff_orders if orders is None else orders
        return GdsConfig(Bt.spec, Bt.grid, self.variant, int(d1), int(d2),
                         float(self.w if w is None else w),
                         float(self.lam if lam is None else lam),
                         float(self.zero_threshold), self.solver)

    def fit(self, X, y):
        """Fit on images ``X`` of shape ``(n, m1, m2)`` and responses ``y``."""
        _, _, ds, Bt, weights = self._prepare(X, y)
        result = fit(ds, self._base_config(Bt), Bt)
        if self.refit:
            result = refit(result, ds, self.refit_lam)
        self._set_fitted(result, weights, ds)
        return self

    def _set_fitted(self, result, weights, ds):
        self.fit_ = result
        self.coef_ = result.eta_hat
        self.intercept_ = result.alpha_hat
        self.gamma_ = result.gamma_hat
        self.active_set_ = result.active_set
        self.grid_ = result.config.grid
        self.weights_ = weights
        self.n_features_in_ = self.grid_.size
        self.design_ = ds

    def predict(self, X):
        check_is_fitted(self, "coef_")
        Xf, _ = check_images(X, self.grid_.shape)
        return predict(self.fit_, Xf, self.weights_)

    def surface(self, grid: GridSpec | None = None, truncated: bool = True):
        """Fitted coefficient surface as an ``(m1, m2)`` array."""
        check_is_fitted(self, "coef_")
        surf = evaluate_surface(self.fit_, grid)
        vals = surf.truncated if truncated else surf.raw
        return vals.reshape(surf.grid.shape)
