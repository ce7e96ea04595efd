"""Evaluation grids and bivariate bases on the unit square.

Two basis families are supported: tensor-product B-splines on clamped,
evenly spaced knots, and piecewise-constant indicators on an even
partition. Basis functions are linearized with ``j = k * p2 + l``
(0-based), i.e. the t-direction index varies slowest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "GridSpec",
    "BSplineBasis",
    "PiecewiseConstantBasis",
    "BasisMatrix",
    "Projection",
    "bspline_design",
    "eval_basis",
    "basis_matrix",
    "basis_l2_norms",
    "project_beta",
]

_GAUSS_ORDER = 8
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Evenly spaced ``m1 x m2`` grid inside ``[0, 1]^2``.

    Points are ``(t0 + k * delta1, s0 + l * delta2)`` ordered row-major,
    so the flat index of ``(k, l)`` is ``k * m2 + l``.
    """

    m1: int
    m2: int
    delta1: float
    delta2: float
    t0: float = 0.0
    s0: float = 0.0

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("grid needs at least one point per direction")
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise ValueError("grid spacings must be positive")
        t_end = self.t0 + self.delta1 * (self.m1 - 1)
        s_end = self.s0 + self.delta2 * (self.m2 - 1)
        lo, hi = -_EDGE_TOL, 1 + _EDGE_TOL
        if self.t0 < lo or t_end > hi or self.s0 < lo or s_end > hi:
            raise ValueError("grid points must lie in [0, 1] x [0, 1]")

    @classmethod
    def midpoints(cls, m1: int, m2: int | None = None) -> "GridSpec":
        """Pixel-centre grid: ``t_k = (k + 1/2) / m1``."""
        m2 = m1 if m2 is None else m2
        return cls(m1, m2, 1.0 / m1, 1.0 / m2, 0.5 / m1, 0.5 / m2)

    @classmethod
    def endpoints(cls, m1: int, m2: int | None = None) -> "GridSpec":
        """Grid including both ends: ``t_k = k / (m1 - 1)``."""
        m2 = m1 if m2 is None else m2
        d1 = 1.0 / (m1 - 1) if m1 > 1 else 1.0
        d2 = 1.0 / (m2 - 1) if m2 > 1 else 1.0
        return cls(m1, m2, d1, d2, 0.0, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)

    @property
    def size(self) -> int:
        return self.m1 * self.m2

    @property
    def t(self) -> np.ndarray:
        return np.clip(self.t0 + self.delta1 * np.arange(self.m1), 0.0, 1.0)

    @property
    def s(self) -> np.ndarray:
        return np.clip(self.s0 + self.delta2 * np.arange(self.m2), 0.0, 1.0)

    @property
    def points(self) -> np.ndarray:
        """``(m1 * m2, 2)`` array of ``(t, s)`` pairs, row-major."""
        tt, ss = np.meshgrid(self.t, self.s, indexing="ij")
        return np.column_stack([tt.ravel(), ss.ravel()])

    def to_dict(self) -> dict:
        return {"m1": self.m1, "m2": self.m2, "t0": self.t0, "s0": self.s0,
                "delta1": self.delta1, "delta2": self.delta2}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(int(d["m1"]), int(d["m2"]), float(d["delta1"]),
                   float(d["delta2"]), float(d.get("t0", 0.0)), float(d.get("s0", 0.0)))


def _clamped_knots(order: int, n_interior: int) -> np.ndarray:
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    return np.concatenate([np.zeros(order), interior, np.ones(order)])


def bspline_design(x, order: int, n_interior: int) -> np.ndarray:
    """Univariate clamped B-spline basis evaluated at ``x``.

    Cox-de Boor recursion with evenly spaced interior knots. ``order`` is
    the polynomial order (degree + 1), so the basis has
    ``order + n_interior`` functions. The right end point belongs to the
    last knot span.

    Returns
    -------
    ndarray of shape (len(x), order + n_interior)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if order < 1:
        raise ValueError("spline order must be >= 1")
    if n_interior < 0:
        raise ValueError("number of interior knots must be >= 0")
    knots = _clamped_knots(order, n_interior)
    n_basis = order + n_interior

    xc = x[:, None]
    B = ((knots[:-1] <= xc) & (xc < knots[1:])).astype(float)
    last = np.flatnonzero(knots[:-1] < knots[1:])[-1]
    at_end = x >= knots[-1]
    B[at_end] = 0.0
    B[at_end, last] = 1.0

    for k in range(1, order):
        n_new = len(knots) - k - 1
        out = np.zeros((len(x), n_new))
        for i in range(n_new):
            den = knots[i + k] - knots[i]
            if den > 0:
                out[:, i] += (x - knots[i]) / den * B[:, i]
            den = knots[i + k + 1] - knots[i + 1]
            if den > 0:
                out[:, i] += (knots[i + k + 1] - x) / den * B[:, i + 1]
        B = out
    return B[:, :n_basis]


@dataclass(frozen=True)
class BSplineBasis:
    """Tensor-product B-spline basis.

    Parameters
    ----------
    order : (int, int)
        Polynomial orders in t and s (degree + 1).
    interior_knots : (int, int)
        Number of evenly spaced interior knots in each direction.
    """

    order: tuple[int, int] = (3, 3)
    interior_knots: tuple[int, int] = (7, 7)
    kind: str = field(default="bspline", init=False)

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        object.__setattr__(
            self, "interior_knots", tuple(int(v) for v in self.interior_knots)
        )
        if min(self.order) < 1 or min(self.interior_knots) < 0:
            raise ValueError("invalid B-spline orders or knot counts")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.order[0] + self.interior_knots[0],
                self.order[1] + self.interior_knots[1])

    @property
    def p(self) -> int:
        p1, p2 = self.dims
        return p1 * p2

    def univariate(self, axis: int, x) -> np.ndarray:
        return bspline_design(x, self.order[axis], self.interior_knots[axis])

    def univariate_l2(self, axis: int) -> np.ndarray:
        """Exact ``int phi_k^2`` by per-span Gauss-Legendre quadrature."""
        knots = np.unique(_clamped_knots(self.order[axis],
                                         self.interior_knots[axis]))
        nodes, wts = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
        a, b = knots[:-1, None], knots[1:, None]
        x = (0.5 * (b - a) * nodes + 0.5 * (a + b)).ravel()
        w = (0.5 * (b - a) * wts).ravel()
        return w @ self.univariate(axis, x) ** 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "order": list(self.order),
                "interior_knots": list(self.interior_knots)}


@dataclass(frozen=True)
class PiecewiseConstantBasis:
    """Indicators of an even ``p1 x p2`` partition of the unit square.

    Pieces are half-open ``[t_k, t_{k+1})`` except the last one in each
    direction, which is closed at 1.
    """

    pieces: tuple[int, int] = (20, 20)
    kind: str = field(default="piecewise", init=False)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(int(v) for v in self.pieces))
        if min(self.pieces) < 1:
            raise ValueError("piece counts must be >= 1")

    @property
    def dims(self) -> tuple[int, int]:
        return self.pieces

    @property
    def p(self) -> int:
        return self.pieces[0] * self.pieces[1]

    def piece_index(self, axis: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.pieces[axis]
        breaks = np.linspace(0.0, 1.0, n + 1)
        idx = np.searchsorted(breaks, x, side="right") - 1
        return np.clip(idx, 0, n - 1)

    def univariate(self, axis: int, x) -> np.ndarray:
        idx = self.piece_index(axis, x)
        out = np.zeros((len(idx), self.pieces[axis]))
        out[np.arange(len(idx)), idx] = 1.0
        return out

    def univariate_l2(self, axis: int) -> np.ndarray:
        return np.full(self.pieces[axis], 1.0 / self.pieces[axis])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pieces": list(self.pieces)}


Basis = Union[BSplineBasis, PiecewiseConstantBasis]


def basis_from_dict(d: dict) -> Basis:
    kind = d.get("kind", "piecewise")
    if kind == "bspline":
        return BSplineBasis(tuple(d.get("order", (3, 3))),
                            tuple(d.get("interior_knots", (7, 7))))
    if kind == "piecewise":
        return PiecewiseConstantBasis(tuple(d.get("pieces", (20, 20))))
    raise ValueError(f"unknown basis kind {kind!r}")


def _check_domain(t, s):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if t.shape != s.shape:
        raise ValueError("t and s must have the same shape")
    if (np.any(t < 0) or np.any(t > 1) or np.any(s < 0) or np.any(s > 1)
            or not (np.all(np.isfinite(t)) and np.all(np.isfinite(s)))):
        raise ValueError("coordinates must lie in [0, 1] x [0, 1]")
    return t, s


def _tensor_eval(spec: Basis, t, s) -> np.ndarray:
    t, s = _check_domain(t, s)
    Bt = spec.univariate(0, t)
    Bs = spec.univariate(1, s)
    return (Bt[:, :, None] * Bs[:, None, :]).reshape(len(t), -1)


def eval_basis(spec: Basis, t: float, s: float) -> np.ndarray:
    """All ``p`` basis functions at the single point ``(t, s)``."""
    return _tensor_eval(spec, t, s)[0]


@dataclass(frozen=True)
class BasisMatrix:
    """Basis evaluations on a grid: ``values[i, j] = b_j(point_i)``."""

    values: np.ndarray
    grid: GridSpec
    spec: Basis

    @property
    def shape(self):
        return self.values.shape


def basis_matrix(spec: Basis, grid: GridSpec) -> BasisMatrix:
    pts = grid.points
    return BasisMatrix(_tensor_eval(spec, pts[:, 0], pts[:, 1]), grid, spec)


def basis_l2_norms(spec: Basis) -> tuple[np.ndarray, float]:
    """Squared L2 norms of every basis function and their root-sum ``C_B``."""
    sq = np.outer(spec.univariate_l2(0), spec.univariate_l2(1)).ravel()
    return sq, float(np.sqrt(sq.sum()))


@dataclass(frozen=True)
class Projection:
    eta_star: np.ndarray
    omega_B: float
    rank_deficient: bool = False


def project_beta(beta: Callable, spec: Basis, grid: GridSpec,
                 weights=None) -> Projection:
    """Least-squares projection of a surface onto the basis span.

    The inner product is the grid quadrature ``sum_g w_g f(g) h(g)``;
    equal weights ``1 / (m1 * m2)`` are used when ``weights`` is None.

    Parameters
    ----------
    beta : callable
        Vectorized surface ``beta(t, s)``.
    spec : basis specification
    grid : GridSpec
    weights : array of shape (m1 * m2,), optional

    Returns
    -------
    Projection
        ``eta_star``, the quadrature L2 residual norm ``omega_B`` and a
        flag set when the Gram matrix was singular.
    """
    pts = grid.points
    w = (np.full(grid.size, 1.0 / grid.size) if weights is None
         else np.asarray(weights, dtype=float).ravel())
    vals = np.asarray(beta(pts[:, 0], pts[:, 1]), dtype=float).ravel()
    B = _tensor_eval(spec, pts[:, 0], pts[:, 1])
    BW = B * w[:, None]
    gram = B.T @ BW
    rhs = BW.T @ vals
    rank = np.linalg.matrix_rank(gram)
    deficient = rank < gram.shape[0]
    if deficient:
        warnings.warn("basis Gram matrix is singular on this grid; "
                      "using the pseudoinverse", RuntimeWarning, stacklevel=2)
        eta = np.linalg.pinv(gram) @ rhs
    else:
        eta = np.linalg.solve(gram, rhs)
    resid = vals - B @ eta
    omega = float(np.sqrt(max(w @ resid**2, 0.0)))
    return Projection(eta, omega, bool(deficient))
