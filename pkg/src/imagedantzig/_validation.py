"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .bases import BSplineBasis, GridSpec, PiecewiseConstantBasis


def check_images(X, grid_shape=None):
    """Validate an image stack and return it flattened with its grid shape.

    ``X`` may be ``(n, m1, m2)`` or ``(n, m1 * m2)``; the flat form needs
    ``grid_shape``.
    """
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim == 3:
        shape = X.shape[1:]
        if grid_shape is not None and tuple(grid_shape) != shape:
            raise ValueError(f"images have shape {shape}, expected {tuple(grid_shape)}")
        return X.reshape(X.shape[0], -1), shape
    if X.ndim != 2:
        raise ValueError("images must be a 2-D or 3-D array")
    if grid_shape is None:
        side = int(round(np.sqrt(X.shape[1])))
        if side * side != X.shape[1]:
            raise ValueError("flattened images need grid_shape unless the grid is square")
        grid_shape = (side, side)
    grid_shape = tuple(int(v) for v in grid_shape)
    if grid_shape[0] * grid_shape[1] != X.shape[1]:
        raise ValueError(f"grid_shape {grid_shape} does not match {X.shape[1]} features")
    return X, grid_shape


def check_response(y, n):
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if y.ndim != 1:
        y = y.ravel()
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries, expected {n}")
    return y


def make_basis(kind, pieces, spline_order, interior_knots):
    if kind == "piecewise":
        return PiecewiseConstantBasis(tuple(pieces))
    if kind == "bspline":
        return BSplineBasis(tuple(spline_order), tuple(interior_knots))
    raise ValueError(f"basis must be 'piecewise' or 'bspline', got {kind!r}")


def is_aligned(basis, grid: GridSpec) -> bool:
    """True when a piecewise basis has exactly one grid point per piece."""
    if not isinstance(basis, PiecewiseConstantBasis):
        return False
    if basis.pieces != grid.shape:
        return False
    t_idx = basis.piece_index(0, grid.t)
    s_idx = basis.piece_index(1, grid.s)
    return bool(np.array_equal(t_idx, np.arange(grid.m1))
                and np.array_equal(s_idx, np.arange(grid.m2)))
