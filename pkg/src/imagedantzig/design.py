"""Quadrature, design matrices and centering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bases import BasisMatrix, GridSpec

__all__ = [
    "ImageSample",
    "DesignSet",
    "quadrature_weights",
    "stack_images",
    "design_matrix",
    "center",
    "ZERO_NORM_TOL",
]

ZERO_NORM_TOL = 1e-12


@dataclass(frozen=True)
class ImageSample:
    """One predictor image sampled on a grid.

    Cells outside ``mask`` are zeroed so they contribute nothing to
    integrals.
    """

    id: str
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("image values must be a 2-D grid")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != vals.shape:
                raise ValueError("mask shape does not match image shape")
            vals = np.where(mask, vals, 0.0)
            object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "values", vals)


def quadrature_weights(grid: GridSpec, mask=None) -> np.ndarray:
    """Rectangle-rule weights, one per grid point (row-major).

    Every cell has area ``1 / (m1 * m2)`` of the unit square; masked-out
    cells get weight 0.
    """
    w = np.full(grid.size, 1.0 / grid.size)
    if mask is None:
        return w
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape and mask.size != grid.size:
        raise ValueError("mask does not match grid")
    mask = mask.ravel()
    if not mask.any():
        raise ValueError("every grid cell is masked out")
    return np.where(mask, w, 0.0)


def stack_images(images, grid: GridSpec | None = None) -> np.ndarray:
    """Coerce images to an ``(n, m1 * m2)`` float array.

    Accepts a sequence of :class:`ImageSample`, an ``(n, m1, m2)`` array
    or an already flattened ``(n, m1 * m2)`` array.
    """
    if isinstance(images, np.ndarray):
        arr = np.asarray(images, dtype=float)
    elif len(images) and isinstance(images[0], ImageSample):
        arr = np.stack([im.values for im in images])
    else:
        arr = np.asarray(images, dtype=float)
    if arr.ndim == 3:
        if grid is not None and arr.shape[1:] != grid.shape:
            raise ValueError(f"image shape {arr.shape[1:]} does not match "
                             f"grid {grid.shape}")
        arr = arr.reshape(arr.shape[0], -1)
    elif arr.ndim == 2:
        if grid is not None and arr.shape[1] != grid.size:
            raise ValueError(f"flattened images have {arr.shape[1]} values, "
                             f"grid has {grid.size}")
    else:
        raise ValueError("images must be 2-D (flattened) or 3-D")
    return arr


def design_matrix(images, Bt: BasisMatrix, weights=None) -> np.ndarray:
    """``X[i, j] = sum_g w_g x_i(g) b_j(g)``."""
    x = stack_images(images, Bt.grid)
    w = (quadrature_weights(Bt.grid) if weights is None
         else np.asarray(weights, dtype=float).ravel())
    if w.shape[0] != Bt.values.shape[0]:
        raise ValueError("weights do not match the basis grid")
    return x @ (w[:, None] * Bt.values)


@dataclass(frozen=True)
class DesignSet:
    X: np.ndarray
    y: np.ndarray
    x_means: np.ndarray
    y_mean: float
    Xc: np.ndarray
    yc: np.ndarray
    D: np.ndarray
    quad_weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def D_max(self) -> float:
        return float(self.D.max())

    @property
    def retained(self) -> np.ndarray:
        """Columns whose n-norm is large enough to carry a constraint."""
        return np.flatnonzero(self.D >= ZERO_NORM_TOL)

    @property
    def dropped(self) -> np.ndarray:
        return np.flatnonzero(self.D < ZERO_NORM_TOL)

    def correlation(self, eta) -> np.ndarray:
        """``(1/n) D^-1 Xc^T (yc - Xc eta)`` over the retained columns."""
        r = self.retained
        resid = self.yc - self.Xc @ eta
        return (self.Xc[:, r].T @ resid) / (self.n * self.D[r])


def center(X, y, quad_weights=None) -> DesignSet:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two samples to center")
    if y.shape[0] != n:
        raise ValueError("X and y have different numbers of rows")
    x_means = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_means
    yc = y - y_mean
    D = np.sqrt((Xc**2).mean(axis=0))
    return DesignSet(X, y, x_means, y_mean, Xc, yc, D, quad_weights)
