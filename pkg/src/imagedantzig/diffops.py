"""Difference operators and the stacked transform ``A``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .bases import BasisMatrix, GridSpec

__all__ = [
    "difference_scale",
    "RankDeficientError",
    "TransformA",
    "difference_matrix",
    "bivariate_operator",
    "assemble_A",
    "pseudoinverse",
]

VARIANTS = ("joint", "separable")


class RankDeficientError(np.linalg.LinAlgError):
    """The transform does not have full column rank."""

    def __init__(self, sigma_min: float, msg: str | None = None):
        self.sigma_min = sigma_min
        super().__init__(msg or f"transform is rank deficient "
                                f"(sigma_min={sigma_min:.3e})")


def difference_matrix(m: int, d: int) -> np.ndarray:
    """``(m - d) x m`` matrix of signed binomial coefficients.

    Row ``i`` holds ``(-1)^k * C(d, k)`` in column ``i + k``. ``d = 0``
    gives the identity.
    """
    if d < 0:
        raise ValueError("difference order must be >= 0")
    if d >= m:
        raise ValueError(f"difference order d={d} must be < m={m}")
    out = np.zeros((m - d, m))
    rows = np.arange(m - d)
    for k in range(d + 1):
        out[rows, rows + k] = (-1) ** k * comb(d, k, exact=True)
    return out


def bivariate_operator(m1: int, m2: int, d1: int, d2: int,
                       delta1: float = 1.0, delta2: float = 1.0) -> np.ndarray:
    """Scaled Kronecker product ``delta1^-d1 delta2^-d2 (D1 kron D2)``.

    The t-direction factor comes first, matching row-major grid order.
    """
    if delta1 <= 0 or delta2 <= 0:
        raise ValueError("grid spacings must be positive")
    scale = (1.0 / delta1) ** d1 * (1.0 / delta2) ** d2
    return scale * np.kron(difference_matrix(m1, d1), difference_matrix(m2, d2))


@dataclass(frozen=True)
class TransformA:
    """The ``L x p`` transform stacking ``w * B^T`` over difference blocks."""

    variant: str
    w: float
    d1: int
    d2: int
    grid: GridSpec
    values: np.ndarray
    sigma_min: float
    degenerate: bool = False

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def n_identity_rows(self) -> int:
        return self.grid.size

    def with_weight(self, w: float, Bt: BasisMatrix) -> "TransformA":
        return assemble_A(self.variant, w, self.d1, self.d2, self.grid, Bt)


def _difference_blocks(variant, d1, d2, grid):
    m1, m2, h1, h2 = grid.m1, grid.m2, grid.delta1, grid.delta2
    if variant == "joint":
        return [bivariate_operator(m1, m2, d1, d2, h1, h2)]
    if variant == "separable":
        return [bivariate_operator(m1, m2, d1, 0, h1, h2),
                bivariate_operator(m1, m2, 0, d2, h1, h2)]
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def difference_scale(variant: str, d1: int, d2: int, grid: GridSpec) -> float:
    """Largest spacing factor ``delta**-d`` carried by the difference rows."""
    f1 = grid.delta1 ** (-d1)
    f2 = grid.delta2 ** (-d2)
    if variant == "joint":
        return float(f1 * f2)
    if variant == "separable":
        return float(max(f1, f2))
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def assemble_A(variant: str, w: float, d1: int, d2: int, grid: GridSpec,
               Bt: BasisMatrix) -> TransformA:
    """Build ``A = [w I; difference blocks] B^T``.

    ``joint`` uses the mixed operator of orders ``(d1, d2)``;
    ``separable`` stacks the pure t-order-``d1`` and s-order-``d2``
    operators.
    """
    if w < 0:
        raise ValueError("weight w must be nonnegative")
    if Bt.grid.shape != grid.shape:
        raise ValueError("basis matrix was evaluated on a different grid")
    B = Bt.values
    blocks = [w * B] + [op @ B for op in _difference_blocks(variant, d1, d2, grid)]
    values = np.vstack(blocks)
    L, p = values.shape
    if L < p:
        sigma_min = 0.0
    else:
        sigma_min = float(np.linalg.svd(values, compute_uv=False)[-1])
    degenerate = bool(np.any(np.all(values == 0, axis=0)))
    if degenerate:
        sigma_min = 0.0
    return TransformA(variant, float(w), int(d1), int(d2), grid, values,
                      sigma_min, degenerate)


def pseudoinverse(A, rtol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose inverse of a full-column-rank transform via the SVD.

    Accepts a :class:`TransformA` or a plain matrix. Raises
    :class:`RankDeficientError` when the smallest singular value is below
    ``rtol`` times the largest.
    """
    M = A.values if isinstance(A, TransformA) else np.asarray(A, dtype=float)
    L, p = M.shape
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    smin = sv[-1] if L >= p else 0.0
    if L < p or smin <= rtol * max(sv[0], np.finfo(float).tiny):
        raise RankDeficientError(float(smin))
    return (Vt.T / sv) @ U.T
