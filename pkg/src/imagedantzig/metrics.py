"""Prediction and surface-recovery metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SurfacePair",
    "mse",
    "rise",
    "zero_recovery",
    "nonzero_recovery",
    "snr",
    "rmse_mae",
    "ZERO_THRESHOLD",
]

ZERO_THRESHOLD = 1e-8


def _pair_arrays(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y_hat.shape != y.shape:
        raise ValueError("prediction and target lengths differ")
    if y.size == 0:
        raise ValueError("metrics need at least one value")
    return y_hat, y


@dataclass(frozen=True)
class SurfacePair:
    """True and estimated surfaces on one grid with quadrature weights.

    Weights default to equal cells covering the unit square.
    """

    truth: np.ndarray
    estimate: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=float).ravel()
        est = np.asarray(self.estimate, dtype=float).ravel()
        if truth.shape != est.shape:
            raise ValueError("truth and estimate shapes differ")
        w = (np.full(truth.size, 1.0 / truth.size) if self.weights is None
             else np.asarray(self.weights, dtype=float).ravel())
        if w.shape != truth.shape:
            raise ValueError("weights do not match the surfaces")
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "estimate", est)
        object.__setattr__(self, "weights", w)


def mse(y_hat, y) -> float:
    y_hat, y = _pair_arrays(y_hat, y)
    return float(np.mean((y_hat - y) ** 2))


def rmse_mae(y_hat, y) -> tuple[float, float]:
    y_hat, y = _pair_arrays(y_hat, y)
    err = y_hat - y
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))


def rise(pair: SurfacePair) -> float:
    """Integrated squared error relative to the integrated squared truth."""
    den = pair.weights @ pair.truth**2
    if den <= 0:
        raise ValueError("true surface is identically zero")
    return float(pair.weights @ (pair.estimate - pair.truth) ** 2 / den)


def zero_recovery(pair: SurfacePair, threshold: float = ZERO_THRESHOLD) -> float:
    """Weighted share of the true zero region where the estimate is also zero."""
    zero_true = np.abs(pair.truth) <= threshold
    den = pair.weights @ zero_true
    if den <= 0:
        raise ValueError("true surface has no zero region")
    hit = zero_true & (np.abs(pair.estimate) <= threshold)
    return float(pair.weights @ hit / den)


def nonzero_recovery(pair: SurfacePair, threshold: float = ZERO_THRESHOLD) -> float:
    """Weighted share of the true support where the estimate is nonzero."""
    nz_true = np.abs(pair.truth) > threshold
    den = pair.weights @ nz_true
    if den <= 0:
        raise ValueError("true surface is identically zero")
    hit = nz_true & (np.abs(pair.estimate) > threshold)
    return float(pair.weights @ hit / den)


def snr(f_values, sigma: float) -> float:
    """Sample variance of the signal over the noise variance."""
    f = np.asarray(f_values, dtype=float).ravel()
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if f.size < 2:
        raise ValueError("need at least two signal values")
    if not np.all(np.isfinite(f)):
        raise ValueError("signal values must be finite")
    return float(np.var(f, ddof=1) / sigma**2)
