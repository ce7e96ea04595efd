"""Synthetic scalar-on-image data: coefficient surfaces, predictor
processes, noise calibration and a replicated-study runner."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .bases import GridSpec, bspline_design
from .design import quadrature_weights
from .metrics import SurfacePair, mse, nonzero_recovery, rise, zero_recovery, snr

__all__ = [
    "BETA_SURFACES",
    "beta_eval",
    "PredictorProcess",
    "PROCESSES",
    "SimScenario",
    "SimData",
    "rng_stream",
    "sample_predictor",
    "signal",
    "calibrate_noise",
    "generate_dataset",
    "OracleEstimator",
    "ReplicateReport",
    "run_replicated",
]


# ---------------------------------------------------------------------------
# coefficient surfaces

def _bump_edges(t):
    t = np.asarray(t, dtype=float)
    left = np.sin(np.pi * t) - np.sin(np.pi / 4)
    right = np.sin(3 * np.pi / 4) - np.sin(np.pi * t)
    return np.where(t <= 0.25, left, np.where(t >= 0.75, right, 0.0))


def _bump_centre(t):
    t = np.asarray(t, dtype=float)
    inside = (t >= 0.3) & (t <= 0.7)
    return np.where(inside, 100.0 * (np.exp((t - 0.5) ** 2) - np.exp(0.04)), 0.0)


def _edges_surface(t, s):
    return _bump_edges(t) * _bump_edges(s)


def _centre_surface(t, s):
    return _bump_centre(t) * _bump_centre(s)


def _two_discs(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    a = (t - 0.6) ** 2 + (s - 0.4) ** 2
    b = (t - 0.4) ** 2 + (s - 0.6) ** 2
    # the discs overlap; adding both terms keeps beta(t, s) = -beta(s, t)
    lower = np.where(a <= 0.04, 200.0 * (a - 0.04), 0.0)
    upper = np.where(b <= 0.04, 200.0 * (0.04 - b), 0.0)
    return lower + upper


BETA_SURFACES = {"beta1": _edges_surface, "beta2": _centre_surface,
                 "beta3": _two_discs}


def beta_eval(beta_id: str, t, s):
    """Closed-form value of a named test surface at ``(t, s)``."""
    try:
        f = BETA_SURFACES[beta_id]
    except KeyError:
        raise ValueError(f"unknown surface {beta_id!r}; choose from "
                         f"{sorted(BETA_SURFACES)}") from None
    out = f(t, s)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# predictor processes

@dataclass(frozen=True)
class PredictorProcess:
    """Random images ``x = sum a_jk psi_j(t) psi_k(s)`` with iid N(0, 1)
    coefficients over a clamped B-spline basis."""

    name: str
    order: int
    interior_knots: int

    @property
    def m(self) -> int:
        return self.order + self.interior_knots

    def univariate(self, x) -> np.ndarray:
        return bspline_design(x, self.order, self.interior_knots)


PROCESSES = {"P1": PredictorProcess("P1", 4, 6),
             "P2": PredictorProcess("P2", 5, 15)}


def _process(p) -> PredictorProcess:
    if isinstance(p, PredictorProcess):
        return p
    try:
        return PROCESSES[p]
    except KeyError:
        raise ValueError(f"unknown process {p!r}; choose from {sorted(PROCESSES)}") from None


@dataclass(frozen=True)
class SimScenario:
    beta: str = "beta2"
    process: str = "P1"
    n: int = 400
    snr_target: float = 4.0
    grid: GridSpec = field(default_factory=lambda: GridSpec.midpoints(20))
    seed: int = 0
    n_test: int = 10_000
    n_pilot: int = 10_000
    sigma: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.snr_target <= 0:
            raise ValueError("snr_target must be positive")
        if self.beta not in BETA_SURFACES:
            raise ValueError(f"unknown surface {self.beta!r}")
        _process(self.process)

    @property
    def beta_grid(self) -> np.ndarray:
        pts = self.grid.points
        return beta_eval(self.beta, pts[:, 0], pts[:, 1])

    def to_dict(self) -> dict:
        return {"beta": self.beta, "process": self.process, "n": self.n,
                "snr_target": self.snr_target, "grid": self.grid.to_dict(),
                "seed": self.seed, "n_test": self.n_test, "n_pilot": self.n_pilot,
                "sigma": self.sigma}


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    Keys name a stream (pilot, training, replicate ``r``) so every part of
    a study can be regenerated alone, in any order.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


_PILOT, _TRAIN, _VALID, _TEST = 0, 1, 2, 3


def sample_predictor(process, grid: GridSpec, rng: np.random.Generator | None = None,
                     n: int = 1, coef=None) -> np.ndarray:
    """Draw ``n`` images on ``grid``; returns ``(n, m1, m2)``.

    ``coef`` of shape ``(n, m, m)`` (or ``(m, m)``) replaces the random draw.
    """
    proc = _process(process)
    Pt = proc.univariate(grid.t)
    Ps = proc.univariate(grid.s)
    if coef is None:
        coef = rng.standard_normal((n, proc.m, proc.m))
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 2:
        coef = coef[None]
    return np.einsum("aj,njk,bk->nab", Pt, coef, Ps, optimize=True)


def signal(images, beta_values, weights) -> np.ndarray:
    """Quadrature value of the image-surface integral for each image."""
    x = np.asarray(images, dtype=float).reshape(len(images), -1)
    return x @ (np.asarray(weights) * np.asarray(beta_values).ravel())


def calibrate_noise(scenario: SimScenario, n_pilot: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Noise level giving the target signal-to-noise ratio on a pilot sample."""
    n_pilot = scenario.n_pilot if n_pilot is None else n_pilot
    if n_pilot < 100:
        raise ValueError("n_pilot must be at least 100")
    rng = rng_stream(scenario.seed, _PILOT) if rng is None else rng
    w = quadrature_weights(scenario.grid)
    beta = scenario.beta_grid
    f_all = []
    for start in range(0, n_pilot, 2000):
        k = min(2000, n_pilot - start)
        imgs = sample_predictor(scenario.process, scenario.grid, rng, k)
        f_all.append(signal(imgs, beta, w))
    f = np.concatenate(f_all)
    var = float(np.var(f, ddof=1))
    if not np.isfinite(var) or var <= 0:
        raise ValueError("pilot signal variance is degenerate")
    return math.sqrt(var / scenario.snr_target)


@dataclass(frozen=True)
class SimData:
    images: np.ndarray
    y: np.ndarray
    f_true: np.ndarray
    sigma: float


def _draw(scenario, n, sigma, rng, beta_values=None):
    w = quadrature_weights(scenario.grid)
    beta = scenario.beta_grid if beta_values is None else beta_values
    imgs = sample_predictor(scenario.process, scenario.grid, rng, n)
    f = signal(imgs, beta, w)
    y = f + sigma * rng.standard_normal(n)
    return SimData(imgs, y, f, sigma)


def generate_dataset(scenario: SimScenario, n: int | None = None,
                     sigma: float | None = None, stream: tuple = (_TRAIN,),
                     beta_values=None) -> SimData:
    """Training data for ``scenario``; a pure function of its fields.

    ``sigma`` overrides both the scenario value and the pilot calibration.
    ``beta_values`` replaces the true surface on the grid.
    """
    if sigma is None:
        sigma = scenario.sigma if scenario.sigma is not None else calibrate_noise(scenario)
    n = scenario.n if n is None else n
    return _draw(scenario, n, sigma, rng_stream(scenario.seed, *stream), beta_values)


# ---------------------------------------------------------------------------
# replicated runs

class OracleEstimator:
    """Plug-in estimator that returns the true surface; for checking the runner."""

    def __init__(self, scenario: SimScenario):
        self.scenario = scenario

    def get_params(self, deep=True):
        return {"scenario": self.scenario}

    def set_params(self, **params):
        for k, v in params.items():
            setattr(self, k, v)
        return self

    def fit(self, X, y):
        self.weights_ = quadrature_weights(self.scenario.grid)
        return self

    def predict(self, X):
        return signal(X, self.scenario.beta_grid, self.weights_)

    def surface(self, grid=None, truncated=True):
        return self.scenario.beta_grid.reshape(self.scenario.grid.shape)


@dataclass
class ReplicateReport:
    """Per-replicate rows and per-estimator summaries."""

    rows: list
    summary: dict
    sigma: float

    METRICS = ("mse", "rise", "r1", "r2")

    def to_csv(self, fh) -> None:
        fh.write("estimator,replicate,status,mse,rise,r1,r2\n")
        for r in self.rows:
            vals = ",".join(repr(float(r[m])) if r[m] is not None else ""
                            for m in self.METRICS)
            fh.write(f"{r['estimator']},{r['replicate']},{r['status']},{vals}\n")

    def summary_csv(self, fh) -> None:
        fh.write("estimator,n_ok,n_failed," + ",".join(
            f"{m}_mean,{m}_se" for m in self.METRICS) + "\n")
        for name, s in self.summary.items():
            cells = []
            for m in self.METRICS:
                for key in (f"{m}_mean", f"{m}_se"):
                    v = s[key]
                    cells.append("" if v is None else repr(float(v)))
            fh.write(f"{name},{s['n_ok']},{s['n_failed']}," + ",".join(cells) + "\n")


def _summarise(rows, names):
    summary = {}
    for name in names:
        ok = [r for r in rows if r["estimator"] == name and r["status"] == "ok"]
        s = {"n_ok": len(ok), "n_failed": sum(1 for r in rows if r["estimator"] == name
                                                and r["status"] != "ok")}
        for m in ReplicateReport.METRICS:
            vals = np.array([r[m] for r in ok if r[m] is not None], dtype=float)
            s[f"{m}_mean"] = float(vals.mean()) if vals.size else None
            s[f"{m}_se"] = (float(vals.std(ddof=1) / np.sqrt(vals.size))
                            if vals.size > 1 else None)
        summary[name] = s
    return summary


def _score(est, scenario, test, weights):
    beta = scenario.beta_grid
    est_surface = np.asarray(est.surface()).ravel()
    pair = SurfacePair(beta, est_surface, weights)
    out = {"mse": mse(est.predict(test.images), test.y), "rise": rise(pair)}
    try:
        out["r1"] = zero_recovery(pair)
    except ValueError:
        out["r1"] = None
    try:
        out["r2"] = nonzero_recovery(pair)
    except ValueError:
        out["r2"] = None
    return out


def run_one(scenario, estimators, rep, sigma):
    """All estimators on replicate ``rep``; returns report rows."""
    train = _draw(scenario, scenario.n, sigma, rng_stream(scenario.seed, _TRAIN, rep))
    valid = None
    test = _draw(scenario, scenario.n_test, sigma, rng_stream(scenario.seed, _TEST, rep))
    weights = quadrature_weights(scenario.grid)
    rows = []
    for name, proto in estimators.items():
        est = clone(proto) if hasattr(proto, "get_params") and not isinstance(
            proto, OracleEstimator) else proto
        row = {"estimator": name, "replicate": rep, "status": "ok",
               "mse": None, "rise": None, "r1": None, "r2": None}
        try:
            if getattr(est, "needs_validation", False):
                if valid is None:
                    valid = _draw(scenario, scenario.n, sigma,
                                  rng_stream(scenario.seed, _VALID, rep))
                est.fit(train.images, train.y, validation=(valid.images, valid.y))
            else:
                est.fit(train.images, train.y)
            row.update(_score(est, scenario, test, weights))
        except Exception as err:  # failures are counted, not fatal
            row["status"] = f"failed: {type(err).__name__}: {err}".replace(",", ";")
        rows.append(row)
    return rows


def run_replicated(scenario: SimScenario, estimators: dict, n_reps: int,
                   n_jobs: int | None = None) -> ReplicateReport:
    """Fit every estimator on ``n_reps`` independent replicates.

    Each replicate draws its training, validation and test sets from
    streams keyed by ``(seed, replicate)``, so results do not depend on
    ``n_jobs``. MSE is measured on a fresh test set of ``scenario.n_test``
    draws; RISE and the recovery rates on the scenario grid.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    sigma = scenario.sigma if scenario.sigma is not None else calibrate_noise(scenario)
    if n_jobs is None or n_jobs == 1:
        chunks = [run_one(scenario, estimators, r, sigma) for r in range(n_reps)]
    else:
        from joblib import Parallel, delayed
        chunks = Parallel(n_jobs=n_jobs)(
            delayed(run_one)(scenario, estimators, r, sigma) for r in range(n_reps))
    rows = [row for chunk in chunks for row in chunk]
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        warnings.warn(f"{len(failed)} estimator fits failed", RuntimeWarning)
    return ReplicateReport(rows, _summarise(rows, list(estimators)), sigma)


def realized_snr(scenario: SimScenario, sigma: float, n_check: int = 10_000,
                 key: int = 99) -> float:
    """Signal-to-noise ratio of ``sigma`` on a fresh sample of ``n_check`` images."""
    rng = rng_stream(scenario.seed, key)
    w = quadrature_weights(scenario.grid)
    imgs = sample_predictor(scenario.process, scenario.grid, rng, n_check)
    return snr(signal(imgs, scenario.beta_grid, w), sigma)
