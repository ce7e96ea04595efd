"""Choosing lambda, w and the difference orders.

Three criteria are offered: error on a held-out validation set, an
information criterion on the training fit, and k-fold cross-validation.
Every candidate fit is independent, so ``n_jobs`` only changes speed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from ._validation import check_images, check_response, is_aligned
from .bases import basis_matrix
from .design import center, design_matrix, quadrature_weights
from .diffops import assemble_A, difference_scale
from .gds import GdsConfig, GdsFit, GeneralizedDantzigSelector, fit, refit
from .lp import LPError

__all__ = [
    "TuneGrid",
    "TuneResult",
    "TuningError",
    "lambda_grid",
    "default_grid",
    "default_weights",
    "select_validation",
    "select_aic",
    "kfold_cv",
    "TunedDantzigSelector",
    "RSS_ZERO_SENTINEL",
]

RSS_ZERO_SENTINEL = -1e300


class TuningError(RuntimeError):
    """A candidate fit failed; ``config`` names the candidate."""

    def __init__(self, config: GdsConfig, cause: Exception):
        self.config = config
        super().__init__(f"fit failed for {config.describe()}: {cause}")


def lambda_grid(n: int, p: int, count: int = 20, c_min: float = 0.05,
                c_max: float = 20.0) -> np.ndarray:
    """``c * sqrt(log p / n)`` for ``count`` log-spaced ``c``, largest first."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0 < c_min <= c_max:
        raise ValueError("need 0 < c_min <= c_max")
    if p < 2:
        raise ValueError("p must be at least 2 so that log p > 0")
    if n < 1:
        raise ValueError("n must be positive")
    if count == 1:
        mult = np.array([c_min])
    else:
        mult = np.geomspace(c_max, c_min, count)
    return mult * math.sqrt(math.log(p) / n)


@dataclass(frozen=True)
class TuneGrid:
    """Candidate values; ``lambdas`` are stored in descending order."""

    lambdas: tuple
    ws: tuple = (1.0,)
    orders: tuple = ((3, 3),)

    def __post_init__(self):
        lams = tuple(float(v) for v in np.atleast_1d(self.lambdas))
        if not lams or min(lams) <= 0:
            raise ValueError("lambdas must be nonempty and strictly positive")
        ws = tuple(float(v) for v in np.atleast_1d(self.ws))
        if not ws or min(ws) < 0:
            raise ValueError("ws must be nonempty and nonnegative")
        orders = tuple((int(a), int(b)) for a, b in self.orders)
        if not orders:
            raise ValueError("orders must be nonempty")
        object.__setattr__(self, "lambdas", tuple(sorted(lams, reverse=True)))
        object.__setattr__(self, "ws", ws)
        object.__setattr__(self, "orders", orders)

    def __len__(self):
        return len(self.lambdas) * len(self.ws) * len(self.orders)

    def configs(self, base: GdsConfig):
        """Candidates in a fixed order: orders, then w, then lambda descending."""
        for d1, d2 in self.orders:
            for w in self.ws:
                for lam in self.lambdas:
                    yield base.replace(d1=d1, d2=d2, w=w, lam=lam)


def default_weights(L: int, scale: float = 1.0) -> tuple:
    """``{1, sqrt(L)}``, plus the same two values times ``scale``.

    ``scale`` is the spacing factor of the difference rows (see
    :func:`~imagedantzig.diffops.difference_scale`). On a fine grid those
    rows are of order ``delta**-d``, and unscaled weights then leave the
    value rows with no say in the objective.
    """
    base = (1.0, math.sqrt(L))
    ws = base + tuple(scale * v for v in base)
    return tuple(dict.fromkeys(ws))


def default_grid(n: int, p: int, L: int, scale: float = 1.0,
                 orders=((3, 3),)) -> TuneGrid:
    """Twenty lambda multipliers in [0.05, 20] and :func:`default_weights`."""
    return TuneGrid(tuple(lambda_grid(n, p)), default_weights(L, scale), orders)


@dataclass
class TuneResult:
    """Score table and winner.

    ``scores`` holds one dict per candidate with keys ``lam, w, d1, d2,
    score`` (plus ``df`` and ``rss`` for information criteria).
    """

    best_config: GdsConfig
    scores: list
    criterion: str
    best_fit: GdsFit | None = None
    extra: dict = field(default_factory=dict)

    @property
    def best_score(self) -> float:
        return min(row["score"] for row in self.scores)

    def to_csv(self, fh) -> None:
        keys = ["lam", "w", "d1", "d2", "score"]
        extra = [k for k in ("df", "rss") if self.scores and k in self.scores[0]]
        fh.write(",".join(keys + extra + ["selected"]) + "\n")
        best = self.best_config
        for row in self.scores:
            sel = (row["lam"] == best.lam and row["w"] == best.w
                   and (row["d1"], row["d2"]) == (best.d1, best.d2))
            cells = [_fmt(row[k]) for k in keys + extra]
            fh.write(",".join(cells + [str(int(sel))]) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _pick(rows):
    """Index of the minimal score; ties go to the larger lambda, then order."""
    keyed = [(row["score"], -row["lam"], i) for i, row in enumerate(rows)]
    return min(keyed)[2]


def _transforms(base, grid, Bt):
    cache = {}
    for d1, d2 in grid.orders:
        for w in grid.ws:
            cache[(d1, d2, w)] = assemble_A(base.variant, w, d1, d2, base.grid, Bt)
    return cache


def _guarded_fit(ds, cfg, Bt, A):
    try:
        return fit(ds, cfg, Bt, A)
    except (LPError, ValueError, np.linalg.LinAlgError) as err:
        raise TuningError(cfg, err) from err


def _run(jobs, n_jobs):
    if n_jobs is None or n_jobs == 1:
        return [f(*a) for f, *a in jobs]
    return Parallel(n_jobs=n_jobs)(delayed(f)(*a) for f, *a in jobs)


def _prepare(images, y, base, weights):
    Bt = basis_matrix(base.basis, base.grid)
    w = quadrature_weights(base.grid) if weights is None else weights
    X = design_matrix(images, Bt, w)
    y = np.asarray(y, dtype=float).ravel()
    return Bt, X, y, w


def _val_score(ds, cfg, Bt, A, Xv, yv):
    f = _guarded_fit(ds, cfg, Bt, A)
    resid = yv - (f.alpha_hat + Xv @ f.eta_hat)
    return float(np.mean(resid**2))


def select_validation(train, val, base: GdsConfig, grid: TuneGrid, weights=None,
                      n_jobs=None) -> TuneResult:
    """Fit each candidate on ``train`` and score by MSE on ``val``.

    ``train`` and ``val`` are ``(images, y)`` pairs on the grid of ``base``.
    """
    Bt, X, y, w = _prepare(*train, base, weights)
    Xv = design_matrix(val[0], Bt, w)
    yv = np.asarray(val[1], dtype=float).ravel()
    ds = center(X, y, w)
    As = _transforms(base, grid, Bt)
    cfgs = list(grid.configs(base))
    jobs = [(_val_score, ds, c, Bt, As[(c.d1, c.d2, c.w)], Xv, yv) for c in cfgs]
    scores = _run(jobs, n_jobs)
    rows = [{**_row(c), "score": s} for c, s in zip(cfgs, scores)]
    best = cfgs[_pick(rows)]
    best_fit = _guarded_fit(ds, best, Bt, As[(best.d1, best.d2, best.w)])
    return TuneResult(best, rows, "val_mse", best_fit)


def _row(cfg):
    return {"lam": cfg.lam, "w": cfg.w, "d1": cfg.d1, "d2": cfg.d2}


def _ic_score(ds, cfg, Bt, A, penalty):
    f = _guarded_fit(ds, cfg, Bt, A)
    resid = ds.yc - ds.Xc @ f.eta_hat
    rss = float(resid @ resid)
    n = ds.n
    if rss <= 0:
        warnings.warn("zero residual sum of squares; using a sentinel score",
                      RuntimeWarning)
        score = RSS_ZERO_SENTINEL
    else:
        score = n * math.log(rss / n) + penalty * f.df
    return score, f.df, rss


def select_aic(train, base: GdsConfig, grid: TuneGrid, weights=None,
               criterion: str = "aic", n_jobs=None) -> TuneResult:
    """Information-criterion selection on the training fit.

    Score is ``n log(RSS / n) + k * df`` with ``df`` the number of nonzero
    coefficients and ``k = 2`` (``aic``) or ``log n`` (``bic``). The
    coefficient count is only a sensible df when each piece of a
    piecewise-constant basis holds exactly one grid point, so other bases
    are rejected.
    """
    if not is_aligned(base.basis, base.grid):
        raise ValueError("information-criterion tuning needs a piecewise-constant "
                         "basis aligned with the estimation grid (one grid point "
                         "per piece), so that df equals the active-set size")
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    Bt, X, y, w = _prepare(*train, base, weights)
    ds = center(X, y, w)
    penalty = 2.0 if criterion == "aic" else math.log(ds.n)
    As = _transforms(base, grid, Bt)
    cfgs = list(grid.configs(base))
    jobs = [(_ic_score, ds, c, Bt, As[(c.d1, c.d2, c.w)], penalty) for c in cfgs]
    out = _run(jobs, n_jobs)
    rows = [{**_row(c), "score": s, "df": df, "rss": rss}
            for c, (s, df, rss) in zip(cfgs, out)]
    best = cfgs[_pick(rows)]
    best_fit = _guarded_fit(ds, best, Bt, As[(best.d1, best.d2, best.w)])
    return TuneResult(best, rows, criterion, best_fit)


def _fold_mse(X, y, w, tr, te, cfg, Bt, A):
    ds = center(X[tr], y[tr], w)
    f = _guarded_fit(ds, cfg, Bt, A)
    resid = y[te] - (f.alpha_hat + X[te] @ f.eta_hat)
    return float(np.mean(resid**2))


def kfold_cv(data, base: GdsConfig, grid: TuneGrid, k: int = 10, seed: int = 0,
             weights=None, n_jobs=None) -> TuneResult:
    """Mean held-out MSE over ``k`` shuffled folds fixed by ``seed``."""
    images, y = data
    Bt, X, y, w = _prepare(images, y, base, weights)
    n = X.shape[0]
    if k < 2 or n < k:
        raise ValueError("need 2 <= k <= n")
    folds = list(KFold(n_splits=k, shuffle=True, random_state=seed).split(X))
    if min(len(tr) for tr, _ in folds) < 2:
        raise ValueError("every training fold needs at least two samples")
    As = _transforms(base, grid, Bt)
    cfgs = list(grid.configs(base))
    jobs = [(_fold_mse, X, y, w, tr, te, c, Bt, As[(c.d1, c.d2, c.w)])
            for c in cfgs for tr, te in folds]
    mses = np.asarray(_run(jobs, n_jobs)).reshape(len(cfgs), k)
    rows = [{**_row(c), "score": float(m.mean())} for c, m in zip(cfgs, mses)]
    best = cfgs[_pick(rows)]
    ds = center(X, y, w)
    best_fit = _guarded_fit(ds, best, Bt, As[(best.d1, best.d2, best.w)])
    return TuneResult(best, rows, "cv", best_fit,
                      extra={"folds": [te.tolist() for _, te in folds]})


class TunedDantzigSelector(GeneralizedDantzigSelector):
    """Selector that picks lambda, w and the orders itself, then optionally refits.

    Parameters
    ----------
    criterion : {'aic', 'bic', 'cv', 'val'}, default='aic'
        ``'val'`` needs ``validation=(X_val, y_val)`` in :meth:`fit`.
    multipliers : sequence of float, optional
        Lambda multipliers of ``sqrt(log p / n)``; default twenty
        log-spaced values in [0.05, 20].
    ws : sequence of float, optional
        Candidate weights; default :func:`default_weights` for the first
        pair of orders.
    orders : sequence of (int, int), default=((3, 3),)
    cv : int, default=10
        Folds for ``criterion='cv'``.
    random_state : int, default=0
        Fold seed.
    n_jobs : int, optional
    refit : bool, default=False
        Run the support-restricted refit at the selected lambda.

    Other parameters match :class:`GeneralizedDantzigSelector`.

    Attributes
    ----------
    tune_result_ : TuneResult
    """

    def __init__(self, criterion="aic", multipliers=None, ws=None,
                 orders=((3, 3),), variant="separable", basis="piecewise",
                 pieces=(20, 20), spline_order=(3, 3), interior_knots=(7, 7),
                 grid_shape=None, mask=None, refit=False, refit_lam=None,
                 zero_threshold=1e-8, solver="highs", cv=10, random_state=0,
                 n_jobs=None):
        self.criterion = criterion
        self.multipliers = multipliers
        self.ws = ws
        self.orders = orders
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
        self.cv = cv
        self.random_state = random_state
        self.n_jobs = n_jobs

    @property
    def needs_validation(self) -> bool:
        return self.criterion == "val"

    def _grid(self, n, p, L, scale):
        if self.multipliers is None:
            lams = lambda_grid(n, p)
        else:
            lams = np.asarray(self.multipliers, dtype=float) * math.sqrt(math.log(p) / n)
        ws = default_weights(L, scale) if self.ws is None else tuple(self.ws)
        return TuneGrid(tuple(lams), ws, tuple(self.orders))

    def fit(self, X, y, validation=None):
        Xf, y, ds, Bt, weights = self._prepare(X, y)
        d1, d2 = self.orders[0]
        base = self._base_config(Bt, lam=1.0, w=1.0, orders=(d1, d2))
        L = assemble_A(base.variant, 1.0, d1, d2, base.grid, Bt).L
        scale = difference_scale(base.variant, d1, d2, base.grid)
        grid = self._grid(ds.n, ds.p, L, scale)
        if self.criterion in ("aic", "bic"):
            res = select_aic((Xf, y), base, grid, weights, self.criterion, self.n_jobs)
        elif self.criterion == "cv":
            res = kfold_cv((Xf, y), base, grid, self.cv, self.random_state, weights,
                           self.n_jobs)
        elif self.criterion == "val":
            if validation is None:
                raise ValueError("criterion='val' needs validation=(X_val, y_val)")
            Xv, _ = check_images(validation[0], Bt.grid.shape)
            yv = check_response(validation[1], Xv.shape[0])
            res = select_validation((Xf, y), (Xv, yv), base, grid, weights, self.n_jobs)
        else:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        result = res.best_fit
        if self.refit:
            result = refit(result, ds, self.refit_lam)
        self.tune_result_ = res
        self._set_fitted(result, weights, ds)
        return self
