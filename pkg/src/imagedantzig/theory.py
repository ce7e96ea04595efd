"""Error-bound ingredients, Monte-Carlo restricted eigenvalues and a
feasibility probe for the true coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .bases import Basis, GridSpec, PiecewiseConstantBasis, basis_l2_norms, basis_matrix, project_beta
from .design import DesignSet, center, design_matrix, quadrature_weights
from .diffops import TransformA, assemble_A, pseudoinverse

__all__ = [
    "BoundConstants",
    "bound_constants",
    "KappaEstimate",
    "estimate_kappa",
    "estimate_kappas",
    "feasibility_probe",
    "load_fixture",
    "fixture_transform",
]


@dataclass(frozen=True)
class BoundConstants:
    L: int
    p: int
    n: int
    S_hat: int | None
    sigma_min_A: float
    D_max: float
    C_B: float
    omega_B: float
    omega_known: bool
    M: float
    C: float
    sigma: float
    lambda_theoretical: float
    prob_bound: float

    @property
    def sqrtL_over_sigma_min(self) -> float:
        return math.sqrt(self.L) / self.sigma_min_A if self.sigma_min_A > 0 else math.inf


def bound_constants(ds: DesignSet, A: TransformA, basis: Basis, *, C: float,
                    sigma: float, beta=None, images=None, weights=None,
                    S_hat: int | None = None) -> BoundConstants:
    """Collect the constants entering the estimation-error bounds.

    ``lambda_theoretical = C sigma sqrt(log p / n) + M omega_B`` holds
    with probability at least ``1 - p**(1 - C**2 / 2)``. ``omega_B`` is
    the L2 distance from ``beta`` (a callable ``(t, s) -> value``) to the
    basis span; without ``beta`` it is taken as 0 and ``omega_known`` is
    False. ``M`` is the largest quadrature L2 norm among ``images``.
    """
    if C <= math.sqrt(2):
        raise ValueError("C must exceed sqrt(2)")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n, p = ds.n, ds.p
    if p < 2:
        raise ValueError("p must be at least 2")
    grid = A.grid
    _, C_B = basis_l2_norms(basis)
    if beta is not None:
        omega = project_beta(beta, basis, grid).omega_B
    else:
        omega = 0.0
    M = 0.0
    if images is not None:
        w = quadrature_weights(grid) if weights is None else np.asarray(weights)
        x = np.asarray(images, dtype=float).reshape(len(images), -1)
        M = float(np.sqrt((x**2) @ w).max())
    lam = C * sigma * math.sqrt(math.log(p) / n) + M * omega
    prob = 1.0 - p ** (1.0 - C**2 / 2.0)
    return BoundConstants(A.L, p, n, S_hat, A.sigma_min, ds.D_max, C_B, omega,
                          beta is not None, M, C, sigma, lam, prob)


# ---------------------------------------------------------------------------
# restricted eigenvalues

@dataclass(frozen=True)
class KappaEstimate:
    which: str
    S: int
    S_prime: int | None
    value: float
    trials: int
    seed: int


def _draw_cone(rng, k, L, S):
    """``k`` random directions in the cone ``|h_off|_1 <= |h_T0|_1``.

    Each draw consumes one row of ``2L + 1`` uniforms: the first ``L``
    pick a random support ``T0`` of size ``S`` (by ranking), the next
    ``L`` give entries uniform on [-1, 1], and the last scales the
    off-support l1 mass to a uniform fraction of the on-support mass.
    Rows are consumed in order, so a run of ``N`` trials starts with
    the draws of any shorter run on the same seed.
    """
    U = rng.random((k, 2 * L + 1))
    order = np.argsort(U[:, :L], axis=1, kind="stable")
    on = np.zeros((k, L), dtype=bool)
    np.put_along_axis(on, order[:, :S], True, axis=1)
    H = 2.0 * U[:, L:2 * L] - 1.0
    frac = U[:, 2 * L]
    l1_on = np.where(on, np.abs(H), 0.0).sum(axis=1)
    l1_off = np.where(on, 0.0, np.abs(H)).sum(axis=1)
    scale = np.divide(frac * l1_on, l1_off, out=np.zeros(k), where=l1_off > 0)
    H = np.where(on, H, H * scale[:, None])
    return H, on


def _kappa_ratios(V, H, on, S_prime):
    n = V.shape[0]
    num = np.linalg.norm(H @ V.T, axis=1) / math.sqrt(n)
    den1 = np.linalg.norm(np.where(on, H, 0.0), axis=1)
    r1 = num / den1
    r2 = None
    if S_prime is not None:
        off = np.where(on, -np.inf, np.abs(H))
        # largest off-support magnitudes; stable sort keeps lower index on ties
        top = np.argsort(-off, axis=1, kind="stable")[:, :S_prime]
        both = on.copy()
        np.put_along_axis(both, top, True, axis=1)
        r2 = num / np.linalg.norm(np.where(both, H, 0.0), axis=1)
    return r1, r2


def estimate_kappas(V, S: int, S_prime: int | None = None, trials: int = 10_000,
                    seed: int = 0, chunk: int = 8192):
    """Monte-Carlo minima of both restricted-eigenvalue ratios on one stream.

    Returns ``(kappa1, kappa2)``; ``kappa2`` is None when ``S_prime`` is.
    Draws with ``h_T0 = 0`` are discarded and replaced.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ValueError("V must be a matrix")
    L = V.shape[1]
    if S < 1 or S > L:
        raise ValueError("need 1 <= S <= L")
    if S_prime is not None and (S_prime < 1 or S + S_prime > L):
        raise ValueError("need S_prime >= 1 and S + S_prime <= L")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    best1, best2 = math.inf, math.inf
    done = 0
    while done < trials:
        H, on = _draw_cone(rng, min(chunk, trials - done), L, S)
        keep = np.abs(np.where(on, H, 0.0)).sum(axis=1) > 0
        H, on = H[keep], on[keep]
        r1, r2 = _kappa_ratios(V, H, on, S_prime)
        if r1.size:
            best1 = min(best1, float(r1.min()))
            if r2 is not None:
                best2 = min(best2, float(r2.min()))
        done += int(keep.sum())
    k1 = KappaEstimate("kappa1", S, None, best1, trials, seed)
    k2 = (KappaEstimate("kappa2", S, S_prime, best2, trials, seed)
          if S_prime is not None else None)
    return k1, k2


def estimate_kappa(V, which: str = "kappa1", S: int = 1, S_prime: int | None = None,
                   trials: int = 10_000, seed: int = 0) -> KappaEstimate:
    """Monte-Carlo estimate of one restricted eigenvalue of ``V``.

    The minimum over ``trials`` random cone directions of
    ``||V h|| / (sqrt(n) ||h_T||)``, with ``T = T0`` (``kappa1``) or
    ``T0`` plus the ``S_prime`` largest off-support entries (``kappa2``).
    Being a minimum over samples it can only overestimate the infimum.
    """
    if which == "kappa1":
        return estimate_kappas(V, S, None, trials, seed)[0]
    if which == "kappa2":
        if S_prime is None:
            raise ValueError("kappa2 needs S_prime")
        return estimate_kappas(V, S, S_prime, trials, seed)[1]
    raise ValueError("which must be 'kappa1' or 'kappa2'")


def load_fixture(name: str = "supp92") -> np.ndarray:
    """Bundled design matrix fixtures (plain text, one row per line)."""
    if name != "supp92":
        raise ValueError(f"unknown fixture {name!r}")
    text = resources.files("imagedantzig.data").joinpath("supp92_X.txt").read_text()
    return np.loadtxt(text.splitlines())


def fixture_transform() -> TransformA:
    """``A`` for the fixture: a 2x2 grid at spacing 1, identity basis,
    ``w = 1`` and first differences in each direction (joint)."""
    grid = GridSpec(2, 2, 1.0, 1.0, 0.0, 0.0)
    Bt = basis_matrix(PiecewiseConstantBasis((2, 2)), grid)
    return assemble_A("joint", 1.0, 1, 1, grid, Bt)


# ---------------------------------------------------------------------------
# feasibility of the truth

def feasibility_probe(C: float = 3.0, reps: int = 200, seed: int = 0, n: int = 200,
                      pieces=(5, 5), grid: GridSpec | None = None,
                      process: str = "P1", sigma: float | None = None,
                      eta=None, snr_target: float = 4.0) -> float:
    """Share of replicates where the true coefficients satisfy the constraint.

    The true surface lies in the span of a piecewise-constant basis, so
    there is no approximation error and the constraint level is
    ``C sigma sqrt(log p / n)``. ``eta`` defaults to the projection of
    the ``beta2`` test surface onto the basis; ``sigma`` defaults to the
    value giving ``snr_target``.
    """
    from .simulation import _centre_surface, rng_stream, sample_predictor

    grid = GridSpec.midpoints(20) if grid is None else grid
    basis = PiecewiseConstantBasis(tuple(pieces))
    Bt = basis_matrix(basis, grid)
    w = quadrature_weights(grid)
    if eta is None:
        eta = project_beta(_centre_surface, basis, grid).eta_star
    eta = np.asarray(eta, dtype=float)
    p = eta.size
    if sigma is None:
        pilot = sample_predictor(process, grid, rng_stream(seed, 0), 10_000)
        f = design_matrix(pilot, Bt, w) @ eta
        sigma = math.sqrt(np.var(f, ddof=1) / snr_target)
    lam = C * sigma * math.sqrt(math.log(p) / n)
    hits = 0
    for r in range(reps):
        rng = rng_stream(seed, 1, r)
        imgs = sample_predictor(process, grid, rng, n)
        X = design_matrix(imgs, Bt, w)
        y = X @ eta + sigma * rng.standard_normal(n)
        ds = center(X, y, w)
        stat = np.abs(ds.correlation(eta)).max()
        # round-off allowance for the noiseless case
        hits += bool(stat <= lam + 1e-10)
    return hits / reps
