import math

import numpy as np
import pytest

from imagedantzig.bases import GridSpec, PiecewiseConstantBasis, basis_matrix
from imagedantzig.design import center, design_matrix
from imagedantzig.diffops import assemble_A, pseudoinverse
from imagedantzig.theory import (
    bound_constants, estimate_kappa, estimate_kappas, feasibility_probe,
    fixture_transform, load_fixture,
)

from conftest import DATA

PRINTED_V = np.array([
    [-0.3721, -1.0915, -0.6668, -0.2608, 1.1254],
    [2.0988, 0.6740, -0.1265, -1.6357, -0.0844],
    [-0.1422, -1.5192, 1.9371, 0.3471, -0.2130],
    [1.1231, 0.1025, -0.8652, -0.9808, 0.9050],
])


def _fixture_V():
    return load_fixture() @ pseudoinverse(fixture_transform())


def _setup(n=400, m=10, seed=0):
    r = np.random.default_rng(seed)
    grid = GridSpec.midpoints(m)
    basis = PiecewiseConstantBasis((m, m))
    Bt = basis_matrix(basis, grid)
    imgs = r.standard_normal((n, m, m))
    X = design_matrix(imgs, Bt)
    ds = center(X, X @ r.standard_normal(m * m) + r.standard_normal(n))
    return grid, basis, Bt, imgs, ds


def test_bound_constants_arithmetic():
    grid, basis, Bt, imgs, ds = _setup()
    A = assemble_A("separable", 1.0, 1, 1, grid, Bt)
    bc = bound_constants(ds, A, basis, C=2.0, sigma=1.0)
    assert bc.p == 100 and bc.n == 400
    assert bc.lambda_theoretical == pytest.approx(2 * math.sqrt(math.log(100) / 400))
    assert bc.lambda_theoretical == pytest.approx(0.21459, abs=1e-5)
    assert bc.prob_bound == pytest.approx(0.99)
    assert not bc.omega_known and bc.omega_B == 0
    assert bc.C_B == pytest.approx(1.0)
    assert bc.D_max == pytest.approx(ds.D.max())


def test_bound_constants_degenerate_and_errors():
    grid, basis, Bt, imgs, ds = _setup(n=50)
    A = assemble_A("separable", 1.0, 1, 1, grid, Bt)
    assert bound_constants(ds, A, basis, C=2.0, sigma=0.0).lambda_theoretical == 0
    with pytest.raises(ValueError):
        bound_constants(ds, A, basis, C=math.sqrt(2), sigma=1.0)


def test_sqrt_L_weight_ratio():
    grid, basis, Bt, imgs, ds = _setup(n=50)
    L = assemble_A("separable", 1.0, 3, 3, grid, Bt).L
    A = assemble_A("separable", math.sqrt(L), 3, 3, grid, Bt)
    bc = bound_constants(ds, A, basis, C=2.0, sigma=1.0)
    assert bc.sqrtL_over_sigma_min == pytest.approx(1.0, abs=1e-9)


def test_lambda_increasing_in_each_input():
    grid, basis, Bt, imgs, ds = _setup(n=60)
    A = assemble_A("separable", 1.0, 1, 1, grid, Bt)
    lam = lambda **kw: bound_constants(ds, A, basis, images=imgs, **kw).lambda_theoretical
    assert lam(C=2.0, sigma=1.0) < lam(C=3.0, sigma=1.0)
    assert lam(C=2.0, sigma=1.0) < lam(C=2.0, sigma=1.5)
    smooth = lambda t, s: np.sin(3 * t) * s
    rough = lambda t, s: np.sin(40 * t) * np.cos(35 * s)
    a = bound_constants(ds, A, basis, C=2.0, sigma=1.0, beta=smooth, images=imgs)
    b = bound_constants(ds, A, basis, C=2.0, sigma=1.0, beta=rough, images=imgs)
    assert a.omega_known and a.M > 0
    assert (a.omega_B < b.omega_B) == (a.lambda_theoretical < b.lambda_theoretical)
    assert a.omega_B != b.omega_B


def test_fixture_matches_bundled_copy():
    assert np.array_equal(load_fixture(), np.loadtxt(DATA / "supp92_X.txt"))
    with pytest.raises(ValueError):
        load_fixture("other")


def test_fixture_V_matches_printed():
    assert np.max(np.abs(_fixture_V() - PRINTED_V)) <= 2e-4


def test_orthonormal_design():
    n, L = 50, 6
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, L)))
    V = math.sqrt(n) * Q
    k1 = estimate_kappa(V, "kappa1", S=2, trials=2000, seed=1)
    assert k1.value >= 1 - 1e-9
    # equality at a direction supported on T0
    h = np.zeros(L)
    h[[0, 3]] = [1.0, -2.0]
    assert np.linalg.norm(V @ h) / (math.sqrt(n) * np.linalg.norm(h)) == pytest.approx(1.0)


def test_zero_design():
    k = estimate_kappa(np.zeros((4, 5)), "kappa2", S=1, S_prime=1, trials=100)
    assert k.value == 0


def test_kappa2_below_kappa1_same_stream():
    V = _fixture_V()
    for seed in range(5):
        k1, k2 = estimate_kappas(V, 1, 1, trials=3000, seed=seed)
        assert k2.value <= k1.value


def test_minimum_over_prefix():
    V = _fixture_V()
    one = estimate_kappa(V, "kappa1", 1, trials=1, seed=0).value
    many = estimate_kappa(V, "kappa1", 1, trials=10_000, seed=0).value
    mid = estimate_kappa(V, "kappa1", 1, trials=100, seed=0).value
    assert one >= mid >= many


def test_estimate_bounded_by_exact_cone_minimum():
    cp = pytest.importorskip("cvxpy")
    V = _fixture_V()
    n, L = V.shape
    # with |T0| = 1 and h_T0 = +-1 the ratio minimisation is a convex program
    exact = np.inf
    for j in range(L):
        for sign in (1.0, -1.0):
            h = cp.Variable(L)
            off = [i for i in range(L) if i != j]
            prob = cp.Problem(cp.Minimize(cp.norm(V @ h, 2)),
                              [h[j] == sign, cp.norm(h[off], 1) <= 1])
            prob.solve(solver=cp.CLARABEL)
            exact = min(exact, prob.value / math.sqrt(n))
    est = estimate_kappa(V, "kappa1", 1, trials=10_000, seed=0).value
    assert est >= exact - 1e-6
    assert 0 < exact < est


def test_kappa_argument_checks():
    V = _fixture_V()
    with pytest.raises(ValueError):
        estimate_kappa(V, "kappa1", S=0)
    with pytest.raises(ValueError):
        estimate_kappa(V, "kappa2", S=3, S_prime=3)
    with pytest.raises(ValueError):
        estimate_kappa(V, "kappa2", S=1)
    with pytest.raises(ValueError):
        estimate_kappa(V, "kappa3")


def test_kappa_reproducible():
    V = _fixture_V()
    a = estimate_kappas(V, 1, 1, trials=5000, seed=9)
    b = estimate_kappas(V, 1, 1, trials=5000, seed=9)
    assert a == b


def test_probe_noiseless_is_always_feasible():
    assert feasibility_probe(C=3.0, reps=20, sigma=0.0, n=100) == 1.0


def test_probe_near_threshold_constant():
    C = 1.5
    p = 25
    bound = 1 - p ** (1 - C**2 / 2)
    reps = 200
    rate = feasibility_probe(C=C, reps=reps, n=200, seed=1)
    se = math.sqrt(bound * (1 - bound) / reps)
    assert rate >= bound - 3 * se
