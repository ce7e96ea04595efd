import numpy as np
import pytest
from sklearn.base import clone

from imagedantzig.bases import (
    BSplineBasis, GridSpec, PiecewiseConstantBasis, basis_matrix,
)
from imagedantzig.design import center, design_matrix, quadrature_weights
from imagedantzig.diffops import assemble_A
from imagedantzig.gds import (
    GdsConfig, GeneralizedDantzigSelector, evaluate_surface, fit, predict, refit,
    zero_set,
)
from imagedantzig.lp import LPError

from oracles import dantzig_vertex


def _cfg(problem, **kw):
    base = dict(basis=problem["basis"], grid=problem["grid"], variant="separable",
                d1=1, d2=1, w=10.0, lam=0.05)
    base.update(kw)
    return GdsConfig(**base)


def _lam_max(ds):
    return float(np.abs(ds.correlation(np.zeros(ds.p))).max())


def test_config_validation(small_problem):
    with pytest.raises(ValueError):
        _cfg(small_problem, lam=0.0)
    with pytest.raises(ValueError):
        _cfg(small_problem, w=-1.0)
    with pytest.raises(ValueError):
        _cfg(small_problem, zero_threshold=0.0)
    with pytest.raises(ValueError):
        _cfg(small_problem, variant="diag")


def test_large_lambda_gives_zero_fit(small_problem):
    ds = small_problem["ds"]
    f = fit(ds, _cfg(small_problem, lam=1.01 * _lam_max(ds)))
    assert np.all(f.eta_hat == 0) and f.df == 0
    assert f.alpha_hat == pytest.approx(ds.y_mean)
    assert np.all(evaluate_surface(f).truncated == 0)
    assert np.allclose(predict(f, small_problem["images"]), ds.y_mean)


def test_classical_dantzig_special_case():
    r = np.random.default_rng(2024)
    n, p = 10, 3
    X = r.standard_normal((n, p))
    y = X @ np.array([1.5, 0.0, -0.7]) + 0.3 * r.standard_normal(n)
    ds = center(X, y)
    grid = GridSpec.midpoints(1, 3)
    cfg = GdsConfig(PiecewiseConstantBasis((1, 3)), grid, "joint", 0, 0, 1.0,
                    lam=0.25 * _lam_max(ds))
    f = fit(ds, cfg)
    ref, _ = dantzig_vertex(X, y, cfg.lam)
    assert np.max(np.abs(f.eta_hat - ref)) <= 1e-6


def test_fixture_geometry_runs():
    grid = GridSpec(2, 2, 1.0, 1.0)
    basis = PiecewiseConstantBasis((2, 2))
    r = np.random.default_rng(0)
    X = r.standard_normal((12, 4))
    ds = center(X, X @ np.array([1.0, 1.0, 0.0, 0.0]) + 0.1 * r.standard_normal(12))
    f = fit(ds, GdsConfig(basis, grid, "joint", 1, 1, 1.0, lam=0.1))
    assert f.gamma_hat.shape == (5,)


def test_design_mismatch_rejected(small_problem):
    ds = center(small_problem["X"][:, :5], small_problem["y"])
    with pytest.raises(ValueError):
        fit(ds, _cfg(small_problem))


@pytest.mark.parametrize("variant", ["separable", "joint"])
@pytest.mark.parametrize("frac", [0.02, 0.1, 0.4])
def test_fit_invariants(small_problem, variant, frac):
    ds = small_problem["ds"]
    lam = frac * _lam_max(ds)
    f = fit(ds, _cfg(small_problem, variant=variant, lam=lam))
    assert np.abs(ds.correlation(f.eta_hat)).max() <= lam + 1e-7
    assert np.max(np.abs(f.gamma_hat - f.transform.values @ f.eta_hat)) <= 1e-9
    assert np.max(np.abs(f.diagnostics["gamma_lp"] - f.gamma_hat)) <= 1e-7
    assert f.diagnostics["objective"] == pytest.approx(np.abs(f.gamma_hat).sum(), abs=1e-7)
    assert f.alpha_hat == pytest.approx(ds.y_mean - ds.x_means @ f.eta_hat)
    assert set(f.active_set) == set(np.flatnonzero(np.abs(f.eta_hat) > 1e-8))


def test_objective_monotone_in_lambda(small_problem):
    ds = small_problem["ds"]
    lams = np.geomspace(0.005, 1.2, 10) * _lam_max(ds)
    objs = [fit(ds, _cfg(small_problem, d1=2, d2=2, lam=l)).diagnostics["objective"]
            for l in lams]
    assert all(a >= b - 1e-7 for a, b in zip(objs, objs[1:]))


def test_response_scaling_homogeneity(small_problem):
    ds = small_problem["ds"]
    lam = 0.1 * _lam_max(ds)
    c = 3.5
    ds_c = center(small_problem["X"], c * small_problem["y"])
    a = fit(ds, _cfg(small_problem, lam=lam))
    b = fit(ds_c, _cfg(small_problem, lam=c * lam))
    assert b.diagnostics["objective"] == pytest.approx(c * a.diagnostics["objective"],
                                                       rel=1e-7)
    assert np.max(np.abs(b.eta_hat - c * a.eta_hat)) <= 1e-6 * c * np.abs(a.eta_hat).max()


def test_predict_linearity(small_problem, rng):
    f = fit(small_problem["ds"], _cfg(small_problem, lam=0.05))
    x = rng.standard_normal((3, 4, 4))
    a = 2.7
    lhs = predict(f, a * x) - f.alpha_hat
    rhs = a * (predict(f, x) - f.alpha_hat)
    assert np.allclose(lhs, rhs)


def test_noiseless_exact_fit():
    r = np.random.default_rng(5)
    grid = GridSpec.midpoints(3)
    basis = PiecewiseConstantBasis((3, 3))
    Bt = basis_matrix(basis, grid)
    imgs = r.standard_normal((40, 3, 3))
    eta = np.array([0, 0, 0, 0, 1.0, 1.0, 0, 1.0, 1.0])
    X = design_matrix(imgs, Bt)
    y = X @ eta + 0.3
    ds = center(X, y)
    f = fit(ds, GdsConfig(basis, grid, "separable", 1, 1, 1.0, lam=1e-9))
    assert np.max(np.abs(predict(f, imgs) - y)) <= 1e-6
    assert f.alpha_hat == pytest.approx(0.3, abs=1e-6)


def test_surface_of_unit_coefficients(small_problem):
    ds = small_problem["ds"]
    f = fit(ds, _cfg(small_problem))
    k = 6
    e = np.zeros(16)
    e[k] = 1.0
    unit = type(f)(e, 0.0, f.transform.values @ e, np.array([k]), f.config,
                   f.transform, f.Bt)
    assert np.array_equal(evaluate_surface(unit).raw, f.Bt.values[:, k])


def test_piecewise_surface_constant_within_pieces(small_problem):
    f = fit(small_problem["ds"], _cfg(small_problem, lam=0.03))
    fine = GridSpec.midpoints(16)
    vals = evaluate_surface(f, fine).raw.reshape(16, 16)
    blocks = vals.reshape(4, 4, 4, 4)
    assert np.all(blocks.max(axis=(1, 3)) == blocks.min(axis=(1, 3)))


def test_truncated_channel_zeroes_small_values(small_problem):
    f = fit(small_problem["ds"], _cfg(small_problem, lam=0.1))
    s = evaluate_surface(f)
    small = np.abs(s.raw) < 1e-8
    assert np.all(s.truncated[small] == 0)
    assert np.array_equal(s.truncated[~small], s.raw[~small])


def test_refit_pins_zero_set(small_problem):
    ds = small_problem["ds"]
    f = fit(ds, _cfg(small_problem, lam=0.2 * _lam_max(ds)))
    I0 = zero_set(f)
    assert I0.size > 0
    g = refit(f, ds)
    assert g.refitted and g.config.w == 0.0
    assert np.max(np.abs(g.Bt.values[I0] @ g.eta_hat)) <= 1e-9
    # aligned piecewise basis: pinned cells are exactly zero coefficients
    assert np.all(g.eta_hat[I0] == 0) or np.max(np.abs(g.eta_hat[I0])) <= 1e-9
    assert np.abs(ds.correlation(g.eta_hat)).max() <= g.lam + 1e-7
    assert g.diagnostics["zero_set_size"] == I0.size


def test_refit_bspline_zero_set():
    r = np.random.default_rng(11)
    grid = GridSpec.midpoints(8)
    basis = BSplineBasis((2, 2), (2, 2))
    Bt = basis_matrix(basis, grid)
    imgs = r.standard_normal((80, 8, 8))
    X = design_matrix(imgs, Bt)
    eta = np.zeros(basis.p)
    eta[[0, 1, 4]] = 4.0
    ds = center(X, X @ eta + 0.05 * r.standard_normal(80))
    f = fit(ds, GdsConfig(basis, grid, "separable", 2, 2, 1.0, lam=0.2 * _lam_max(ds)))
    I0 = zero_set(f)
    g = refit(f, ds)
    if I0.size:
        assert np.max(np.abs(Bt.values[I0] @ g.eta_hat)) <= 1e-9


def test_vacuous_refit(small_problem):
    ds = small_problem["ds"]
    f = fit(ds, _cfg(small_problem, lam=1e-4))
    assert zero_set(f).size == 0
    g = refit(f, ds)
    plain = fit(ds, _cfg(small_problem, lam=1e-4, w=0.0))
    assert g.diagnostics["vacuous_refit"]
    assert g.diagnostics["objective"] == pytest.approx(plain.diagnostics["objective"],
                                                       abs=1e-7)


def test_refit_infeasible_names_equalities(small_problem):
    ds = small_problem["ds"]
    f = fit(ds, _cfg(small_problem, lam=1.01 * _lam_max(ds)))  # zero fit pins all cells
    with pytest.raises(LPError, match="B_I0"):
        refit(f, ds, lambda2=1e-3)


def test_estimator_api(small_problem):
    est = GeneralizedDantzigSelector(lam=0.01, w=10.0, diff_orders=(1, 1),
                                     pieces=(4, 4))
    params = est.get_params()
    assert params["lam"] == 0.01 and params["pieces"] == (4, 4)
    c = clone(est)
    assert c.get_params() == params
    est.fit(small_problem["images"], small_problem["y"])
    assert est.coef_.shape == (16,)
    assert est.surface().shape == (4, 4)
    assert est.predict(small_problem["images"]).shape == (60,)
    assert 0.9 < est.score(small_problem["images"], small_problem["y"]) <= 1.0
    flat = small_problem["images"].reshape(60, -1)
    assert np.allclose(est.predict(flat), est.predict(small_problem["images"]))


def test_estimator_refit_and_spline(small_problem):
    est = GeneralizedDantzigSelector(lam=0.05, diff_orders=(1, 1), pieces=(4, 4),
                                     refit=True).fit(small_problem["images"],
                                                     small_problem["y"])
    assert est.fit_.refitted
    sp = GeneralizedDantzigSelector(lam=0.05, basis="bspline", spline_order=(2, 2),
                                    interior_knots=(1, 1), diff_orders=(1, 1))
    sp.fit(small_problem["images"], small_problem["y"])
    assert sp.coef_.shape == (9,)


def test_estimator_input_checks(small_problem):
    est = GeneralizedDantzigSelector()
    with pytest.raises(ValueError):
        est.fit(small_problem["images"], small_problem["y"][:5])
    bad = small_problem["images"].copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        est.fit(bad, small_problem["y"])


def test_estimator_mask(small_problem):
    mask = np.ones((4, 4), bool)
    mask[0] = False
    est = GeneralizedDantzigSelector(lam=0.05, diff_orders=(1, 1), pieces=(4, 4),
                                     mask=mask).fit(small_problem["images"],
                                                    small_problem["y"])
    assert np.all(est.weights_.reshape(4, 4)[0] == 0)
    # masked cells carry no information, so their columns are dropped
    assert set(est.fit_.diagnostics["dropped_columns"]) == {0, 1, 2, 3}


def test_fit_is_deterministic(small_problem):
    ds = small_problem["ds"]
    a = fit(ds, _cfg(small_problem, lam=0.05))
    b = fit(ds, _cfg(small_problem, lam=0.05))
    assert a.eta_hat.tobytes() == b.eta_hat.tobytes()


def test_simplex_backend_matches(small_problem):
    ds = small_problem["ds"]
    a = fit(ds, _cfg(small_problem, lam=0.1))
    b = fit(ds, _cfg(small_problem, lam=0.1, solver="simplex"))
    assert b.diagnostics["objective"] == pytest.approx(a.diagnostics["objective"],
                                                       rel=1e-6)
