import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb

from imagedantzig.bases import (
    BSplineBasis, GridSpec, PiecewiseConstantBasis, basis_matrix,
)
from imagedantzig.diffops import (
    RankDeficientError, assemble_A, bivariate_operator, difference_matrix,
    difference_scale, pseudoinverse,
)
from imagedantzig.theory import fixture_transform


def test_second_difference_of_five():
    expected = np.array([[1, -2, 1, 0, 0],
                         [0, 1, -2, 1, 0],
                         [0, 0, 1, -2, 1]], dtype=float)
    assert np.array_equal(difference_matrix(5, 2), expected)


def test_zero_order_is_identity():
    assert np.array_equal(difference_matrix(4, 0), np.eye(4))


def test_first_difference_of_three():
    assert np.array_equal(difference_matrix(3, 1), [[1, -1, 0], [0, 1, -1]])


def test_order_must_be_below_length():
    with pytest.raises(ValueError):
        difference_matrix(3, 3)
    with pytest.raises(ValueError):
        bivariate_operator(3, 4, 1, 4, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 15), data=st.data())
def test_binomial_band(m, data):
    d = data.draw(st.integers(0, m - 1))
    D = difference_matrix(m, d)
    assert D.shape == (m - d, m)
    ref = np.zeros((m - d, m))
    for i in range(m - d):
        for k in range(d + 1):
            ref[i, i + k] = (-1) ** k * comb(d, k, exact=True)
    assert np.array_equal(D, ref)


@settings(max_examples=60, deadline=None)
@given(m=st.integers(2, 12), data=st.data())
def test_annihilates_low_degree_polynomials(m, data):
    d = data.draw(st.integers(1, m - 1))
    x = np.arange(m, dtype=float)
    D = difference_matrix(m, d)
    for deg in range(d):
        v = x**deg
        assert np.max(np.abs(D @ v)) <= 1e-9 * max(1.0, np.abs(v).max())


def test_bivariate_single_row():
    assert np.array_equal(bivariate_operator(2, 2, 1, 1, 1.0, 1.0), [[1, -1, -1, 1]])


def test_bivariate_shapes_and_identity():
    assert bivariate_operator(4, 5, 1, 2, 0.25, 0.2).shape == (9, 20)
    assert np.array_equal(bivariate_operator(3, 4, 0, 0, 1.0, 1.0), np.eye(12))


@pytest.mark.parametrize("d1,d2,m", [(1, 1, 12), (2, 3, 12), (3, 3, 6), (1, 0, 20),
                                     (0, 2, 20), (3, 0, 20), (0, 3, 20)])
def test_bivariate_annihilates_polynomial_surfaces(d1, d2, m):
    g = GridSpec.midpoints(m, m - 2)
    T, S = np.meshgrid(g.t, g.s, indexing="ij")
    Op = bivariate_operator(g.m1, g.m2, d1, d2, g.delta1, g.delta2)
    rng = np.random.default_rng(0)
    # degree below d1 in t with arbitrary s dependence, and vice versa
    surfaces = []
    if d1 > 0:
        surfaces.append(sum(rng.standard_normal() * T**a * np.cos(3 * S) for a in range(d1)))
    if d2 > 0:
        surfaces.append(sum(rng.standard_normal() * S**b * np.exp(T) for b in range(d2)))
    for f in surfaces:
        assert np.max(np.abs(Op @ f.ravel())) <= 1e-9


def test_annihilation_round_off_on_fine_mixed_grid():
    # delta^-6 of a 20x20 grid amplifies double round-off past 1e-9;
    # the residual must still sit at the floating-point floor
    g = GridSpec.midpoints(20)
    T, S = np.meshgrid(g.t, g.s, indexing="ij")
    Op = bivariate_operator(20, 20, 3, 3, g.delta1, g.delta2)
    f = T**2 * np.cos(3 * S) + S**2 * np.exp(T)
    floor = np.abs(Op).sum(axis=1).max() * np.abs(f).max() * np.finfo(float).eps
    assert np.max(np.abs(Op @ f.ravel())) <= floor


def test_bivariate_scaling():
    raw = bivariate_operator(5, 6, 2, 1, 1.0, 1.0)
    scaled = bivariate_operator(5, 6, 2, 1, 0.5, 0.25)
    assert np.allclose(scaled, raw * 0.5**-2 * 0.25**-1)


def test_fixture_matrix():
    A = fixture_transform()
    expected = np.vstack([np.eye(4), [[1, -1, -1, 1]]])
    assert np.array_equal(A.values, expected)
    assert A.L == 5 and A.p == 4


def test_row_counts():
    g = GridSpec.midpoints(6, 7)
    Bt = basis_matrix(PiecewiseConstantBasis((3, 3)), g)
    j = assemble_A("joint", 1.0, 2, 3, g, Bt)
    s = assemble_A("separable", 1.0, 2, 3, g, Bt)
    assert j.L == 42 + 4 * 4
    assert s.L == 42 + 4 * 7 + 6 * 4
    assert np.array_equal(j.values[:42], s.values[:42])
    assert np.array_equal(j.values[:42], Bt.values)


def test_weight_block():
    g = GridSpec.midpoints(5)
    Bt = basis_matrix(BSplineBasis((3, 3), (1, 1)), g)
    A = assemble_A("separable", 2.5, 2, 2, g, Bt)
    assert np.allclose(A.values[:25], 2.5 * Bt.values)


def test_sqrt_L_weight_gives_unit_ratio():
    g = GridSpec.midpoints(20)
    Bt = basis_matrix(PiecewiseConstantBasis((20, 20)), g)
    L = assemble_A("separable", 1.0, 3, 3, g, Bt).L
    A = assemble_A("separable", np.sqrt(L), 3, 3, g, Bt)
    # with delta scaling the difference rows dominate, so sigma_min >= sqrt(L)
    assert np.sqrt(L) / A.sigma_min <= 1.0 + 1e-9
    unit_grid = GridSpec(20, 20, 1.0 / 19, 1.0 / 19)
    B1 = basis_matrix(PiecewiseConstantBasis((20, 20)), unit_grid)
    A1 = assemble_A("separable", np.sqrt(L), 3, 3, unit_grid, B1)
    assert A1.sigma_min >= np.sqrt(L) - 1e-9


def test_zero_weight_zero_orders():
    g = GridSpec.midpoints(3)
    Bt = basis_matrix(BSplineBasis((2, 2), (1, 1)), g)
    A = assemble_A("joint", 0.0, 0, 0, g, Bt)
    assert np.array_equal(A.values[:9], np.zeros((9, 9)))
    assert np.allclose(A.values[9:], Bt.values)
    assert A.sigma_min == pytest.approx(np.linalg.svd(Bt.values, compute_uv=False)[-1])


def test_degenerate_flag():
    g = GridSpec.midpoints(2)
    Bt = basis_matrix(PiecewiseConstantBasis((4, 4)), g)  # most columns empty
    A = assemble_A("joint", 0.0, 1, 1, g, Bt)
    assert A.degenerate and A.sigma_min == 0.0
    with pytest.raises(RankDeficientError) as err:
        pseudoinverse(A)
    assert err.value.sigma_min == 0.0


def test_grid_mismatch_rejected():
    Bt = basis_matrix(PiecewiseConstantBasis((2, 2)), GridSpec.midpoints(2))
    with pytest.raises(ValueError):
        assemble_A("joint", 1.0, 1, 1, GridSpec.midpoints(3), Bt)
    with pytest.raises(ValueError):
        assemble_A("diagonal", 1.0, 1, 1, GridSpec.midpoints(2), Bt)
    with pytest.raises(ValueError):
        assemble_A("joint", -1.0, 1, 1, GridSpec.midpoints(2), Bt)


def test_difference_scale():
    g = GridSpec.midpoints(20)
    assert difference_scale("separable", 3, 3, g) == pytest.approx(8000.0)
    assert difference_scale("joint", 1, 2, g) == pytest.approx(20.0 * 400.0)


def test_fixture_pseudoinverse():
    A = fixture_transform()
    P = pseudoinverse(A)
    assert np.max(np.abs(P @ A.values - np.eye(4))) <= 1e-10


def test_pseudoinverse_orthonormal_columns():
    Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((9, 4)))
    assert np.allclose(pseudoinverse(Q), Q.T, atol=1e-12)


def test_pseudoinverse_scaling():
    M = np.random.default_rng(2).standard_normal((8, 5))
    assert np.allclose(pseudoinverse(3.0 * M), pseudoinverse(M) / 3.0)


BASES = [PiecewiseConstantBasis((10, 10)), BSplineBasis((3, 3), (7, 7)),
         BSplineBasis((4, 2), (3, 5)), PiecewiseConstantBasis((20, 20))]


@pytest.mark.parametrize("variant,d", [("separable", 3), ("separable", 1), ("joint", 1)])
@pytest.mark.parametrize("basis", BASES)
@pytest.mark.parametrize("w", [0.5, 1.0, 20.0, 8000.0])
def test_pseudoinverse_left_inverse(variant, d, basis, w):
    g = GridSpec.midpoints(20)
    A = assemble_A(variant, w, d, d, g, basis_matrix(basis, g))
    P = pseudoinverse(A)
    assert np.max(np.abs(P @ A.values - np.eye(A.p))) <= 1e-8


@pytest.mark.parametrize("basis", BASES[:2])
def test_pseudoinverse_ill_conditioned_within_round_off(basis):
    # mixed third differences on a 20x20 grid carry delta^-6 = 6.4e7
    g = GridSpec.midpoints(20)
    A = assemble_A("joint", 1.0, 3, 3, g, basis_matrix(basis, g))
    sv = np.linalg.svd(A.values, compute_uv=False)
    cond = sv[0] / sv[-1]
    err = np.max(np.abs(pseudoinverse(A) @ A.values - np.eye(A.p)))
    assert err <= 10 * cond * np.finfo(float).eps


@settings(max_examples=40, deadline=None)
@given(L=st.integers(1, 12), data=st.data())
def test_pseudoinverse_random_full_rank(L, data):
    p = data.draw(st.integers(1, L))
    seed = data.draw(st.integers(0, 2**32 - 1))
    M = np.random.default_rng(seed).standard_normal((L, p))
    if np.linalg.cond(M) > 1e6:
        return
    assert np.max(np.abs(pseudoinverse(M) @ M - np.eye(p))) <= 1e-8
