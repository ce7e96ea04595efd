import pathlib

import numpy as np
import pytest

from imagedantzig.bases import GridSpec, PiecewiseConstantBasis, basis_matrix
from imagedantzig.design import center, design_matrix, quadrature_weights

DATA = pathlib.Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_problem():
    """Piecewise 4x4 basis on its own 4x4 midpoint grid with a sparse truth."""
    grid = GridSpec.midpoints(4)
    basis = PiecewiseConstantBasis((4, 4))
    Bt = basis_matrix(basis, grid)
    w = quadrature_weights(grid)
    r = np.random.default_rng(7)
    images = r.standard_normal((60, 4, 4))
    eta = np.zeros(16)
    eta[[5, 6, 9, 10]] = 3.0
    X = design_matrix(images, Bt, w)
    y = X @ eta + 0.05 * r.standard_normal(60) + 1.5
    return {"grid": grid, "basis": basis, "Bt": Bt, "weights": w,
            "images": images, "eta": eta, "X": X, "y": y,
            "ds": center(X, y, w)}


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
