import numpy as np
import pytest

from fpca_predict import _accel
from fpca_predict.data import Grid, SparseFunctionalDataset, SubjectRecord
from fpca_predict.smoothing import CovarianceSurface, MeanFunction
from fpca_predict.spectral import EigenSystem, FittedFpcaModel


def make_model(grid, eigenvalues, phi, sigma2, mean=None, K=None):
    """Model holding a known finite-rank covariance on ``grid``."""
    lam = np.asarray(eigenvalues, dtype=float)
    phi = np.asarray(phi, dtype=float).reshape(len(grid), -1)
    mean_vals = np.zeros(len(grid)) if mean is None else np.asarray(mean, dtype=float)
    cov = CovarianceSurface(grid, (phi * lam) @ phi.T, float(sigma2))
    return FittedFpcaModel(MeanFunction(grid, mean_vals), cov, EigenSystem(grid, lam, phi), K or lam.size)


@pytest.fixture
def unit_grid():
    return Grid.uniform(0.0, 1.0, 51)


@pytest.fixture
def toy_model(unit_grid):
    """lambda = 2, flat eigenfunction, unit noise, zero mean on [0, 1]."""
    return make_model(unit_grid, [2.0], np.ones(len(unit_grid)), 1.0)


@pytest.fixture
def toy_subject():
    return SubjectRecord("toy", [0.5], [3.0])


@pytest.fixture(params=[True, False], ids=["numba", "numpy"])
def backend(request):
    previous = _accel.use_numba(request.param)
    yield request.param
    _accel.use_numba(previous)


def dataset_from_arrays(times, values, domain, responses=None):
    subjects = [SubjectRecord(str(i), t, x) for i, (t, x) in enumerate(zip(times, values))]
    resp = None if responses is None else {str(i): float(y) for i, y in enumerate(responses)}
    return SparseFunctionalDataset(subjects, domain, resp)
