import numpy as np
import pytest

from windlab.covmodel import (bargmann_fock, make_iid_model,
                              make_independent_model, make_regression_model,
                              ornstein_uhlenbeck)


@pytest.fixture(scope="session")
def iid_bf():
    return make_iid_model(bargmann_fock())


@pytest.fixture(scope="session")
def ou_bf():
    return make_independent_model(ornstein_uhlenbeck(), bargmann_fock())


@pytest.fixture(scope="session")
def regression03():
    return make_regression_model(bargmann_fock(), bargmann_fock(), 0.3)


def gauss_hermite_2d(func, rho, n=120):
    """E[func(X, Y)] for standard Gaussians with correlation rho, by
    tensorized Gauss-Hermite quadrature (independent oracle)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    xx = x[:, None]
    zz = x[None, :]
    yy = rho * xx + np.sqrt(1.0 - rho * rho) * zz
    vals = func(np.broadcast_to(xx, (n, n)), yy)
    return float(np.einsum("i,j,ij->", w, w, vals))
