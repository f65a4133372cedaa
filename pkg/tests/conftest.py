"""Shared model builders for the test suite."""

import numpy as np
import pytest
import scipy.sparse as sp

from lgocv.components import FixedEffects, Iid
from lgocv.likelihoods import Gaussian, Poisson
from lgocv.model import LgmModel


def conjugate_pair(y1=0.0, y2=0.0):
    """y_k | f ~ N(f, 1) for k = 1, 2 and f ~ N(0, 1); eta_k = f."""
    A = sp.csr_matrix(np.ones((2, 1)))
    return LgmModel([Iid("f", 1, log_prec=1.0)], A, Gaussian(precision=1.0),
                    [y1, y2])


def iid_identity_model(n=4, obs_prec=1.0, prior_prec=1.0, y=None):
    """n independent effects observed directly: A = I."""
    if y is None:
        y = np.zeros(n)
    return LgmModel([Iid("f", n, log_prec=prior_prec)],
                    sp.identity(n, format="csr"),
                    Gaussian(precision=obs_prec), y)


def multilevel_poisson(seed=5, offset=50.0, classes=10, per_class=10):
    """Poisson multilevel toy with informative counts; theta fixed."""
    rng = np.random.default_rng(seed)
    n = classes * per_class
    s = rng.standard_normal(classes) * 0.5
    cls = np.arange(n) // per_class
    eta = np.log(10.0) + s[cls]
    y = rng.poisson(offset * np.exp(eta)).astype(float)
    comps = [FixedEffects("intercept", 1, prec=1e-4),
             Iid("class", classes, log_prec=1.0)]
    A = sp.hstack([
        sp.csr_matrix(np.ones((n, 1))),
        sp.csr_matrix((np.ones(n), (np.arange(n), cls)), shape=(n, classes)),
    ], format="csr")
    return LgmModel(comps, A, Poisson(offset=offset), y)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
