import numpy as np
import pytest

from shellab.spectral import ModelParams, enstrophy_b


@pytest.fixture
def goy8():
    return ModelParams("GOY", a=1.0, b=enstrophy_b(1.0, 2.0), mu=2.0, k0=1.0, m=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_components(params, rng, count=1, scale=None):
    if scale is None:
        scale = 1.0 / params.shell_wavenumbers()
    z = rng.standard_normal((count, params.m)) + 1j * rng.standard_normal((count, params.m))
    return z * scale
