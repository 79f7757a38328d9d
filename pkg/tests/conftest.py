import numpy as np
import pytest

from oufunnel import build_basis, build_model, build_rule
from oufunnel.densities import PiecewiseUniform


@pytest.fixture(scope="session")
def model1():
    """The 1-d benchmark model: c = 0.1, drift 1, identity input map."""
    return build_model(0.1, [[1.0]])


@pytest.fixture(scope="session")
def model2():
    return build_model(0.5, [[2.0, 0.5], [0.5, 1.0]])


@pytest.fixture(scope="session")
def basis40(model1):
    return build_basis(model1, 40)


@pytest.fixture(scope="session")
def rule60(model1):
    return build_rule(model1, 60)


@pytest.fixture(scope="session")
def two_box():
    """Benchmark initial density: uniform on [-1, -1/2] and [1/4, 3/4]."""
    return PiecewiseUniform([(-1.0, -0.5), (0.25, 0.75)])


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
