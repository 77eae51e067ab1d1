import numpy as np
import pytest

from mrstruct import medm, riemann
from mrstruct.forms import SGForm, SuperpositionForm, complete_graph, default_family, path_graph, random_graph


class Setup:
    """Model, family, dominant measure, index and a sampled tuple."""

    def __init__(self, model, seed=0, family=None):
        self.model = model
        self.family = default_family(model, seed) if family is None else family
        self.nu = medm.build_medm(model, self.family)
        self.gram = riemann.gram_field(model, self.family, self.nu)
        self.index = riemann.pointwise_index(self.gram)
        self.tuple = riemann.sample_coordinates(model, self.family, self.nu, self.index, seed)


@pytest.fixture
def p3():
    return path_graph(3)


@pytest.fixture
def k3():
    return complete_graph(3)


@pytest.fixture(scope="session")
def p3_setup():
    return Setup(path_graph(3))


@pytest.fixture(scope="session")
def k3_setup():
    return Setup(complete_graph(3))


@pytest.fixture(scope="session")
def g20_setup():
    return Setup(random_graph(20, seed=0))


@pytest.fixture(scope="session")
def sg3_setup():
    return Setup(SGForm(3))


@pytest.fixture(scope="session")
def sp2_setup():
    return Setup(SuperpositionForm(2, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
