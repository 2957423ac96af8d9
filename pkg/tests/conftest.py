import numpy as np
import pytest

from darktraj.linalg import Subspace
from darktraj.presets import build_example


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def ex1():
    return build_example("1", "5c")


@pytest.fixture
def ex1_generic():
    return build_example("1", "5a")


@pytest.fixture
def ex2():
    return build_example("2", "4a")


@pytest.fixture
def ex2_special():
    return build_example("2", "4b")


@pytest.fixture
def ex3():
    return build_example("3", "base")


@pytest.fixture
def ex3_v3():
    return build_example("3", "v3")


@pytest.fixture
def single():
    return build_example("single")


@pytest.fixture
def planes4():
    """D_a = span(e0, e1) and D_b = span(e2, e3) in C^4."""
    return [Subspace.coordinate(4, [0, 1]), Subspace.coordinate(4, [2, 3])]


@pytest.fixture
def planes3():
    """span(e0, e1) and span(e1, e2) in C^3."""
    return [Subspace.coordinate(3, [0, 1]), Subspace.coordinate(3, [1, 2])]
