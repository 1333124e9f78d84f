import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from modules.geometry import Hyperbolic  # noqa: E402
from modules.problems import make_karcher, make_quadratic, make_rng  # noqa: E402


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture(scope='session')
def hyperbolic_karcher():
    m = Hyperbolic(2, 1.0)
    r = make_rng(7)
    anchors = [m.random_point(r, radius=1.0).coords for _ in range(5)]
    return make_karcher(m, anchors)


@pytest.fixture(scope='session')
def quadratic():
    return make_quadratic(10, 0.01, 1.0, seed=3)
