import numpy as np
import pytest

import measinv as mi


@pytest.fixture
def lorenz():
    return mi.make_system("lorenz")


@pytest.fixture
def lorenz_theta():
    return np.array(mi.DEFAULT_THETA["lorenz"])


@pytest.fixture
def lorenz_box():
    b = mi.DEFAULT_BOUNDS["lorenz"]
    return tuple(x[0] for x in b), tuple(x[1] for x in b)


def small_lorenz_grid(counts=(8, 8, 8)):
    b = mi.DEFAULT_BOUNDS["lorenz"]
    return mi.Grid(lo=tuple(x[0] for x in b), hi=tuple(x[1] for x in b), counts=counts)


@pytest.fixture
def grid8():
    return small_lorenz_grid((8, 8, 8))


@pytest.fixture
def unit_grid4():
    return mi.Grid(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), counts=(4, 4, 4))
