import numpy as np
import pytest

from spnodal import (
    Nonlinearity,
    build_box_grid,
    build_radial_grid,
)


@pytest.fixture(scope="session")
def nl():
    return Nonlinearity(lam=1.0, p=5.0)


@pytest.fixture(scope="session")
def ball63():
    return build_radial_grid(63, 1.0)


@pytest.fixture(scope="session")
def ball255():
    return build_radial_grid(255, 1.0)


@pytest.fixture(scope="session")
def box9():
    return build_box_grid(9, 1.0)


@pytest.fixture(scope="session")
def box15():
    return build_box_grid(15, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
