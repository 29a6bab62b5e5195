import os
import warnings

import numpy as np
import pytest

from qlks.lattice import make_velocity_set

LONG = os.environ.get("QLKS_LONG") == "1"


def pytest_collection_modifyitems(config, items):
    if LONG:
        return
    skip = pytest.mark.skip(reason="set QLKS_LONG=1 to run the 64^3 quantum checks")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def d2q9():
    return make_velocity_set("D2Q9")


@pytest.fixture(scope="session")
def d3q27():
    return make_velocity_set("D3Q27")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quiet_mach():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Mach number")
        yield
