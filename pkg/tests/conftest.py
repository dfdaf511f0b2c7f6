import math

import pytest

from spinnet.config import default_config
from spinnet.scattering import ScatteringSetup

ALPHA = 4 / 15


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-size geometries, minutes per test (deselect with -m "not slow")')


@pytest.fixture(scope='session')
def config():
    return default_config()


@pytest.fixture(scope='session')
def compact():
    return ScatteringSetup.compact(ALPHA)


@pytest.fixture
def balanced():
    return 1 / math.sqrt(2)
