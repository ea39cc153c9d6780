import numpy as np
import pytest

from fstirap.system import S_HOLE_4S, StirapSystem


@pytest.fixture(scope="session")
def three_level():
    return StirapSystem.three_level()


@pytest.fixture(scope="session")
def xe():
    return StirapSystem.xe()


@pytest.fixture(scope="session")
def xe_xray():
    return StirapSystem.xe(S_HOLE_4S)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
