import numpy as np
import pytest

from higgsneck.grid import LogPolarGrid


@pytest.fixture(autouse=True, scope="session")
def _profile_cache(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    mp.setenv("HIGGSNECK_CACHE_DIR", str(tmp_path_factory.mktemp("profiles")))
    yield
    mp.undo()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def annulus():
    return LogPolarGrid.annulus(0.1, 1.0, 256, 128)


@pytest.fixture(scope="session")
def small_annulus():
    return LogPolarGrid.annulus(0.1, 1.0, 64, 32)
