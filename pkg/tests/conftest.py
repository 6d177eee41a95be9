import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("wavekin", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("wavekin")


@pytest.fixture(autouse=True, scope="session")
def _cache_dir(tmp_path_factory):
    old = os.environ.get("WAVEKIN_CACHE_DIR")
    os.environ["WAVEKIN_CACHE_DIR"] = str(tmp_path_factory.mktemp("cache"))
    yield
    if old is None:
        os.environ.pop("WAVEKIN_CACHE_DIR", None)
    else:
        os.environ["WAVEKIN_CACHE_DIR"] = old
