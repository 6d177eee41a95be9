import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from wavekin import cache
from wavekin.stochastic import build_resonant_table


@pytest.fixture
def tmp_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(cache.ENV_VAR, str(tmp_path))
    return tmp_path


def test_env_override(tmp_cache):
    assert cache.cache_dir() == tmp_cache


def test_round_trip_bit_identical(tmp_cache):
    arr = {"x": np.random.default_rng(0).normal(size=(7, 3)), "k": np.arange(5)}
    cache.save("demo", {"a": 1}, arr)
    back = cache.load("demo", {"a": 1})
    for k in arr:
        assert back[k].dtype == arr[k].dtype
        np.testing.assert_array_equal(back[k], arr[k])


def test_resonant_table_cached(tmp_cache):
    t1 = cache.resonant_table(2, 2)
    files = sorted(os.listdir(tmp_cache))
    assert len(files) == 1
    t2 = cache.resonant_table(2, 2)
    ref = build_resonant_table(2, 2)
    np.testing.assert_array_equal(t2.triples, ref.triples)
    np.testing.assert_array_equal(t1.ptr, ref.ptr)
    # changed M_cut: miss
    assert cache.load("resonant_table", {"d": 2, "M_cut": 1}) is None
    cache.resonant_table(2, 1)
    assert len(os.listdir(tmp_cache)) == 2


def test_corrupt_file_recomputes(tmp_cache):
    cache.resonant_table(2, 1)
    (path,) = list(tmp_cache.iterdir())
    path.write_bytes(b"not an npz file")
    with pytest.warns(UserWarning, match="corrupt"):
        t = cache.resonant_table(2, 1)
    np.testing.assert_array_equal(t.triples, build_resonant_table(2, 1).triples)


def test_concurrent_loads(tmp_cache):
    x, w = cache.sphere_nodes(2, 8, 16)
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(lambda _: cache.sphere_nodes(2, 8, 16), range(8)))
    for xo, wo in outs:
        np.testing.assert_array_equal(xo, x)
        np.testing.assert_array_equal(wo, w)
