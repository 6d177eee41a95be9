"""Content-addressed on-disk cache for resonant tables and quadrature nodes.

Entries live in ``$WAVEKIN_CACHE_DIR`` (default ``~/.cache/wavekin``) as
``<kind>-<sha256 of the parameters>.npz``.  Writes go through a temporary
file and an atomic rename, so concurrent readers never see partial files.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

__all__ = ["cache_dir", "cache_key", "save", "load", "cached", "resonant_table", "sphere_nodes"]

ENV_VAR = "WAVEKIN_CACHE_DIR"


def cache_dir():
    d = Path(os.environ.get(ENV_VAR, Path.home() / ".cache" / "wavekin"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def cache_key(kind, params):
    blob = json.dumps({"kind": kind, "params": params}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _path(kind, params):
    return cache_dir() / f"{kind}-{cache_key(kind, params)[:32]}.npz"


def save(kind, params, arrays):
    path = _path(kind, params)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, __key__=np.array(cache_key(kind, params)), **arrays)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def load(kind, params):
    """Stored arrays, or None on a miss; unreadable or stale files count as misses."""
    path = _path(kind, params)
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as z:
            if str(z["__key__"]) != cache_key(kind, params):
                return None
            return {k: z[k] for k in z.files if k != "__key__"}
    except Exception as exc:  # corrupt entry: recompute
        warnings.warn(f"ignoring corrupt cache file {path.name}: {exc}")
        return None


def cached(kind, params, compute):
    """Load the entry or compute ``compute() -> dict of arrays`` and store it."""
    hit = load(kind, params)
    if hit is not None:
        return hit
    arrays = compute()
    save(kind, params, arrays)
    return arrays


def resonant_table(d, M_cut):
    """ResonantTable through the cache."""
    from .stochastic import ResonantTable, SiteGrid, build_resonant_table

    def compute():
        t = build_resonant_table(d, M_cut)
        return {"ptr": t.ptr, "triples": t.triples}

    arr = cached("resonant_table", {"d": int(d), "M_cut": int(M_cut)}, compute)
    return ResonantTable(SiteGrid(int(d), int(M_cut)), arr["ptr"], arr["triples"])


def sphere_nodes(k, n_polar, n_azimuth):
    """Sphere rule (nodes, weights) on S^k through the cache."""
    from .quadrature import sphere_rule

    def compute():
        x, w = sphere_rule(k, n_polar, n_azimuth)
        return {"x": x, "w": w}

    arr = cached("sphere_rule", {"k": int(k), "n_polar": int(n_polar), "n_azimuth": int(n_azimuth)},
                 compute)
    return arr["x"], arr["w"]
