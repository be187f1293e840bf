"""Numeric hot kernels: numba-jitted with a pure-numpy fallback.

The backend is chosen at import time.  numba is used when it imports
cleanly unless the environment variable PROMISH_DISABLE_NUMBA is set to
anything other than "" or "0", in which case the numpy implementations
are used.  `promish kernel-bench` times both backends side by side.

All kernels keep strict IEEE arithmetic (no fastmath, no parallel
reductions) so that scalar and batched code paths produce bitwise
identical distances within a backend.  Search and oracle results are
compared with zero tolerance, which only works because every distance
in the package funnels through these functions.
"""

from __future__ import annotations

import os

import numpy as np


def numba_disabled_by_env() -> bool:
    flag = os.environ.get("PROMISH_DISABLE_NUMBA", "")
    return flag not in ("", "0")


# --- pure numpy implementations -------------------------------------------

# Row-chunk size cap keeps the broadcast temporaries below ~64 MB.
_CHUNK_FLOATS = 8_000_000


def _np_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full L2 distance matrix between rows of a (n,d) and b (m,d)."""
    n = a.shape[0]
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    step = max(1, _CHUNK_FLOATS // max(b.size, 1))
    for i in range(0, n, step):
        diff = a[i:i + step, None, :] - b[None, :, :]
        np.sqrt((diff * diff).sum(axis=-1), out=out[i:i + step])
    return out


def _np_pdist_max(coords: np.ndarray) -> float:
    """Largest pairwise L2 distance among rows; 0.0 for fewer than 2 rows."""
    if coords.shape[0] < 2:
        return 0.0
    return float(_np_pairwise(coords, coords).max())


def _np_tuple_diameters(coords: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Diameter of each row of `rows`, an (R, q) matrix of rank indexes."""
    r, q = rows.shape
    out = np.zeros(r, dtype=np.float64)
    for i in range(q):
        left = coords[rows[:, i]]
        for j in range(i + 1, q):
            diff = left - coords[rows[:, j]]
            dist = np.sqrt((diff * diff).sum(axis=-1))
            np.maximum(out, dist, out=out)
    return out


# --- numba implementations -------------------------------------------------

HAVE_NUMBA = False
_nb_pairwise = None
_nb_pdist_max = None
_nb_tuple_diameters = None

if not numba_disabled_by_env():
    try:
        import numba
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

if HAVE_NUMBA:
    @numba.njit(cache=True)
    def _nb_pairwise(a, b):  # pragma: no cover - exercised via dispatch
        n, d = a.shape
        m = b.shape[0]
        out = np.empty((n, m), dtype=np.float64)
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    t = a[i, k] - b[j, k]
                    acc += t * t
                out[i, j] = np.sqrt(acc)
        return out

    @numba.njit(cache=True)
    def _nb_pdist_max(coords):  # pragma: no cover
        n, d = coords.shape
        best = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    t = coords[i, k] - coords[j, k]
                    acc += t * t
                dist = np.sqrt(acc)
                if dist > best:
                    best = dist
        return best

    @numba.njit(cache=True)
    def _nb_tuple_diameters(coords, rows):  # pragma: no cover
        r, q = rows.shape
        d = coords.shape[1]
        out = np.zeros(r, dtype=np.float64)
        for t in range(r):
            best = 0.0
            for i in range(q):
                for j in range(i + 1, q):
                    acc = 0.0
                    for k in range(d):
                        diff = coords[rows[t, i], k] - coords[rows[t, j], k]
                        acc += diff * diff
                    dist = np.sqrt(acc)
                    if dist > best:
                        best = dist
            out[t] = best
        return out


BACKEND = "numba" if HAVE_NUMBA else "numpy"

if HAVE_NUMBA:
    _pairwise_impl = _nb_pairwise
    _pdist_max_impl = _nb_pdist_max
    _tuple_diameters_impl = _nb_tuple_diameters
else:
    _pairwise_impl = _np_pairwise
    _pdist_max_impl = _np_pdist_max
    _tuple_diameters_impl = _np_tuple_diameters


def _as_matrix(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array of row vectors")
    return arr


def pairwise_distances(a, b) -> np.ndarray:
    """L2 distance matrix between two row-vector sets of equal dimension."""
    am = _as_matrix(a)
    bm = _as_matrix(b)
    if am.shape[1] != bm.shape[1]:
        raise ValueError("dimension mismatch: %d vs %d" % (am.shape[1], bm.shape[1]))
    return _pairwise_impl(am, bm)


def point_distance(a, b) -> float:
    """L2 distance between two vectors, same arithmetic as the batch path."""
    am = np.ascontiguousarray(a, dtype=np.float64).reshape(1, -1)
    bm = np.ascontiguousarray(b, dtype=np.float64).reshape(1, -1)
    if am.shape[1] != bm.shape[1]:
        raise ValueError("dimension mismatch: %d vs %d" % (am.shape[1], bm.shape[1]))
    return float(_pairwise_impl(am, bm)[0, 0])


def pdist_max(coords) -> float:
    """Diameter (max pairwise L2 distance) of a set of row vectors."""
    return float(_pdist_max_impl(_as_matrix(coords)))


def tuple_diameters(coords, rows) -> np.ndarray:
    """Diameters for many index tuples at once.

    coords: (N, d) float64 matrix.
    rows:   (R, q) integer matrix; each row lists q row indexes of coords.
    """
    cm = _as_matrix(coords)
    rm = np.ascontiguousarray(rows, dtype=np.int64)
    if rm.ndim != 2:
        raise ValueError("rows must be 2-d")
    if rm.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    return _tuple_diameters_impl(cm, rm)


def implementations():
    """Both backend function sets, for the kernel benchmark."""
    impls = {"numpy": {
        "pairwise_distances": _np_pairwise,
        "pdist_max": _np_pdist_max,
        "tuple_diameters": _np_tuple_diameters,
    }}
    if HAVE_NUMBA:
        impls["numba"] = {
            "pairwise_distances": _nb_pairwise,
            "pdist_max": _nb_pdist_max,
            "tuple_diameters": _nb_tuple_diameters,
        }
    return impls
