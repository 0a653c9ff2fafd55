"""
Hot loops of the lattice machinery, in two interchangeable flavours.

``numba`` kernels are used when numba imports and the environment variable
``QMCIS_BACKEND`` is not set to ``numpy``. The pure-numpy versions are always
importable (suffix ``_np``) so the two can be compared directly; see
``benchmarks/bench_kernels.py``.

Kernels
-------
cbc_scan(theta, weights, candidates)
    For each candidate ``z`` return ``sum_i theta[(i*z) % n] * weights[i]``.
esp_update(e, y)
    In-place elementary-symmetric-polynomial update of per-point
    accumulators ``e`` (orders x points) with one more variable per point.
esp_weighted_mean(e, gammas)
    ``mean_i sum_l gammas[l-1] * e[l, i]`` over orders ``l >= 1``.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit, prange
    NUMBA_AVAILABLE = True
    # prefer OpenMP/workqueue; an outdated system TBB only produces warnings
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda func: func

    prange = range


def _requested_backend():
    choice = os.environ.get("QMCIS_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"QMCIS_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy" or not NUMBA_AVAILABLE:
        return "numpy"
    return "numba"


BACKEND = _requested_backend()

# max gathered entries per numpy chunk in cbc_scan
_CHUNK_ENTRIES = 1 << 22


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def cbc_scan_np(theta, weights, candidates):
    n = theta.shape[0]
    idx = np.arange(n, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    out = np.empty(candidates.shape[0])
    rows = max(1, _CHUNK_ENTRIES // n)
    for start in range(0, candidates.shape[0], rows):
        zc = candidates[start:start + rows]
        gathered = theta[np.multiply.outer(zc, idx) % n]
        out[start:start + rows] = gathered @ weights
    return out


def esp_update_np(e, y):
    for order in range(e.shape[0] - 1, 0, -1):
        e[order] += y * e[order - 1]


def esp_weighted_mean_np(e, gammas):
    return float(np.mean(gammas @ e[1:]))


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _cbc_scan_nb(theta, weights, candidates):
    n = theta.shape[0]
    m = candidates.shape[0]
    out = np.empty(m)
    for c in prange(m):
        z = candidates[c] % n
        acc = 0.0
        k = 0
        for i in range(n):
            acc += theta[k] * weights[i]
            k += z
            if k >= n:
                k -= n
        out[c] = acc
    return out


@njit(cache=True)
def _esp_update_nb(e, y):
    orders, n = e.shape
    # descending orders so each update reads the not-yet-updated lower row
    for order in range(orders - 1, 0, -1):
        for i in range(n):
            e[order, i] += y[i] * e[order - 1, i]


@njit(cache=True)
def _esp_weighted_mean_nb(e, gammas):
    orders, n = e.shape
    total = 0.0
    for order in range(1, orders):
        acc = 0.0
        for i in range(n):
            acc += e[order, i]
        total += gammas[order - 1] * acc
    return total / n


def cbc_scan_nb(theta, weights, candidates):
    return _cbc_scan_nb(np.ascontiguousarray(theta, dtype=np.float64),
                        np.ascontiguousarray(weights, dtype=np.float64),
                        np.ascontiguousarray(candidates, dtype=np.int64))


def esp_update_nb(e, y):
    _esp_update_nb(e, np.ascontiguousarray(y, dtype=np.float64))


def esp_weighted_mean_nb(e, gammas):
    return float(_esp_weighted_mean_nb(e, np.ascontiguousarray(gammas, dtype=np.float64)))


if BACKEND == "numba":
    cbc_scan = cbc_scan_nb
    esp_update = esp_update_nb
    esp_weighted_mean = esp_weighted_mean_nb
else:
    cbc_scan = cbc_scan_np
    esp_update = esp_update_np
    esp_weighted_mean = esp_weighted_mean_np
