"""Hot numeric kernels with numba-compiled and pure-numpy twins.

The two expensive inner loops of the package live here: building the
N x N pairwise length-consistency matrix, and scanning RANSAC minimal
samples. Each has a numba ``@njit`` version and a pure-numpy fallback
that computes the same expressions in the same order, so results agree
between backends.

Backend selection happens once at import time:

* ``REGLAB_DISABLE_NUMBA=1`` in the environment forces the numpy path,
* otherwise numba is used when it imports cleanly, numpy if not.

``backend()`` reports which path is active; ``benchmarks/kernel_bench.py``
times the two against each other.
"""

from __future__ import annotations

import os

import numpy as np

_FORCED_OFF = os.environ.get("REGLAB_DISABLE_NUMBA", "").strip() in {"1", "true", "yes"}

if not _FORCED_OFF:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised only without numba
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False

if not _HAVE_NUMBA:
    def njit(*args, **kwargs):  # type: ignore[misc]
        """No-op decorator standing in for numba.njit."""
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


def backend() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if _HAVE_NUMBA else "numpy"


# -- pairwise length-consistency matrix ------------------------------------
#
# sc(i, j) = max(0, 1 - (||ps_i - ps_j|| - ||pt_i - pt_j||)^2 / sigma^2)
#
# Values lie in [0, 1]; 1 means the pair preserves length exactly.


def _consistency_matrix_np(src: np.ndarray, tgt: np.ndarray,
                           sigma: float, zero_diagonal: bool) -> np.ndarray:
    dxs = src[:, 0][:, None] - src[:, 0][None, :]
    dys = src[:, 1][:, None] - src[:, 1][None, :]
    dzs = src[:, 2][:, None] - src[:, 2][None, :]
    ds = np.sqrt(dxs * dxs + dys * dys + dzs * dzs)
    dxt = tgt[:, 0][:, None] - tgt[:, 0][None, :]
    dyt = tgt[:, 1][:, None] - tgt[:, 1][None, :]
    dzt = tgt[:, 2][:, None] - tgt[:, 2][None, :]
    dt = np.sqrt(dxt * dxt + dyt * dyt + dzt * dzt)
    gap = ds - dt
    m = np.maximum(0.0, 1.0 - (gap * gap) / (sigma * sigma))
    if zero_diagonal:
        np.fill_diagonal(m, 0.0)
    return m


@njit(cache=True)
def _consistency_matrix_jit(src, tgt, sigma, zero_diagonal):  # pragma: no cover - compiled
    n = src.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    inv = 1.0 / (sigma * sigma)
    for i in range(n):
        out[i, i] = 0.0 if zero_diagonal else 1.0
        for j in range(i + 1, n):
            dxs = src[i, 0] - src[j, 0]
            dys = src[i, 1] - src[j, 1]
            dzs = src[i, 2] - src[j, 2]
            ds = np.sqrt(dxs * dxs + dys * dys + dzs * dzs)
            dxt = tgt[i, 0] - tgt[j, 0]
            dyt = tgt[i, 1] - tgt[j, 1]
            dzt = tgt[i, 2] - tgt[j, 2]
            dt = np.sqrt(dxt * dxt + dyt * dyt + dzt * dzt)
            gap = ds - dt
            v = 1.0 - (gap * gap) * inv
            if v < 0.0:
                v = 0.0
            out[i, j] = v
            out[j, i] = v
    return out


def consistency_matrix(src: np.ndarray, tgt: np.ndarray, sigma: float,
                       zero_diagonal: bool = False) -> np.ndarray:
    """Full N x N length-consistency matrix for a correspondence set."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    if sigma <= 0.0:
        raise ValueError(f"consistency_matrix: sigma must be positive, got {sigma}")
    if _HAVE_NUMBA:
        return _consistency_matrix_jit(src, tgt, sigma, zero_diagonal)
    return _consistency_matrix_np(src, tgt, sigma, zero_diagonal)


def consistency_matrix_reference(src: np.ndarray, tgt: np.ndarray, sigma: float,
                                 zero_diagonal: bool = False) -> np.ndarray:
    """Backend-independent consistency matrix (always the numpy path).

    Bit-identical regardless of whether numba is active. The learned model
    embeds correspondences through this variant so that model outputs, and
    anything trained from them, do not depend on the kernel backend; the
    dispatched ``consistency_matrix`` may differ from it by ~1 ULP due to
    compiler-level float contraction.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    if sigma <= 0.0:
        raise ValueError(f"consistency_matrix: sigma must be positive, got {sigma}")
    return _consistency_matrix_np(src, tgt, sigma, zero_diagonal)


def consistency_row(src: np.ndarray, tgt: np.ndarray, i: int, sigma: float) -> np.ndarray:
    """Single row of the consistency matrix (cheap, numpy only)."""
    ds = np.sqrt(((src - src[i]) ** 2).sum(axis=1))
    dt = np.sqrt(((tgt - tgt[i]) ** 2).sum(axis=1))
    gap = ds - dt
    return np.maximum(0.0, 1.0 - (gap * gap) / (sigma * sigma))


# -- RANSAC sample scan ------------------------------------------------------
#
# For each row of ``samples`` (three distinct correspondence indices) fit a
# rigid transform to the triple and count strict inliers at ``delta``.
# Returns (best_iteration, best_count); ties keep the earliest iteration,
# geometrically degenerate triples are skipped with count -1. best_iteration
# is -1 when every triple was degenerate.


def _fit_triple(a: np.ndarray, b: np.ndarray):
    """Unit-weight rigid fit to three points. Returns (ok, R, t)."""
    ca = np.array([a[:, 0].mean(), a[:, 1].mean(), a[:, 2].mean()])
    cb = np.array([b[:, 0].mean(), b[:, 1].mean(), b[:, 2].mean()])
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-9 * s[0]:
        return False, np.eye(3), np.zeros(3)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0.0:
        return False, np.eye(3), np.zeros(3)
    flip = np.ones(3)
    flip[2] = d
    r = (vt.T * flip) @ u.T
    t = cb - r @ ca
    return True, r, t


def _ransac_scan_np(src, tgt, samples, delta):
    best_iter = -1
    best_count = -1
    d2 = delta * delta
    for m in range(samples.shape[0]):
        idx = samples[m]
        ok, r, t = _fit_triple(src[idx], tgt[idx])
        if not ok:
            continue
        res = src @ r.T + t - tgt
        count = int(((res * res).sum(axis=1) < d2).sum())
        if count > best_count:
            best_count = count
            best_iter = m
    return best_iter, best_count


@njit(cache=True)
def _ransac_scan_jit(src, tgt, samples, delta):  # pragma: no cover - compiled
    n = src.shape[0]
    d2 = delta * delta
    best_iter = -1
    best_count = -1
    a = np.empty((3, 3), dtype=np.float64)
    b = np.empty((3, 3), dtype=np.float64)
    for m in range(samples.shape[0]):
        for k in range(3):
            for c in range(3):
                a[k, c] = src[samples[m, k], c]
                b[k, c] = tgt[samples[m, k], c]
        ca = np.array([a[:, 0].mean(), a[:, 1].mean(), a[:, 2].mean()])
        cb = np.array([b[:, 0].mean(), b[:, 1].mean(), b[:, 2].mean()])
        h = (a - ca).T @ (b - cb)
        u, s, vt = np.linalg.svd(h)
        if s[1] <= 1e-9 * s[0]:
            continue
        vu = vt.T @ u.T
        det = (vu[0, 0] * (vu[1, 1] * vu[2, 2] - vu[1, 2] * vu[2, 1])
               - vu[0, 1] * (vu[1, 0] * vu[2, 2] - vu[1, 2] * vu[2, 0])
               + vu[0, 2] * (vu[1, 0] * vu[2, 1] - vu[1, 1] * vu[2, 0]))
        if det == 0.0:
            continue
        d = 1.0 if det > 0.0 else -1.0
        v = vt.T.copy()
        for row in range(3):
            v[row, 2] *= d
        r = v @ u.T
        t = cb - r @ ca
        count = 0
        for i in range(n):
            rx = (r[0, 0] * src[i, 0] + r[0, 1] * src[i, 1] + r[0, 2] * src[i, 2]
                  + t[0] - tgt[i, 0])
            ry = (r[1, 0] * src[i, 0] + r[1, 1] * src[i, 1] + r[1, 2] * src[i, 2]
                  + t[1] - tgt[i, 1])
            rz = (r[2, 0] * src[i, 0] + r[2, 1] * src[i, 1] + r[2, 2] * src[i, 2]
                  + t[2] - tgt[i, 2])
            if rx * rx + ry * ry + rz * rz < d2:
                count += 1
        if count > best_count:
            best_count = count
            best_iter = m
    return best_iter, best_count


def ransac_scan(src: np.ndarray, tgt: np.ndarray, samples: np.ndarray,
                delta: float) -> tuple[int, int]:
    """Score every minimal sample; return (best_iteration, best_count)."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    samples = np.ascontiguousarray(samples, dtype=np.int64)
    if _HAVE_NUMBA:
        best_iter, best_count = _ransac_scan_jit(src, tgt, samples, delta)
        return int(best_iter), int(best_count)
    return _ransac_scan_np(src, tgt, samples, delta)


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs (no-op on the numpy path)."""
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    consistency_matrix(pts, pts, 0.1)
    ransac_scan(pts, pts, np.array([[0, 1, 2]], dtype=np.int64), 0.1)
