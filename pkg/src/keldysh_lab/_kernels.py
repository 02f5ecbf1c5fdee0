"""Hot loops: validity-aware finite-difference stencils and CSR mat-vec.

Every kernel has a numba implementation and a pure-numpy one.  The backend is
chosen once at import from ``KELDYSH_LAB_BACKEND`` (``numba`` or ``numpy``;
default numba when importable) and can be switched with :func:`set_backend`.
``KELDYSH_LAB_THREADS`` caps numba's worker threads.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # an old system TBB makes numba fall back to another layer; that is fine
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_requested = os.environ.get("KELDYSH_LAB_BACKEND", "numba").strip().lower()
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"

if HAVE_NUMBA and os.environ.get("KELDYSH_LAB_THREADS"):
    numba.set_num_threads(max(1, min(int(os.environ["KELDYSH_LAB_THREADS"]),
                                     numba.config.NUMBA_NUM_THREADS)))


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, BACKEND = BACKEND, name
    return prev


# ---------------------------------------------------------------- numpy path

def _shift(a: np.ndarray, k: int, fill) -> np.ndarray:
    """out[i] = a[i + k] along axis 0, ``fill`` where out of range."""
    out = np.full_like(a, fill)
    n = a.shape[0]
    if k > 0:
        out[: n - k] = a[k:]
    elif k < 0:
        out[-k:] = a[: n + k]
    else:
        out[:] = a
    return out


def _d1_numpy(f, v, h):
    vm, vp = _shift(v, -1, False), _shift(v, 1, False)
    vmm, vpp = _shift(v, -2, False), _shift(v, 2, False)
    fm, fp = _shift(f, -1, 0.0), _shift(f, 1, 0.0)
    fmm, fpp = _shift(f, -2, 0.0), _shift(f, 2, 0.0)
    cen = v & vm & vp
    fwd = v & ~cen & vp & vpp
    bwd = v & ~cen & ~fwd & vm & vmm
    out = np.zeros_like(f)
    out[cen] = ((fp - fm) / (2.0 * h))[cen]
    out[fwd] = ((-3.0 * f + 4.0 * fp - fpp) / (2.0 * h))[fwd]
    out[bwd] = ((3.0 * f - 4.0 * fm + fmm) / (2.0 * h))[bwd]
    return out, cen | fwd | bwd


def _d2_numpy(f, v, h):
    s = {k: _shift(v, k, False) for k in (-3, -2, -1, 1, 2, 3)}
    g = {k: _shift(f, k, 0.0) for k in (-3, -2, -1, 1, 2, 3)}
    h2 = h * h
    cen = v & s[-1] & s[1]
    f4 = v & ~cen & s[1] & s[2] & s[3]
    b4 = v & ~cen & ~f4 & s[-1] & s[-2] & s[-3]
    f3 = v & ~cen & ~f4 & ~b4 & s[1] & s[2]
    b3 = v & ~cen & ~f4 & ~b4 & ~f3 & s[-1] & s[-2]
    out = np.zeros_like(f)
    out[cen] = ((g[-1] - 2.0 * f + g[1]) / h2)[cen]
    out[f4] = ((2.0 * f - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h2)[f4]
    out[b4] = ((2.0 * f - 5.0 * g[-1] + 4.0 * g[-2] - g[-3]) / h2)[b4]
    out[f3] = ((f - 2.0 * g[1] + g[2]) / h2)[f3]
    out[b3] = ((f - 2.0 * g[-1] + g[-2]) / h2)[b3]
    return out, cen | f4 | b4 | f3 | b3


def _csr_matvec_numpy(indptr, indices, data, x, rows):
    return np.bincount(rows, weights=data * x[indices], minlength=indptr.shape[0] - 1)


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _d1_line(f, v, h, out, ok):
        n = f.shape[0]
        for i in range(n):
            ok[i] = False
            out[i] = 0.0
            if not v[i]:
                continue
            if i >= 1 and i + 1 < n and v[i - 1] and v[i + 1]:
                out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h)
                ok[i] = True
            elif i + 2 < n and v[i + 1] and v[i + 2]:
                out[i] = (-3.0 * f[i] + 4.0 * f[i + 1] - f[i + 2]) / (2.0 * h)
                ok[i] = True
            elif i >= 2 and v[i - 1] and v[i - 2]:
                out[i] = (3.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]) / (2.0 * h)
                ok[i] = True

    @njit(cache=True)
    def _d2_line(f, v, h, out, ok):
        n = f.shape[0]
        h2 = h * h
        for i in range(n):
            ok[i] = False
            out[i] = 0.0
            if not v[i]:
                continue
            if i >= 1 and i + 1 < n and v[i - 1] and v[i + 1]:
                out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) / h2
                ok[i] = True
            elif i + 3 < n and v[i + 1] and v[i + 2] and v[i + 3]:
                out[i] = (2.0 * f[i] - 5.0 * f[i + 1] + 4.0 * f[i + 2] - f[i + 3]) / h2
                ok[i] = True
            elif i >= 3 and v[i - 1] and v[i - 2] and v[i - 3]:
                out[i] = (2.0 * f[i] - 5.0 * f[i - 1] + 4.0 * f[i - 2] - f[i - 3]) / h2
                ok[i] = True
            elif i + 2 < n and v[i + 1] and v[i + 2]:
                out[i] = (f[i] - 2.0 * f[i + 1] + f[i + 2]) / h2
                ok[i] = True
            elif i >= 2 and v[i - 1] and v[i - 2]:
                out[i] = (f[i] - 2.0 * f[i - 1] + f[i - 2]) / h2
                ok[i] = True

    @njit(parallel=True, cache=True)
    def _diff_nb(f, v, h, order, out, ok):
        # operates along axis 0; columns are independent
        for j in prange(f.shape[1]):
            if order == 1:
                _d1_line(f[:, j], v[:, j], h, out[:, j], ok[:, j])
            else:
                _d2_line(f[:, j], v[:, j], h, out[:, j], ok[:, j])

    @njit(parallel=True, cache=True)
    def _csr_matvec_nb(indptr, indices, data, x, out):
        for i in prange(indptr.shape[0] - 1):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * x[indices[k]]
            out[i] = acc


# ---------------------------------------------------------------- dispatch

def diff_axis(f: np.ndarray, valid: np.ndarray, h: float, axis: int, order: int,
              backend: str | None = None):
    """First or second derivative along ``axis`` using only valid nodes.

    Centered where both neighbours are valid, second-order one-sided otherwise
    (a three-point first-order second difference is the last resort).
    Returns ``(values, ok)`` where ``ok`` marks nodes with a usable stencil.
    """
    backend = backend or BACKEND
    f = np.ascontiguousarray(np.moveaxis(np.asarray(f, dtype=float), axis, 0))
    v = np.ascontiguousarray(np.moveaxis(np.asarray(valid, dtype=bool), axis, 0))
    if backend == "numba":
        out = np.empty_like(f)
        ok = np.empty_like(v)
        _diff_nb(f, v, float(h), int(order), out, ok)
    elif order == 1:
        out, ok = _d1_numpy(f, v, h)
    else:
        out, ok = _d2_numpy(f, v, h)
    return np.moveaxis(out, 0, axis), np.moveaxis(ok, 0, axis)


class CSR:
    """Minimal CSR container whose mat-vec runs through the selected backend."""

    def __init__(self, mat):
        mat = mat.tocsr()
        mat.sort_indices()
        self.shape = mat.shape
        self.indptr = mat.indptr.astype(np.int64)
        self.indices = mat.indices.astype(np.int64)
        self.data = mat.data.astype(float)
        self._rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def matvec(self, x: np.ndarray, backend: str | None = None) -> np.ndarray:
        backend = backend or BACKEND
        x = np.ascontiguousarray(x, dtype=float)
        if backend == "numba":
            out = np.empty(self.shape[0])
            _csr_matvec_nb(self.indptr, self.indices, self.data, x, out)
            return out
        return _csr_matvec_numpy(self.indptr, self.indices, self.data, x, self._rows)
