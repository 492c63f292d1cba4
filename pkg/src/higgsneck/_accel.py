"""Pointwise 2x2 matrix kernels and periodic stencils.

Set ``HIGGSNECK_NUMBA=0`` to force the pure-numpy path. Numba is used when
importable and the flag is unset or truthy.
"""
import os

import numpy as np

_flag = os.environ.get("HIGGSNECK_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

try:
    if not _want_numba:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def _np_matmul2(a, b):
    return np.matmul(a, b)


def _np_comm2(a, b):
    return np.matmul(a, b) - np.matmul(b, a)


def _np_periodic_stencil(f, offsets, weights):
    # derivative along axis 1 of an (n0, n1, k) array
    out = np.zeros_like(f)
    for off, w in zip(offsets, weights):
        out += w * np.roll(f, -off, axis=1)
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def _nb_matmul2(a, b):
        n = a.shape[0]
        out = np.empty_like(a)
        for p in range(n):
            for i in range(2):
                for j in range(2):
                    out[p, i, j] = a[p, i, 0] * b[p, 0, j] + a[p, i, 1] * b[p, 1, j]
        return out

    @njit(cache=True)
    def _nb_comm2(a, b):
        n = a.shape[0]
        out = np.empty_like(a)
        for p in range(n):
            for i in range(2):
                for j in range(2):
                    out[p, i, j] = (a[p, i, 0] * b[p, 0, j] + a[p, i, 1] * b[p, 1, j]
                                    - b[p, i, 0] * a[p, 0, j] - b[p, i, 1] * a[p, 1, j])
        return out

    @njit(cache=True)
    def _nb_periodic_stencil(f, offsets, weights):
        n0, n1, k = f.shape
        out = np.zeros_like(f)
        for i in range(n0):
            for j in range(n1):
                for q in range(offsets.shape[0]):
                    jj = (j + offsets[q]) % n1
                    w = weights[q]
                    for c in range(k):
                        out[i, j, c] += w * f[i, jj, c]
        return out


def backend():
    return "numba" if HAS_NUMBA else "numpy"


def matmul2(a, b, use_numba=None):
    """Pointwise product of two stacks of 2x2 matrices with shape (..., 2, 2)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    if _use(use_numba):
        shape = a.shape
        out = _nb_matmul2(np.ascontiguousarray(a.reshape(-1, 2, 2)),
                          np.ascontiguousarray(b.reshape(-1, 2, 2)))
        return out.reshape(shape)
    return _np_matmul2(a, b)


def comm2(a, b, use_numba=None):
    """Pointwise commutator ab - ba of 2x2 matrix stacks."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    if _use(use_numba):
        shape = a.shape
        out = _nb_comm2(np.ascontiguousarray(a.reshape(-1, 2, 2)),
                        np.ascontiguousarray(b.reshape(-1, 2, 2)))
        return out.reshape(shape)
    return _np_comm2(a, b)


def periodic_stencil(f, offsets, weights, use_numba=None):
    """Apply a periodic stencil along axis 1 of an array shaped (n0, n1, ...)."""
    f = np.asarray(f, dtype=complex)
    shape = f.shape
    f3 = np.ascontiguousarray(f.reshape(shape[0], shape[1], -1))
    offsets = np.asarray(offsets, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    if _use(use_numba):
        out = _nb_periodic_stencil(f3, offsets, weights.astype(complex))
    else:
        out = _np_periodic_stencil(f3, offsets, weights)
    return out.reshape(shape)


def _use(use_numba):
    if use_numba is None:
        return HAS_NUMBA
    return bool(use_numba) and HAS_NUMBA
