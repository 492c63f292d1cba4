"""Log-polar chart grids and finite-difference operators.

A chart point is z = exp(s + i theta). The coordinate zeta = s + i theta is
conformal and dzeta = dz/z, so neck and disk charts share one grid type.
tau = |log r| is the cylindrical coordinate used on necks.
"""
from dataclasses import dataclass, field
from functools import cached_property
import hashlib

import numpy as np
import scipy.sparse as sp

from . import _accel
from .errors import ResolutionError

MIN_POINTS = 8


def fd_weights(z0, x, m):
    """Fornberg weights for the m-th derivative at z0 from nodes x."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5 = 1.0, c4
        c4 = x[i] - z0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def diff_matrix(n, h, order=2):
    """Sparse first-derivative matrix on n uniform nodes, one-sided at the ends."""
    if order % 2 or order < 2:
        raise ValueError("order must be a positive even integer")
    width = order + 1
    if n < width:
        raise ResolutionError(f"need at least {width} nodes for order {order}, got {n}")
    rows, cols, vals = [], [], []
    half = order // 2
    nodes = np.arange(n, dtype=float)
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = np.arange(lo, lo + width)
        w = fd_weights(float(i), nodes[idx], 1) / h
        rows.extend([i] * width)
        cols.extend(idx)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def periodic_weights(order=2):
    half = order // 2
    offs = np.arange(-half, half + 1)
    w = fd_weights(0.0, offs.astype(float), 1)
    keep = w != 0
    return offs[keep], w[keep]


@dataclass(frozen=True)
class LogPolarGrid:
    """Tensor grid in (s, theta), s = log r, theta periodic on [0, 2 pi)."""

    s: np.ndarray
    ntheta: int
    order: int = 2
    meta: dict = field(default_factory=dict, compare=False)
    theta_method: str = "spectral"

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", s)
        if s.ndim != 1 or len(s) < MIN_POINTS or self.ntheta < MIN_POINTS:
            raise ResolutionError(
                f"grid too coarse: {len(s)} x {self.ntheta} (need >= {MIN_POINTS} per direction)")
        if self.theta_method not in ("spectral", "fd"):
            raise ValueError("theta_method must be 'spectral' or 'fd'")
        ds = np.diff(s)
        if np.any(ds <= 0) or not np.allclose(ds, ds[0], rtol=1e-9, atol=0):
            raise ValueError("s nodes must be uniform and increasing")

    @classmethod
    def annulus(cls, r_inner, r_outer=1.0, nr=256, ntheta=128, order=2, theta_method="spectral"):
        """Grid covering r_inner <= |z| <= r_outer."""
        if not 0 < r_inner < r_outer:
            raise ValueError("need 0 < r_inner < r_outer")
        s = np.linspace(np.log(r_inner), np.log(r_outer), nr)
        return cls(s, ntheta, order, {"kind": "annulus", "r_inner": r_inner, "r_outer": r_outer},
                   theta_method)

    @property
    def shape(self):
        return (len(self.s), self.ntheta)

    @property
    def ds(self):
        return float(self.s[1] - self.s[0])

    @property
    def dtheta(self):
        return 2 * np.pi / self.ntheta

    @cached_property
    def theta(self):
        return np.arange(self.ntheta) * self.dtheta

    @cached_property
    def S(self):
        return np.broadcast_to(self.s[:, None], self.shape)

    @cached_property
    def TH(self):
        return np.broadcast_to(self.theta[None, :], self.shape)

    @cached_property
    def r(self):
        return np.exp(self.S)

    @cached_property
    def z(self):
        return np.exp(self.S + 1j * self.TH)

    @property
    def tau(self):
        return np.abs(self.S)

    @cached_property
    def _ds_matrix(self):
        return diff_matrix(len(self.s), self.ds, self.order)

    @cached_property
    def _theta_stencil(self):
        offs, w = periodic_weights(self.order)
        return offs, w / self.dtheta

    @cached_property
    def _theta_wavenumbers(self):
        k = np.fft.fftfreq(self.ntheta, d=1.0 / self.ntheta)
        if self.ntheta % 2 == 0:
            k[self.ntheta // 2] = 0.0
        return k

    def with_order(self, order):
        return LogPolarGrid(self.s, self.ntheta, order, dict(self.meta), self.theta_method)

    def d_s(self, f):
        """Derivative along s of an array shaped (ns, ntheta, ...)."""
        f = np.asarray(f, dtype=complex)
        flat = f.reshape(f.shape[0], -1)
        return (self._ds_matrix @ flat).reshape(f.shape)

    def d_theta(self, f):
        """Derivative along theta: Fourier (default) or periodic stencil of the grid order."""
        if self.theta_method == "fd":
            offs, w = self._theta_stencil
            return _accel.periodic_stencil(f, offs, w)
        f = np.asarray(f, dtype=complex)
        k = self._theta_wavenumbers.reshape((1, -1) + (1,) * (f.ndim - 2))
        return np.fft.ifft(1j * k * np.fft.fft(f, axis=1), axis=1)

    def d_zeta(self, f):
        """d/dzeta = (d_s - i d_theta) / 2."""
        return 0.5 * (self.d_s(f) - 1j * self.d_theta(f))

    def d_zetabar(self, f):
        """d/dzetabar = (d_s + i d_theta) / 2."""
        return 0.5 * (self.d_s(f) + 1j * self.d_theta(f))

    @cached_property
    def quad_weights(self):
        """Composite Simpson in s (trapezoid if ns is even) times uniform theta weights."""
        n = len(self.s)
        h = self.ds
        if n % 2 == 1:
            w = np.ones(n)
            w[1:-1:2] = 4
            w[2:-1:2] = 2
            w *= h / 3
        else:
            w = np.full(n, h)
            w[0] = w[-1] = h / 2
        return w[:, None] * np.full(self.ntheta, self.dtheta)[None, :]

    def integrate(self, f):
        """Integral of f ds dtheta over the grid (f shaped (ns, ntheta))."""
        return np.sum(self.quad_weights * f)

    def fingerprint(self):
        h = hashlib.sha1()
        h.update(np.ascontiguousarray(self.s).tobytes())
        h.update(f"{self.ntheta}:{self.order}:{self.theta_method}".encode())
        return h.hexdigest()[:16]

    def describe(self):
        return {"s_min": float(self.s[0]), "s_max": float(self.s[-1]), "ns": len(self.s),
                "ntheta": self.ntheta, "order": self.order, "theta_method": self.theta_method}
