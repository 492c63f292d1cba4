"""Explicit solution families: model solutions at nodes, the fiducial family
near a simple zero, its t -> infinity limit, the singular gauge and the
desk-scale gluing surrogate.

Fiducial profile equation
-------------------------
Substituting

    A = f(r) sigma3 (dz/z - dzbar/zbar),   f = 1/8 + (r/4) dh/dr,
    Phi = [[0, r^(1/2) e^h], [r^(1/2) e^(i theta) e^(-h), 0]] dz

into F^perp + t^2 [Phi ^ Phi*] = 0 gives

    h'' + h'/r = 8 t^2 r sinh(2h),

while dbar_A Phi = 0 holds for every h. With psi = 2h and s = (8/3) t r^(3/2)
this is the radial sinh-Gordon equation psi'' + psi'/s = sinh(psi), solved here
in x = log s as psi_xx = exp(2x) sinh(psi). Finiteness of the residual at r = 0
forces h ~ -(1/2) log r (psi_x -> -2/3); at s_max the linearised decay
psi ~ K0(s) gives the Robin condition psi_x = -s K1(s)/K0(s) psi.

The literal ansatz with e^(-i theta) and f = 1/8 + (1/2) dh/dr is kept as
``ansatz="literal"`` for auditing: its determinant is -zbar dz^2 and it does
not satisfy dbar_A Phi = 0.
"""
from dataclasses import dataclass, field
import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np
from scipy.integrate import solve_bvp
from scipy.interpolate import CubicHermiteSpline
from scipy.special import k0e, k1e

from . import _accel
from .errors import (AssumptionViolation, InvalidParameter, NoOverlap, ParameterError,
                     RangeError, SingularGauge, SolverError)
from .fields import (DZ, DZ_Z, SIGMA3, FieldPair, GaugeTransformation, HiggsField,
                     ResidualReport, UnitaryConnection, frob, gauge_act, residual_rescaled)
from .grid import LogPolarGrid
from .records import atomic_write
from .surface import ChartForm, NodeParameter, transition_pushforward

log = logging.getLogger(__name__)

CACHE_ENV = "HIGGSNECK_CACHE_DIR"
POLE_COEFFICIENT = -0.5
ODE_TEXT = "psi_xx = exp(2x) sinh(psi); psi_x(x0) = -2/3; psi_x(x1) = -s K1/K0 psi; s=(8/3) t r^1.5"
ODE_FINGERPRINT = hashlib.sha1(ODE_TEXT.encode()).hexdigest()[:12]
S_MIN = 1e-7
FAR_SCALE = 4.0


# -- model solutions at nodes ------------------------------------------------

@dataclass(frozen=True)
class ModelParameters:
    """(alpha, C) on R_rho^+; the minus side carries (-alpha, -C)."""

    alpha: float
    C: complex
    checked: bool = True

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "C", complex(self.C))
        if self.checked:
            if self.C == 0:
                raise AssumptionViolation("(A1) requires C != 0")
            if not self.alpha > 0:
                raise AssumptionViolation("alpha > 0 is required")

    @classmethod
    def unchecked(cls, alpha, C):
        """Bypass (A1) and the sign convention; used for plumbing tests with C = 0."""
        return cls(alpha, C, checked=False)

    def side_values(self, side):
        if side == "+":
            return self.alpha, self.C
        if side == "-":
            return -self.alpha, -self.C
        raise ValueError("side must be '+' or '-'")


def model_coefficients(alpha, C):
    """(1,0) coefficients of A^mod and Phi^mod in the dz/z frame."""
    return alpha * SIGMA3, C * SIGMA3


def model_pair(params, chart, side="+"):
    """Model solution on an annulus chart (or grid), in the dz/z frame."""
    grid = chart.grid if hasattr(chart, "grid") and not isinstance(chart, LogPolarGrid) else chart
    if hasattr(chart, "side") and side == "+":
        side = chart.side
    alpha, C = params.side_values(side)
    a, phi = model_coefficients(alpha, C)
    return FieldPair(UnitaryConnection(grid, a, DZ_Z), HiggsField(grid, phi, DZ_Z))


@dataclass
class NeckGluing:
    node: NodeParameter
    plus: FieldPair
    minus: FieldPair
    mismatch: dict

    @property
    def max_mismatch(self):
        return max(self.mismatch.values())


def glue_model_neck(params, node, nr=64, ntheta=32, minus_params=None):
    """Glue the (alpha, C) model on R_rho^+ to (-alpha, -C) on R_rho^- across zw = t.

    ``minus_params`` overrides the minus-side (alpha, C) pair (as given, no sign
    flip) to audit mismatches.
    """
    if not isinstance(node, NodeParameter):
        node = NodeParameter(node)
    if node.pinched:
        raise NoOverlap("cannot glue across a pinched node")
    grid = LogPolarGrid.annulus(node.rho, 1.0, nr, ntheta)
    plus = model_pair(params, grid, "+")
    if minus_params is None:
        am, cm = params.side_values("-")
    else:
        am, cm = minus_params
    a_m, p_m = model_coefficients(am, cm)
    minus = FieldPair(UnitaryConnection(grid, a_m, DZ_Z), HiggsField(grid, p_m, DZ_Z))

    # plus-side coefficients as functions of z, pushed to the w chart
    a_p, p_p = model_coefficients(*params.side_values("+"))
    w = grid.z
    mism = {}
    for name, cp, cm_ in (("connection", a_p, minus.A.a), ("higgs", p_p, minus.Phi.phi)):
        form = ChartForm(lambda z, c=cp: np.broadcast_to(c, np.shape(z) + (2, 2)), DZ_Z, "+")
        pushed = transition_pushforward(form, node)(w)
        mism[name] = float(np.max(np.abs(pushed - cm_)))
    return NeckGluing(node, plus, minus, mism)


# -- fiducial family ---------------------------------------------------------------

def _x_of_r(r, t):
    return np.log(8.0 * t / 3.0) + 1.5 * np.log(r)


def _r_of_s(s, t):
    return (3.0 * s / (8.0 * t)) ** (2.0 / 3.0)


@dataclass
class FiducialProfile:
    """Radial profile h_t on (r_min, r_max] with a logarithmic pole at r = 0."""

    t: float
    r_min: float
    r_max: float
    tolerance: float
    x: np.ndarray
    psi: np.ndarray
    psi_x: np.ndarray
    pole_coefficient: float = POLE_COEFFICIENT
    ode_fingerprint: str = ODE_FINGERPRINT
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, float)
        self.psi = np.asarray(self.psi, float)
        self.psi_x = np.asarray(self.psi_x, float)
        psi_xx = np.exp(2 * self.x) * np.sinh(self.psi)
        self._psi = CubicHermiteSpline(self.x, self.psi, self.psi_x)
        self._psi_x = CubicHermiteSpline(self.x, self.psi_x, psi_xx)

    def _x(self, r):
        r = np.asarray(r, float)
        if np.any(r < self.r_min * (1 - 1e-12)) or np.any(r > self.r_max * (1 + 1e-12)):
            raise RangeError(f"r outside profile range [{self.r_min:.3g}, {self.r_max:.3g}]")
        return np.clip(_x_of_r(r, self.t), self.x[0], self.x[-1])

    def h(self, r):
        return 0.5 * self._psi(self._x(r))

    def r_dh_dr(self, r):
        """r dh/dr = (3/4) dpsi/dx."""
        return 0.75 * self._psi_x(self._x(r))

    def dh_dr(self, r):
        return self.r_dh_dr(r) / np.asarray(r, float)

    def header(self):
        return {"t": self.t, "tolerance": self.tolerance, "pole_coefficient": self.pole_coefficient,
                "ode_fingerprint": self.ode_fingerprint, "r_min": self.r_min, "r_max": self.r_max}

    def to_json(self):
        r = _r_of_s(np.exp(self.x), self.t)
        rows = [[float(a), float(b), float(c), float(d), float(e)] for a, b, c, d, e in
                zip(r, 0.5 * self.psi, 0.75 * self.psi_x / r, self.x, self.psi_x)]
        return {"header": self.header(), "columns": ["r", "h", "dh_dr", "x", "psi_x"],
                "rows": rows}

    @classmethod
    def from_json(cls, doc):
        hd = doc["header"]
        rows = np.asarray(doc["rows"], float)
        return cls(hd["t"], hd["r_min"], hd["r_max"], hd["tolerance"], rows[:, 3],
                   2 * rows[:, 1], rows[:, 4], hd["pole_coefficient"], hd["ode_fingerprint"],
                   {"cached": True})


def _cache_dir(cache_dir):
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV)
    return Path(cache_dir) if cache_dir else None


def _cache_key(t, r_max, tol):
    raw = f"{t!r}:{r_max!r}:{tol!r}:{S_MIN!r}:{ODE_FINGERPRINT}"
    return "fiducial_" + hashlib.sha1(raw.encode()).hexdigest()[:16] + ".json"


def _solve_psi(s_max, tol, nodes=400, max_nodes=500_000):
    x0, x1 = np.log(S_MIN), np.log(s_max)
    x = np.linspace(x0, x1, nodes)
    s = np.exp(x)
    guess = np.vstack([(2.0 / 3.0) * np.log1p(1.0 / s), -(2.0 / 3.0) / (1.0 + s)])
    rob = -s_max * k1e(s_max) / k0e(s_max)

    def rhs(x, y):
        return np.vstack([y[1], np.exp(2 * x) * np.sinh(y[0])])

    def bc(ya, yb):
        return np.array([ya[1] + 2.0 / 3.0, yb[1] - rob * yb[0]])

    def jac(x, y):
        n = x.size
        J = np.zeros((2, 2, n))
        J[0, 1] = 1.0
        J[1, 0] = np.exp(2 * x) * np.cosh(y[0])
        return J

    sol = solve_bvp(rhs, bc, x, guess, fun_jac=jac, tol=tol, bc_tol=tol, max_nodes=max_nodes)
    diag = {"status": int(sol.status), "message": sol.message, "nodes": int(sol.x.size),
            "max_rms_residual": float(np.max(sol.rms_residuals)) if sol.rms_residuals is not None
            else None}
    if not sol.success:
        raise SolverError(f"profile BVP did not converge: {sol.message}", diag)
    return sol, diag


def fiducial_profile(t, r_max=1.0, tol=1e-8, cache_dir=None):
    """Solve for h_t on (r_min, max(r_max, 4 t^(-2/3))].

    Decay of h is imposed at the far end through the linearized (K0) Robin
    condition; the effective r_max is raised to the quiescent scale
    4 t^(-2/3) when needed. Profiles are cached as JSON under
    ``cache_dir`` (or $HIGGSNECK_CACHE_DIR) when either is set.
    """
    if not t > 0:
        raise InvalidParameter("t must be positive")
    if not r_max >= 1:
        raise InvalidParameter("r_max must be >= 1")
    t, r_max = float(t), float(r_max)
    r_far = max(r_max, FAR_SCALE * t ** (-2.0 / 3.0))
    cdir = _cache_dir(cache_dir)
    path = cdir / _cache_key(t, r_far, tol) if cdir else None
    if path is not None and path.exists():
        try:
            return FiducialProfile.from_json(json.loads(path.read_text()))
        except (ValueError, KeyError) as exc:
            log.warning("ignoring unreadable profile cache %s: %s", path, exc)

    s_max = 8.0 * t / 3.0 * r_far ** 1.5
    sol, diag = _solve_psi(s_max, tol)
    prof = FiducialProfile(t, _r_of_s(S_MIN, t), r_far, tol, sol.x, sol.y[0], sol.y[1],
                           diagnostics=diag)
    if path is not None:
        atomic_write(path, json.dumps(prof.to_json()))
    return prof


def _radial(grid):
    return np.exp(grid.s)


def assemble_fiducial(grid, h, r_dh, ansatz="holomorphic"):
    """Fiducial pair in the dz frame from radial samples of h and r dh/dr."""
    h = np.asarray(h, float)[:, None] * np.ones(grid.ntheta)[None, :]
    r_dh = np.asarray(r_dh, float)[:, None] * np.ones(grid.ntheta)[None, :]
    r, z, th = grid.r, grid.z, grid.TH
    if ansatz == "holomorphic":
        f = 0.125 + 0.25 * r_dh
        lower = np.sqrt(r) * np.exp(1j * th) * np.exp(-h)
    elif ansatz == "literal":
        f = 0.125 + 0.5 * r_dh / r
        lower = np.sqrt(r) * np.exp(-1j * th) * np.exp(-h)
    else:
        raise ValueError(f"unknown ansatz {ansatz!r}")
    a = (f / z)[..., None, None] * SIGMA3
    phi = np.zeros(grid.shape + (2, 2), complex)
    phi[..., 0, 1] = np.sqrt(r) * np.exp(h)
    phi[..., 1, 0] = lower
    return FieldPair(UnitaryConnection(grid, a, DZ), HiggsField(grid, phi, DZ))


def fiducial_pair(profile, grid, ansatz="holomorphic"):
    """(A_t^fid, Phi_t^fid) on ``grid`` from a solved profile."""
    r = _radial(grid)
    if r[0] < profile.r_min * (1 - 1e-12) or r[-1] > profile.r_max * (1 + 1e-12):
        raise RangeError(
            f"grid radii [{r[0]:.3g}, {r[-1]:.3g}] outside profile range "
            f"[{profile.r_min:.3g}, {profile.r_max:.3g}]")
    return assemble_fiducial(grid, profile.h(r), profile.r_dh_dr(r), ansatz)


def limiting_fiducial_pair(grid, ansatz="holomorphic"):
    """The h = 0 limit (A_inf^fid, Phi_inf^fid), singular at z = 0."""
    n = len(grid.s)
    return assemble_fiducial(grid, np.zeros(n), np.zeros(n), ansatz)


def pole_part_pair(grid):
    """Fiducial ansatz with h = -(1/2) log r: A = 0, Phi = [[0, 1], [z, 0]] dz."""
    s = grid.s
    return assemble_fiducial(grid, -0.5 * s, np.full(len(s), -0.5))


def default_disk_grid(r_min=0.05, r_max=1.0, nr=256, ntheta=128, order=6):
    return LogPolarGrid.annulus(r_min, r_max, nr, ntheta, order)


# -- singular gauge --------------------------------------------------------------

def singular_gauge(grid):
    """g_inf = diag(|z|^(-1/4), |z|^(1/4)) with its exact dzetabar derivative."""
    if not np.all(np.isfinite(grid.s)):
        raise SingularGauge("grid contains z = 0")
    r = grid.r
    g = np.zeros(grid.shape + (2, 2), complex)
    g[..., 0, 0] = r ** -0.25
    g[..., 1, 1] = r ** 0.25
    dg = np.zeros_like(g)
    # d/dzetabar = (1/2) d/ds on radial functions
    dg[..., 0, 0] = -0.125 * r ** -0.25
    dg[..., 1, 1] = 0.125 * r ** 0.25
    return GaugeTransformation(grid, g, "complex", dg)


def singular_gauge_apply(grid, pair):
    """Apply the complex gauge g_inf to ``pair``."""
    if grid is not pair.grid and grid != pair.grid:
        raise ValueError("grid does not match the pair's grid")
    if np.exp(grid.s[0]) <= 0:
        raise SingularGauge("singular gauge undefined at z = 0")
    A2, P2 = gauge_act(singular_gauge(grid), pair.A, pair.Phi)
    return FieldPair(A2, P2)


# -- gluing surrogate ------------------------------------------------------------

def cutoff(r, r_c, kind="cosine"):
    """chi = 1 on r <= r_c, 0 on r >= 2 r_c; returns (chi, r dchi/dr)."""
    r = np.asarray(r, float)
    u = np.clip((r - r_c) / r_c, 0.0, 1.0)
    inside = (r > r_c) & (r < 2 * r_c)
    if kind == "cosine":
        chi = 0.5 * (1 + np.cos(np.pi * u))
        dchi = np.where(inside, -0.5 * np.pi * np.sin(np.pi * u) / r_c, 0.0)
    elif kind == "polynomial":
        chi = 1 - (10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5)
        dchi = np.where(inside, -(30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4) / r_c, 0.0)
    else:
        raise ParameterError(f"unknown cutoff {kind!r}")
    return chi, r * dchi


@dataclass
class GlueResult:
    t: float
    r_c: float
    pair: FieldPair
    report: ResidualReport
    outside_sup: float
    cutoff: str


def approximate_glue_desingularization(t, r_c, cutoff_kind="cosine", r_min=0.02, nr=512,
                                       ntheta=64, order=4, tol=1e-8, cache_dir=None):
    """Interpolate h_t to 0 across [r_c, 2 r_c] and assemble the fiducial fields.

    The second equation stays exact because any radial profile satisfies it;
    the first equation picks up a defect only where the cutoff varies.
    """
    if not 0 < r_c < 0.5:
        raise ParameterError("cutoff radius must satisfy 0 < r_c < 1/2")
    if not r_min < r_c:
        raise ParameterError("r_min must lie below the cutoff radius")
    prof = fiducial_profile(t, 1.0, tol, cache_dir)
    grid = LogPolarGrid.annulus(r_min, 1.0, nr, ntheta, order)
    r = _radial(grid)
    chi, r_dchi = cutoff(r, r_c, cutoff_kind)
    h, rh = prof.h(r), prof.r_dh_dr(r)
    pair = assemble_fiducial(grid, chi * h, r_dchi * h + chi * rh)
    rep = residual_rescaled(pair.A, pair.Phi, t)
    # stencil reach beyond the window
    pad = (order // 2 + 1) * grid.ds
    outside = (grid.S < np.log(r_c) - pad) | (grid.S > np.log(2 * r_c) + pad)
    rep_out = residual_rescaled(pair.A, pair.Phi, t, mask=outside)
    return GlueResult(float(t), float(r_c), pair, rep, rep_out.sup(), cutoff_kind)


def glue_sweep(ts, r_c=0.2, cutoff_kind="cosine", **kw):
    """Residual sup across t with a least-squares log-linear rate."""
    results = [approximate_glue_desingularization(t, r_c, cutoff_kind, **kw) for t in ts]
    sups = np.array([res.report.sup() for res in results])
    slope = float(np.polyfit(np.asarray(ts, float), np.log(sups), 1)[0]) if len(ts) > 1 else None
    return results, sups, slope


# -- proximity to a model solution ------------------------------------------------

@dataclass
class ProximityFit:
    slope: float
    intercept: float
    exact_match: bool
    decaying: bool
    tau: np.ndarray = None
    distance: np.ndarray = None


def biquard_boalch_proximity(pair, params, side="+", exact_tol=1e-13, decay_tol=0.05):
    """Fit log of the distance to the model solution against tau = |log r|."""
    grid = pair.grid
    alpha, C = params.side_values(side)
    a, p = model_coefficients(alpha, C)
    dA = frob(pair.A.zeta - a)
    dP = frob(pair.Phi.zeta - p)
    dist = np.maximum(dA, dP).max(axis=1)
    tau = np.abs(grid.s)
    if np.max(dist) <= exact_tol:
        return ProximityFit(0.0, -np.inf, True, True, tau, dist)
    keep = dist > exact_tol
    slope, icpt = np.polyfit(tau[keep], np.log(dist[keep]), 1)
    return ProximityFit(float(slope), float(icpt), False, bool(slope < -decay_tol), tau, dist)
