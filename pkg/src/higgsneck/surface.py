"""Plumbing data for smooth and nodal surfaces, neck charts and quadratic differentials.

Only local charts are represented: a surface is its genus, its node
parameters and the annuli R_rho^+- around each node. All analysis is chart-local.
"""
from dataclasses import dataclass, field
import json
import logging
from importlib import resources

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import (DegenerateDifferential, InconclusiveClassification, InvalidGenus,
                     InvalidParameter, NoOverlap)
from .grid import LogPolarGrid

log = logging.getLogger(__name__)

DEFAULT_NR = 256
DEFAULT_NTHETA = 128
# inner radius used to truncate the half-infinite cylinders of a pinched node
PINCHED_RADIUS = np.exp(-12.0)


@dataclass(frozen=True)
class NodeParameter:
    t: complex

    def __post_init__(self):
        t = complex(self.t)
        object.__setattr__(self, "t", t)
        if not abs(t) < 1:
            raise InvalidParameter(f"plumbing parameter must satisfy |t| < 1, got {t}")

    @property
    def rho(self):
        return abs(self.t)

    @property
    def pinched(self):
        return self.t == 0


@dataclass(frozen=True)
class AnnulusChart:
    """R_rho^+- = {rho <= |z| <= 1} sampled on a log-polar grid."""

    side: str
    inner_radius: float
    outer_radius: float = 1.0
    nr: int = DEFAULT_NR
    ntheta: int = DEFAULT_NTHETA
    order: int = 2

    def __post_init__(self):
        if self.side not in ("+", "-"):
            raise ValueError("side must be '+' or '-'")
        if not 0 < self.inner_radius < self.outer_radius == 1.0:
            raise InvalidParameter("need 0 < inner_radius < outer_radius = 1")

    @property
    def grid(self):
        return LogPolarGrid.annulus(self.inner_radius, self.outer_radius, self.nr,
                                    self.ntheta, self.order)

    @property
    def tau_max(self):
        return -np.log(self.inner_radius)


@dataclass(frozen=True)
class PlumbingSurface:
    genus: int
    nodes: tuple = ()

    def __post_init__(self):
        if int(self.genus) != self.genus or self.genus < 2:
            raise InvalidGenus(f"genus must be an integer >= 2, got {self.genus}")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def R(self):
        if not self.nodes:
            return 0.0
        return max(n.rho ** 2 for n in self.nodes)

    @property
    def pinched(self):
        return tuple(n.pinched for n in self.nodes)

    def neck_charts(self, index, nr=DEFAULT_NR, ntheta=DEFAULT_NTHETA, order=2):
        node = self.nodes[index]
        rho = node.rho if not node.pinched else PINCHED_RADIUS
        return (AnnulusChart("+", rho, 1.0, nr, ntheta, order),
                AnnulusChart("-", rho, 1.0, nr, ntheta, order))


def build_plumbing(genus, node_params):
    """Surface of the given genus with one plumbing parameter per node."""
    if int(genus) != genus or genus < 2:
        raise InvalidGenus(f"genus must be an integer >= 2, got {genus}")
    nodes = tuple(NodeParameter(complex(t)) for t in node_params)
    return PlumbingSurface(int(genus), nodes)


# -- forms and the transition zw = t ----------------------------------------

@dataclass(frozen=True)
class ChartForm:
    """A (1,0)-form c(z) dz or c(z) dz/z on one side of a neck."""

    coeff: object
    frame: str = "dz/z"
    side: str = "+"

    def __call__(self, z):
        c = self.coeff
        if callable(c):
            return c(z)
        return np.full(np.shape(z), complex(c)) if np.ndim(z) else complex(c)


def transition_pushforward(form, node):
    """Express a form on one side of the neck in the opposite chart via w = t/z."""
    if not isinstance(node, NodeParameter):
        node = NodeParameter(node)
    if node.pinched:
        raise NoOverlap("pinched node: the two charts do not overlap")
    t = node.t
    other = "-" if form.side == "+" else "+"
    if form.frame == "dz/z":
        # dz/z = -dw/w
        def coeff(w, _f=form):
            return -_f(t / np.asarray(w, dtype=complex))
    elif form.frame == "dz":
        # dz = -(t / w^2) dw
        def coeff(w, _f=form):
            w = np.asarray(w, dtype=complex)
            val = np.asarray(_f(t / w))
            jac = -t / w ** 2
            return val * jac.reshape(jac.shape + (1,) * (val.ndim - jac.ndim))
    else:
        raise ValueError(f"unknown frame {form.frame!r}")
    return ChartForm(coeff, form.frame, other)


# -- quadratic differentials ---------------------------------------------------

@dataclass
class QuadraticDifferential:
    """q = f(z) dz^2 (frame "dz") or q = g(z) (dz/z)^2 (frame "dz/z") on one chart.

    Either ``func`` (vectorised callable of z) or ``samples`` on a log-polar
    ``grid`` must be given. ``domain`` is ("disk", radius) or ("annulus", rho, 1).
    """

    frame: str = "dz"
    func: object = None
    grid: object = None
    samples: np.ndarray = None
    domain: tuple = ("disk", 1.0)
    pole_orders: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, grid, samples, frame):
        r0, r1 = float(np.exp(grid.s[0])), float(np.exp(grid.s[-1]))
        return cls(frame, None, grid, np.asarray(samples, dtype=complex), ("annulus", r0, r1))

    @classmethod
    def from_function(cls, func, frame="dz", domain=("disk", 1.0)):
        return cls(frame, func, None, None, tuple(domain))

    def coefficient(self, z):
        """Coefficient in this differential's own frame."""
        z = np.asarray(z, dtype=complex)
        if self.func is not None:
            return np.asarray(self.func(z), dtype=complex) * np.ones_like(z)
        return self._interp(z)

    def dz_coefficient(self, z):
        """f with q = f dz^2."""
        z = np.asarray(z, dtype=complex)
        c = self.coefficient(z)
        return c / z ** 2 if self.frame == "dz/z" else c

    def scaled(self, factor):
        if self.func is not None:
            f = self.func
            return QuadraticDifferential(self.frame, lambda z: factor * f(z), None, None,
                                         self.domain, dict(self.pole_orders))
        return QuadraticDifferential(self.frame, None, self.grid, factor * self.samples,
                                     self.domain, dict(self.pole_orders))

    def to_frame_samples(self, frame):
        """Samples on the stored grid expressed in ``frame``."""
        if self.samples is None:
            raise ValueError("differential has no grid samples")
        z = self.grid.z
        if frame == self.frame:
            return self.samples
        if frame == "dz":
            return self.samples / z ** 2
        return self.samples * z ** 2

    def _interp(self, z):
        g = self.grid
        th = np.append(g.theta, 2 * np.pi)
        vals = np.concatenate([self.samples, self.samples[:, :1]], axis=1)
        pts = np.stack([np.log(np.abs(z)).ravel(), np.mod(np.angle(z), 2 * np.pi).ravel()], -1)
        re = RegularGridInterpolator((g.s, th), vals.real, method="cubic", bounds_error=False)
        im = RegularGridInterpolator((g.s, th), vals.imag, method="cubic", bounds_error=False)
        return (re(pts) + 1j * im(pts)).reshape(z.shape)


def _winding(f, center, radius, n=512):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    vals = f(center + radius * np.exp(1j * ang))
    if np.min(np.abs(vals)) == 0:
        return None
    d = np.diff(np.unwrap(np.angle(np.append(vals, vals[0]))))
    return int(round(np.sum(d) / (2 * np.pi)))


def _in_domain(domain, z, margin):
    kind = domain[0]
    a = np.abs(z)
    if kind == "disk":
        return a <= domain[1] - margin
    return (a >= domain[1] + margin) & (a <= domain[2] - margin)


def classify_zeros(q, n=257, radius_cells=4, rel_floor=1e-14):
    """Zeros of the coefficient of q with multiplicities from winding numbers.

    Returns (zeros, simple) where zeros is a list of (position, multiplicity).
    """
    domain = q.domain
    outer = domain[1] if domain[0] == "disk" else domain[2]
    xs = np.linspace(-outer, outer, n)
    h = xs[1] - xs[0]
    Z = xs[None, :] + 1j * xs[:, None]
    inside = _in_domain(domain, Z, 0.0)
    F = np.full(Z.shape, np.nan, dtype=complex)
    F[inside] = q.coefficient(Z[inside])
    absF = np.abs(F)
    fmax = np.nanmax(absF)
    if not np.isfinite(fmax) or fmax == 0:
        raise DegenerateDifferential("coefficient vanishes identically on the chart")

    padded = np.pad(absF, 1, constant_values=np.inf)
    padded = np.where(np.isnan(padded), np.inf, padded)
    centre = padded[1:-1, 1:-1]
    is_min = np.ones(Z.shape, bool)
    rises = np.zeros(Z.shape, bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                nb = padded[1 + di:padded.shape[0] - 1 + di, 1 + dj:padded.shape[1] - 1 + dj]
                is_min &= centre <= nb
                rises |= np.isfinite(nb) & (nb > centre * (1 + 1e-9))
    # plateaus (e.g. a constant coefficient) are not zero candidates
    is_min &= inside & rises

    rad = radius_cells * h
    f = q.coefficient
    zeros = []
    for idx in sorted(zip(*np.nonzero(is_min)), key=lambda ij: absF[ij]):
        c = Z[idx]
        if any(abs(c - p) < 2 * rad for p, _ in zeros):
            continue
        if not _in_domain(domain, c, rad):
            small = absF[idx] <= 1e-2 * fmax
            if absF[idx] <= max(rel_floor * fmax, 1e-300) or (small and _probe_edge(f, c, rad, domain)):
                raise InconclusiveClassification(f"zero near the chart boundary at {c:.4g}")
            continue
        k = _winding(f, c, rad)
        if k is None:
            raise InconclusiveClassification(f"coefficient vanishes on the test circle at {c:.4g}")
        if k > 0:
            zeros.append((complex(c), k))

    total = _boundary_count(f, domain, rad)
    if total is not None and total != sum(k for _, k in zeros):
        raise InconclusiveClassification(
            f"argument principle counts {total} zeros, lattice search found "
            f"{sum(k for _, k in zeros)}")
    simple = all(k == 1 for _, k in zeros)
    return zeros, simple


def _probe_edge(f, c, rad, domain):
    # a sign change of winding near the edge means a zero sits on the boundary layer
    try:
        k = _winding(f, c, rad / 2)
    except Exception:
        return True
    return k not in (0, None)


def _boundary_count(f, domain, rad):
    if domain[0] == "disk":
        return _winding(f, 0.0, domain[1] - rad / 2, 4096)
    outer = _winding(f, 0.0, domain[2] - rad / 2, 4096)
    inner = _winding(f, 0.0, domain[1] + rad / 2, 4096)
    if outer is None or inner is None:
        return None
    return outer - inner


def pole_order_at_node(q, node=None, n_tau=200, ntheta=64, min_span=2.0, tol=0.15):
    """Pole order of q at the node from the slope of log|f| against tau.

    q must be given in neck coordinates around the node (the disk/annulus
    chart centred at z = 0). The fit uses the half of the neck nearest the node.
    """
    if node is not None and not isinstance(node, NodeParameter):
        node = NodeParameter(node)
    if node is not None and not node.pinched:
        rho = node.rho
    elif q.domain[0] == "annulus":
        rho = q.domain[1]
    else:
        rho = PINCHED_RADIUS
    tau_max = -np.log(rho)
    if tau_max < 2 * min_span:
        raise InconclusiveClassification(
            f"neck too short for a decay fit (tau_max = {tau_max:.3g})")
    tau = np.linspace(tau_max / 2, tau_max, n_tau)
    th = np.linspace(0, 2 * np.pi, ntheta, endpoint=False)
    Z = np.exp(-tau)[:, None] * np.exp(1j * th)[None, :]
    f = q.dz_coefficient(Z)
    with np.errstate(divide="ignore"):
        lf = np.log(np.abs(f))
    if not np.all(np.isfinite(lf)):
        raise InconclusiveClassification("coefficient vanishes inside the fit window")
    y = lf.mean(axis=1)
    slope, _ = np.polyfit(tau, y, 1)
    order = int(round(slope))
    if abs(slope - order) > tol:
        raise InconclusiveClassification(f"non-integral growth rate {slope:.4g}")
    order = max(order, 0)
    if order > 2:
        log.warning("pole order %d exceeds 2: q is outside QD_-2", order)
    return order


def in_qd_minus2(q, node=None):
    return pole_order_at_node(q, node) <= 2


# -- serialisation -------------------------------------------------------------

def load_schema(name="surface"):
    text = resources.files("higgsneck").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


def _complex_list(arr):
    arr = np.asarray(arr, dtype=complex).ravel()
    return [[float(v.real), float(v.imag)] for v in arr]


def surface_to_json(surface, q=None, nr=DEFAULT_NR, ntheta=DEFAULT_NTHETA):
    charts = []
    for i, node in enumerate(surface.nodes):
        for ch in surface.neck_charts(i, nr, ntheta):
            charts.append({"node": i, "side": ch.side, "rho": ch.inner_radius,
                           "grid": {"nr": ch.nr, "ntheta": ch.ntheta}})
    doc = {"genus": surface.genus,
           "nodes": [{"re": n.t.real, "im": n.t.imag} for n in surface.nodes],
           "charts": charts}
    if q is not None:
        if q.samples is None:
            raise ValueError("only sampled differentials serialise")
        doc["q"] = {"frame": q.frame, "grid": q.grid.describe(),
                    "shape": list(q.samples.shape), "samples": _complex_list(q.samples)}
    import jsonschema
    jsonschema.validate(doc, load_schema("surface"))
    return doc


def surface_from_json(doc):
    import jsonschema
    jsonschema.validate(doc, load_schema("surface"))
    surf = build_plumbing(doc["genus"], [complex(n["re"], n["im"]) for n in doc["nodes"]])
    q = None
    if "q" in doc:
        g = doc["q"]["grid"]
        grid = LogPolarGrid(np.linspace(g["s_min"], g["s_max"], g["ns"]), g["ntheta"],
                            g.get("order", 2))
        vals = np.array([complex(a, b) for a, b in doc["q"]["samples"]]).reshape(doc["q"]["shape"])
        q = QuadraticDifferential.from_samples(grid, vals, doc["q"]["frame"])
    return surf, q
