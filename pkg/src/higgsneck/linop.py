"""Linearized self-duality operator, Hodge identities on su(2)-valued
1-forms, and the Fourier-mode discretization of the dbar family on a
pinching neck.

Neck model. Each side of the neck is a half-cylinder tau in [0, length]
(tau = -log|z|, outer boundary at tau = 0). A section gamma = u dz/z of
Fourier mode n on the z side satisfies dbar gamma = 0 iff u' + n u = 0 in
tau. The w side (zw = t) carries mode -n in its own coordinate.

* R > 0: both sides have length log(1/rho), rho = sqrt(R), and are glued at
  the seam by v_{-n} = -exp(i n arg t) u_n.
* R = 0: both sides are truncated at T; mode 0 obeys the matching condition
  u(T) = -v(T), nonzero modes drop the component growing toward the node.

Boundary data restrict the domain (a basis of admissible nodal vectors) rather
than adding rows, so the discrete kernel is the kernel of the constrained block.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import scipy.linalg as sla

from . import _accel
from .errors import (AssumptionViolation, FrameError, ParameterError, SolverError)
from .fields import (WEDGE_ZBZ, WEDGE_ZZB, UnitaryConnection, d_A_one_form, d_A_star,
                     dagger, frob, trace)

log = logging.getLogger(__name__)


# -- linearized operator --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearizedInput:
    """Tangent vector (alpha, phi): alpha su(2)-valued, phi a trace-free (1,0)-form.

    Coefficients are relative to dzeta = dz/z; alpha_zetabar defaults to the
    unitary completion -alpha_zeta^H.
    """

    grid: object
    alpha_zeta: np.ndarray
    phi: np.ndarray
    alpha_zetabar: np.ndarray = None
    frame: str = "dz/z"
    tol: float = 1e-12

    def __post_init__(self):
        shape = self.grid.shape + (2, 2)
        az = np.broadcast_to(np.asarray(self.alpha_zeta, complex), shape).copy()
        ph = np.broadcast_to(np.asarray(self.phi, complex), shape).copy()
        azb = -dagger(az) if self.alpha_zetabar is None else np.broadcast_to(
            np.asarray(self.alpha_zetabar, complex), shape).copy()
        scale = max(1.0, float(np.max(frob(az))))
        if np.max(frob(azb + dagger(az))) > self.tol * scale:
            raise AssumptionViolation("alpha is not su(2)-valued: alpha^(0,1) != -(alpha^(1,0))^H")
        if np.max(np.abs(trace(ph))) > self.tol * max(1.0, float(np.max(frob(ph)))):
            raise AssumptionViolation("phi is not trace-free")
        object.__setattr__(self, "alpha_zeta", az)
        object.__setattr__(self, "alpha_zetabar", azb)
        object.__setattr__(self, "phi", ph)

    @classmethod
    def zero(cls, grid):
        z = np.zeros(grid.shape + (2, 2), complex)
        return cls(grid, z, z)

    def combine(self, other, lam=1.0):
        return LinearizedInput(self.grid, self.alpha_zeta + lam * other.alpha_zeta,
                               self.phi + lam * other.phi, frame=self.frame)


def _check_common(A, Phi, inp):
    for obj in (Phi, inp):
        if obj.frame != A.frame:
            raise FrameError(f"frame mismatch: {A.frame!r} vs {obj.frame!r}")
        if obj.grid is not A.grid and obj.grid != A.grid:
            raise ValueError("inputs live on different grids")
    if inp.frame != "dz/z":
        raise FrameError("linearized inputs are stored relative to dz/z")


def linearized_apply(A, Phi, inp):
    """D(alpha, phi) = (d_A alpha + [Phi^phi*] + [Phi*^phi], dbar_A phi + [alpha^(0,1)^Phi]).

    Both outputs are ds^dtheta coefficients.
    """
    _check_common(A, Phi, inp)
    g = A.grid
    p0, p = Phi.zeta, inp.phi
    brackets = _accel.comm2(p0, dagger(p)) + _accel.comm2(p, dagger(p0))
    first = d_A_one_form(A, inp.alpha_zeta, inp.alpha_zetabar) + WEDGE_ZZB * brackets
    second = WEDGE_ZBZ * (g.d_zetabar(p) + _accel.comm2(A.zetabar, p)
                          + _accel.comm2(inp.alpha_zetabar, p0))
    return first, second


# -- Hodge identities -------------------------------------------------------------

def dbar_alpha10(A, alpha_zeta):
    """Y with dbar_A alpha^(1,0) = Y dzetabar^dzeta."""
    return A.grid.d_zetabar(alpha_zeta) + _accel.comm2(A.zetabar, alpha_zeta)


def hodge_sides(A, alpha_zeta, alpha_zetabar=None):
    """Left and right sides of both identities as ds^dtheta coefficients.

    With Z = dbar_A alpha^(1,0), Re Z = (Z - Z^H)/2 and Im Z = (Z + Z^H)/(2i):
    d_A alpha = 2 Re Z and d_A^* alpha = -*d_A* alpha = -2 Im Z.
    """
    azb = -dagger(alpha_zeta) if alpha_zetabar is None else alpha_zetabar
    Z = WEDGE_ZBZ * dbar_alpha10(A, alpha_zeta)
    Zh = dagger(Z)
    return {"d_A": (d_A_one_form(A, alpha_zeta, azb), Z - Zh),
            "d_A_star": (d_A_star(A, alpha_zeta, azb), 1j * (Z + Zh))}


@dataclass
class HodgeReport:
    d_A: float
    d_A_star: float

    @property
    def max(self):
        return max(self.d_A, self.d_A_star)


def hodge_identity_check(A, alpha_zeta, alpha_zetabar=None, tol=1e-12):
    """Sup defects of d_A alpha = 2 Re dbar_A alpha^(1,0) and d_A^* alpha = -2 Im dbar_A alpha^(1,0)."""
    alpha_zeta = np.asarray(alpha_zeta, complex)
    if alpha_zetabar is not None:
        scale = max(1.0, float(np.max(frob(alpha_zeta))))
        if np.max(frob(np.asarray(alpha_zetabar) + dagger(alpha_zeta))) > tol * scale:
            raise AssumptionViolation("alpha must satisfy (alpha^(1,0))^H = -alpha^(0,1)")
    sides = hodge_sides(A, alpha_zeta, alpha_zetabar)
    return HodgeReport(*(float(np.max(frob(l - r))) for l, r in sides.values()))


class SmoothSample:
    """Random trigonometric (A, alpha) with closed-form derivatives.

    Every matrix entry is sum_k c_k exp(i m_k theta) cos(w_k s + p_k).
    """

    def __init__(self, rng, terms=3, max_mode=3, amplitude=1.0):
        self.amplitude = amplitude
        self.coeffs = {}
        for key in ("A", "alpha"):
            entries = []
            for _ in range(3):
                entries.append(dict(
                    c=(rng.normal(size=terms) + 1j * rng.normal(size=terms)) / math.sqrt(2 * terms),
                    m=rng.integers(-max_mode, max_mode + 1, size=terms),
                    w=rng.uniform(0.5, 2.0, size=terms),
                    p=rng.uniform(0, 2 * np.pi, size=terms)))
            self.coeffs[key] = entries

    @staticmethod
    def _entry(e, S, TH):
        f = np.zeros(S.shape, complex)
        fs = np.zeros(S.shape, complex)
        ft = np.zeros(S.shape, complex)
        for c, m, w, p in zip(e["c"], e["m"], e["w"], e["p"]):
            ph = c * np.exp(1j * m * TH)
            f += ph * np.cos(w * S + p)
            fs += -w * ph * np.sin(w * S + p)
            ft += 1j * m * ph * np.cos(w * S + p)
        return f, fs, ft

    def _matrix(self, key, grid):
        vals = [self._entry(e, grid.S, grid.TH) for e in self.coeffs[key]]
        out = []
        for i in range(3):
            a, b, c = (v[i] for v in vals)
            out.append(np.stack([np.stack([a, b], -1), np.stack([c, -a], -1)], -2))
        return out  # value, d_s, d_theta

    def evaluate(self, grid):
        a, _, _ = self._matrix("A", grid)
        al, al_s, al_t = self._matrix("alpha", grid)
        al, al_s, al_t = (self.amplitude * x for x in (al, al_s, al_t))
        A = UnitaryConnection.from_zetabar(grid, a, "dz/z")
        Y = 0.5 * (al_s + 1j * al_t) + _accel.comm2(A.zetabar, al)
        Z = WEDGE_ZBZ * Y
        exact = {"d_A": Z - dagger(Z), "d_A_star": 1j * (Z + dagger(Z))}
        return A, al, exact


def hodge_truncation_errors(sample, grids):
    """Sup error of the discrete sides against closed-form values on each grid."""
    errs = []
    for g in grids:
        A, al, exact = sample.evaluate(g)
        sides = hodge_sides(A, al)
        errs.append(max(float(np.max(frob(sides[k][0] - exact[k]))) for k in sides))
    return np.array(errs)


def convergence_order(hs, errs):
    slope, _ = np.polyfit(np.log(hs), np.log(errs), 1)
    return float(slope)


# -- W-space membership ----------------------------------------------------------------

def w_space_check(A, Phi, alpha_zeta, alpha_zetabar=None, tol=1e-10):
    """Defects of d_A alpha = 0, d_A^* alpha = 0 and [alpha^(0,1) ^ Phi] = 0."""
    if Phi.frame != A.frame:
        raise FrameError(f"frame mismatch: {A.frame!r} vs {Phi.frame!r}")
    az = np.asarray(alpha_zeta, complex)
    azb = -dagger(az) if alpha_zetabar is None else np.asarray(alpha_zetabar, complex)
    d = {"d_A": float(np.max(frob(d_A_one_form(A, az, azb)))),
         "d_A_star": float(np.max(frob(d_A_star(A, az, azb)))),
         "bracket": float(np.max(frob(WEDGE_ZBZ * _accel.comm2(azb, Phi.zeta))))}
    d["member"] = all(v <= tol for v in d.values())
    return d


# -- b-operator family on the neck -----------------------------------------------------

CAPS = ("aps", "dirichlet")
NODE_CONDITIONS = ("matching", "dirichlet")
MEASURES = ("dr", "dtau")


def side_nodes(length, M=None, h=None):
    """Radial nodes on [0, length]: M equispaced nodes, or spacing h with a closing node."""
    if h is None:
        return np.linspace(0.0, length, M)
    nodes = np.arange(0.0, length - 0.5 * h, h)
    return np.append(nodes, length)


def box_rows(nodes, k):
    """Box-scheme discretization of u' + k u: one row per cell, unweighted."""
    hs = np.diff(nodes)
    n = len(nodes)
    D = np.zeros((n - 1, n), complex)
    idx = np.arange(n - 1)
    D[idx, idx] = -1.0 / hs + 0.5 * k
    D[idx, idx + 1] = 1.0 / hs + 0.5 * k
    return D


def _weights(nodes, measure):
    w = (lambda x: np.exp(-x)) if measure == "dr" else (lambda x: np.ones_like(x))
    hs = np.diff(nodes)
    node_w = np.zeros(len(nodes))
    node_w[:-1] += 0.5 * hs
    node_w[1:] += 0.5 * hs
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    return node_w * w(nodes), hs * w(mids)


@dataclass
class ModeBlock:
    """One Fourier mode: raw rows over [U; V], constraints, and the orthonormalized block."""

    n: int
    nodes_plus: np.ndarray
    nodes_minus: np.ndarray
    raw: np.ndarray
    constraints: np.ndarray
    embed: np.ndarray        # orthonormal domain basis inside the weighted nodal space
    matrix: np.ndarray       # block in orthonormal coordinates (cells x domain)

    @property
    def domain_dim(self):
        return self.matrix.shape[1]


@dataclass
class BOperatorFamily:
    R: float
    T: float
    N: int
    M: int
    cap: str
    node: str
    measure: str
    arg_t: float
    length: float
    blocks: dict = field(repr=False)

    @property
    def modes(self):
        return sorted(self.blocks)

    @property
    def pinched(self):
        return self.R == 0


def _constraints(n, Mp, Mm, R, cap, node, arg_t):
    rows = []

    def row(entries):
        r = np.zeros(Mp + Mm, complex)
        for i, v in entries:
            r[i] = v
        rows.append(r)

    u0, uT, v0, vT = 0, Mp - 1, Mp, Mp + Mm - 1
    if cap == "dirichlet":
        row([(u0, 1)])
        row([(v0, 1)])
    else:
        if n > 0:
            row([(u0, 1)])
        if -n > 0:
            row([(v0, 1)])
    if R > 0:
        row([(vT, 1), (uT, np.exp(1j * n * arg_t))])
    elif n == 0:
        if node == "dirichlet":
            row([(uT, 1)])
            row([(vT, 1)])
        else:
            row([(uT, 1), (vT, 1)])
    elif n > 0:
        row([(vT, 1)])
    else:
        row([(uT, 1)])
    return np.array(rows)


def _check_params(R, T, N, M, cap, node, measure):
    if not (isinstance(N, (int, np.integer)) and N >= 4):
        raise ParameterError("mode range N must be an integer >= 4")
    if not (isinstance(M, (int, np.integer)) and M >= 32):
        raise ParameterError("radial resolution M must be an integer >= 32")
    if not (T > 0 and np.isfinite(T)):
        raise ParameterError("truncation length T must be positive")
    if not (0 <= R < 1):
        raise ParameterError("R must lie in [0, 1)")
    if cap not in CAPS or node not in NODE_CONDITIONS or measure not in MEASURES:
        raise ParameterError(f"cap in {CAPS}, node in {NODE_CONDITIONS}, measure in {MEASURES}")


def assemble_b_family(R, T=8.0, N=8, M=64, cap="aps", node="matching", measure="dr",
                      arg_t=0.0, h=None):
    """Discretized dbar family on the neck, block-diagonal in Fourier modes -N..N.

    ``h`` fixes the radial spacing (used to share nodes across R); otherwise each
    side gets M equispaced nodes.
    """
    _check_params(R, T, N, M, cap, node, measure)
    length = math.log(1.0 / math.sqrt(R)) if R > 0 else float(T)
    nodes = side_nodes(length, M, h)
    npts = len(nodes)
    nw, cw = _weights(nodes, measure)
    Wd = np.sqrt(np.concatenate([nw, nw]))
    Wc = np.sqrt(np.concatenate([cw, cw]))
    blocks = {}
    for n in range(-N, N + 1):
        raw = sla.block_diag(box_rows(nodes, n), box_rows(nodes, -n))
        C = _constraints(n, npts, npts, R, cap, node, arg_t)
        B = sla.null_space(C)
        Q, Rq = np.linalg.qr(Wd[:, None] * B)
        matrix = Wc[:, None] * (raw @ B @ np.linalg.inv(Rq))
        blocks[n] = ModeBlock(n, nodes, nodes, raw, C, Q, matrix)
    return BOperatorFamily(float(R), float(T), int(N), int(M), cap, node, measure, float(arg_t),
                           length, blocks)


def mode_oracle_count(family, n):
    """Kernel dimension of mode n from closed-form solutions u = c e^{-n tau}, v = c' e^{n tau}."""
    b = family.blocks[n]
    Mp = len(b.nodes_plus)
    basis = np.zeros((Mp + len(b.nodes_minus), 2), complex)
    basis[:Mp, 0] = np.exp(-n * b.nodes_plus)
    basis[Mp:, 1] = np.exp(n * b.nodes_minus)
    E = b.constraints @ basis
    if E.size == 0:
        return 2
    scale = np.max(np.abs(E), axis=1, keepdims=True)
    E = E / np.where(scale > 0, scale, 1.0)
    sv = np.linalg.svd(E, compute_uv=False)
    return 2 - int(np.sum(sv > 1e-9))


def analytic_kernel_count(family):
    return sum(mode_oracle_count(family, n) for n in family.modes)


@dataclass
class SpectrumReport:
    R: float
    per_mode: dict
    counts: dict
    threshold: float
    gap_ratio: float

    @property
    def count(self):
        return int(sum(self.counts.values()))

    def rows(self):
        for n in sorted(self.per_mode):
            for i, s in enumerate(self.per_mode[n]):
                yield {"R": self.R, "mode": n, "index": i, "sigma": float(s)}


def small_singular_values(family, m=4, rel_threshold=1e-6):
    """m smallest singular values per mode and the near-kernel count below
    rel_threshold times the largest singular value of the family."""
    spectra = {}
    try:
        for n, b in family.blocks.items():
            sv = np.linalg.svd(b.matrix, compute_uv=False)
            pad = max(0, b.domain_dim - len(sv))
            spectra[n] = np.sort(np.concatenate([sv, np.zeros(pad)]))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular value decomposition failed: {exc}") from exc
    top = max(float(s[-1]) for s in spectra.values())
    thr = rel_threshold * top
    counts = {n: int(np.sum(s <= thr)) for n, s in spectra.items()}
    below = [s[s <= thr] for s in spectra.values()]
    above = [s[s > thr] for s in spectra.values()]
    lo = max((float(x.max()) for x in below if x.size), default=0.0)
    hi = min((float(x.min()) for x in above if x.size), default=np.inf)
    gap = hi / lo if lo > 0 else np.inf
    log.info("near-kernel threshold %.3e, spectral gap ratio %.3e", thr, gap)
    return SpectrumReport(family.R, {n: s[:m] for n, s in spectra.items()}, counts, thr, gap)


# -- graph projections -----------------------------------------------------------------

def graph_projector(D, cond_warn=1e12):
    """Orthogonal projection of domain (+) codomain onto the graph {(x, Dx)}."""
    D = np.asarray(D, complex)
    rows, cols = D.shape
    V = np.vstack([np.eye(cols), D])
    G = V.conj().T @ V
    cond = np.linalg.cond(G)
    if cond > cond_warn:
        log.warning("graph normal matrix is ill-conditioned (cond %.3e)", cond)
    c = sla.cho_factor(G)
    return V @ sla.cho_solve(c, V.conj().T)


@dataclass
class GraphProjection:
    family: BOperatorFamily
    blocks: dict = field(repr=False)

    def idempotency_defect(self):
        return max(np.linalg.norm(P @ P - P, 2) for P in self.blocks.values())

    def symmetry_defect(self):
        return max(np.linalg.norm(P - P.conj().T, 2) for P in self.blocks.values())

    def ambient(self, n):
        """Projection for mode n lifted to (weighted nodal space) (+) (cells)."""
        b = self.family.blocks[n]
        E = sla.block_diag(b.embed, np.eye(b.matrix.shape[0]))
        return E @ self.blocks[n] @ E.conj().T


def graph_projection(family):
    return GraphProjection(family, {n: graph_projector(b.matrix) for n, b in family.blocks.items()})


def _window_index(nodes, window):
    npts = len(nodes)
    nsel = np.flatnonzero(nodes <= window + 1e-12)
    csel = np.flatnonzero(nodes[1:] <= window + 1e-12)
    dom = np.concatenate([nsel, npts + nsel])
    cod = np.concatenate([csel, npts - 1 + csel])
    return dom, cod, 2 * npts


def _windowed(gp, n, window):
    b = gp.family.blocks[n]
    dom, cod, ndom = _window_index(b.nodes_plus, window)
    idx = np.concatenate([dom, ndom + cod])
    P = gp.ambient(n)
    return P[np.ix_(idx, idx)]


def graph_distance(gp_a, gp_b, window):
    """max over modes of the operator norm of the difference of windowed projections."""
    dist = 0.0
    for n in gp_a.blocks:
        Pa, Pb = _windowed(gp_a, n, window), _windowed(gp_b, n, window)
        if Pa.shape != Pb.shape:
            raise ParameterError("families do not share the window nodes")
        dist = max(dist, float(np.linalg.norm(Pa - Pb, 2)))
    return dist


def graph_continuity_experiment(Rs, window=1.0, T=8.0, N=4, h=0.05, **kw):
    """Rows (R, distance, window) comparing P_R to P_0 on tau in [0, window] per side.

    All families share radial spacing h so that window nodes coincide; outside
    the window the projections are discarded (restriction with zero extension).
    """
    Rs = [float(r) for r in Rs]
    lengths = [math.log(1 / math.sqrt(r)) if r > 0 else T for r in Rs] + [T]
    if not (0 < window <= min(lengths)):
        raise ParameterError(f"window must lie in (0, {min(lengths):.4g}]")
    M = max(32, int(round(T / h)) + 1)
    ref = graph_projection(assemble_b_family(0.0, T, N, M, h=h, **kw))
    rows = []
    for R in Rs:
        gp = graph_projection(assemble_b_family(R, T, N, M, h=h, **kw))
        rows.append({"R": R, "distance": graph_distance(gp, ref, window), "window": window})
    return rows


# -- L2 divergence at the node ---------------------------------------------------------------

@dataclass
class DivergenceScan:
    u_star: complex
    eps: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float

    @property
    def expected_slope(self):
        return 2 * np.pi * abs(self.u_star) ** 2

    def rows(self):
        for e, v in zip(self.eps, self.norms):
            yield {"eps": float(e), "log_inv_eps": float(np.log(1 / e)), "norm": float(v)}


def partial_norm(u_star, eps, points_per_decade=64):
    """int_{eps<=|z|<=1} |u_*/z|^2 r dr dtheta by Simpson's rule on a geometric radial mesh."""
    from scipy.integrate import simpson

    n = max(3, int(points_per_decade * math.log10(1 / eps)) | 1)
    r = np.geomspace(eps, 1.0, n)
    theta = np.linspace(0, 2 * np.pi, 65)[:-1]
    z = r[:, None] * np.exp(1j * theta[None, :])
    f = np.abs(u_star / z) ** 2 * r[:, None]
    radial = simpson(f, x=r, axis=0)
    return float(np.mean(radial) * 2 * np.pi)


def l2_divergence_scan(u_star, eps_seq=(1e-1, 1e-2, 1e-3, 1e-4)):
    eps = np.asarray(sorted(eps_seq, reverse=True), float)
    if np.any((eps <= 0) | (eps >= 1)):
        raise ParameterError("eps values must lie in (0, 1)")
    norms = np.array([partial_norm(u_star, e) for e in eps])
    x = np.log(1 / eps)
    if len(eps) >= 2:
        slope, icpt = np.polyfit(x, norms, 1)
    else:
        slope, icpt = norms[0] / x[0], 0.0
    return DivergenceScan(complex(u_star), eps, norms, float(slope), float(icpt))
