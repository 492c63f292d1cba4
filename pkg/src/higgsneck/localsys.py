"""Rank-one sign local systems on punctured surfaces, their twisted
cohomology, and neck-local checks of the fibre metric and its flatness.

Cohomology is computed exactly on cell models of the punctured surface:

* ``graph``: for k >= 1 punctures the surface retracts onto a wedge of
  2g + k - 1 circles (generators a_i, b_i, c_1 .. c_{k-1});
* ``presentation``: one vertex, 2g + k loops and one 2-cell glued along
  prod [a_i, b_i] prod c_j, with the coboundary from Fox derivatives. Used for
  closed surfaces and as an independent cross-check.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (InconsistentMonodromy, InvalidGenus, InvalidParameter,
                     PreconditionViolation, FrameError)
from .fields import (SIGMA3, UnitaryConnection, WEDGE_ZZB, curvature, d_A_one_form,
                     dagger, dolbeault_ops, frob, trace)
from . import _accel


# -- presentations -------------------------------------------------------------

def generator_names(genus, punctures):
    names = []
    for i in range(1, genus + 1):
        names += [f"a{i}", f"b{i}"]
    names += [f"c{j}" for j in range(1, punctures + 1)]
    return names


@dataclass(frozen=True)
class LocalSystemPresentation:
    genus: int
    punctures: int
    signs: dict

    @property
    def generators(self):
        return generator_names(self.genus, self.punctures)

    @property
    def free_generators(self):
        gens = self.generators
        return gens[:-1] if self.punctures >= 1 else gens

    @property
    def twisted(self):
        return any(v == -1 for v in self.signs.values())

    def relator(self):
        """prod_i a_i b_i a_i^-1 b_i^-1 prod_j c_j as (name, power) letters."""
        word = []
        for i in range(1, self.genus + 1):
            a, b = f"a{i}", f"b{i}"
            word += [(a, 1), (b, 1), (a, -1), (b, -1)]
        word += [(f"c{j}", 1) for j in range(1, self.punctures + 1)]
        return word

    def as_dict(self):
        return {"genus": self.genus, "punctures": self.punctures, "signs": dict(self.signs)}


def build_local_system(genus, punctures, signs=None):
    """Sign local system; default: -1 around every puncture, +1 on a_i, b_i.

    ``signs`` may be a mapping generator -> +-1 overriding defaults, or the
    string "trivial".
    """
    if int(genus) != genus or genus < 2:
        raise InvalidGenus(f"genus must be an integer >= 2, got {genus}")
    if int(punctures) != punctures or punctures < 0:
        raise InvalidParameter("puncture count must be a nonnegative integer")
    genus, punctures = int(genus), int(punctures)
    eps = {n: 1 for n in generator_names(genus, punctures)}
    for j in range(1, punctures + 1):
        eps[f"c{j}"] = -1
    if signs == "trivial":
        eps = {n: 1 for n in eps}
    elif signs:
        for name, v in dict(signs).items():
            if name not in eps:
                raise InvalidParameter(f"unknown generator {name!r}")
            if v not in (1, -1):
                raise InvalidParameter("signs must be +1 or -1")
            eps[name] = int(v)
    prod = 1
    for j in range(1, punctures + 1):
        prod *= eps[f"c{j}"]
    if prod != 1:
        raise InconsistentMonodromy(
            f"product of puncture monodromies is {prod}; the surface relation needs +1")
    return LocalSystemPresentation(genus, punctures, eps)


# -- exact linear algebra --------------------------------------------------------

def rank_exact(rows):
    """Rank over Q of a matrix given as a list of rows (ints or Fractions)."""
    m = [[Fraction(v) for v in row] for row in rows]
    if not m or not m[0]:
        return 0
    nrows, ncols = len(m), len(m[0])
    rank, col = 0, 0
    while rank < nrows and col < ncols:
        piv = next((i for i in range(rank, nrows) if m[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        p = m[rank][col]
        for i in range(rank + 1, nrows):
            if m[i][col] != 0:
                f = m[i][col] / p
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
        col += 1
    return rank


def fox_row(word, signs, generators):
    """Fox derivatives of ``word`` evaluated in the sign representation."""
    row = {g: 0 for g in generators}
    prefix = 1
    for name, power in word:
        e = signs[name]
        if power == 1:
            row[name] += prefix
            prefix *= e
        else:
            prefix *= e  # e^-1 == e for signs
            row[name] -= prefix
    return [row[g] for g in generators]


@dataclass
class TwistedCochainComplex:
    model: str
    dims: tuple
    d0: list
    d1: list = field(default_factory=list)

    def betti(self):
        c0, c1, c2 = self.dims
        r0 = rank_exact(self.d0) if c1 else 0
        r1 = rank_exact(self.d1) if (c2 and c1) else 0
        return c0 - r0, c1 - r0 - r1, c2 - r1


def cochain_complex(pres, model="graph"):
    if model == "graph" and pres.punctures == 0:
        model = "presentation"
    if model == "graph":
        gens = pres.free_generators
        d0 = [[pres.signs[g] - 1] for g in gens]
        return TwistedCochainComplex("graph", (1, len(gens), 0), d0)
    if model == "presentation":
        gens = pres.generators
        d0 = [[pres.signs[g] - 1] for g in gens]
        d1 = [fox_row(pres.relator(), pres.signs, gens)]
        return TwistedCochainComplex("presentation", (1, len(gens), 1), d0, d1)
    raise ValueError(f"unknown model {model!r}")


def twisted_cohomology(pres, model="graph"):
    """(h0, h1, h2) of the punctured surface with coefficients in the sign system."""
    return cochain_complex(pres, model).betti()


def euler_check(pres, model="graph"):
    """Euler characteristic 2 - 2g - k and whether the Betti numbers reproduce it."""
    h0, h1, h2 = twisted_cohomology(pres, model)
    chi = 2 - 2 * pres.genus - pres.punctures
    return chi, (h0 - h1 + h2) == chi


def fiber_dimension(genus):
    """dim H^1 for k = 4(g - 1) twisted punctures; equals 6(g - 1)."""
    pres = build_local_system(genus, 4 * (genus - 1))
    return twisted_cohomology(pres)[1]


def cohomology_row(genus, punctures=None, signs=None):
    if punctures is None:
        punctures = 4 * (genus - 1)
    pres = build_local_system(genus, punctures, signs)
    h0, h1, h2 = twisted_cohomology(pres)
    chi, ok = euler_check(pres)
    expected = 6 * (genus - 1)
    return {"genus": genus, "punctures": punctures, "h0": h0, "h1": h1, "h2": h2, "chi": chi,
            "euler_ok": ok, "expected": expected, "match": h1 == expected}


# -- neck-local L_Phi-valued forms -------------------------------------------------

LINE_FRAME = "sigma3*dz/z"


@dataclass(frozen=True, eq=False)
class NeckLineBundleForm:
    """alpha = u sigma3 dz/z - conj(u) sigma3 dzbar/zbar, an su(2)-valued 1-form in L_Phi."""

    grid: object
    u: np.ndarray
    frame: str = LINE_FRAME

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        if u.ndim == 0:
            u = np.full(self.grid.shape, complex(u))
        if u.shape != self.grid.shape:
            raise ValueError(f"coefficient must have shape {self.grid.shape}")
        object.__setattr__(self, "u", u)

    @property
    def zeta(self):
        return self.u[..., None, None] * SIGMA3

    @property
    def zetabar(self):
        return -dagger(self.zeta)

    def line_defect(self, Phi):
        """sup |[Phi, u sigma3]|; zero when the values lie in L_Phi."""
        return float(np.max(frob(_accel.comm2(Phi.zeta, self.zeta))))

    def scaled(self, c):
        return NeckLineBundleForm(self.grid, c * self.u, self.frame)

    def __add__(self, other):
        return NeckLineBundleForm(self.grid, self.u + other.u, self.frame)


def _check_forms(a1, a2):
    if a1.frame != a2.frame:
        raise FrameError(f"frame mismatch {a1.frame!r} vs {a2.frame!r}")
    if a1.grid is not a2.grid and a1.grid != a2.grid:
        raise ValueError("forms live on different grids")


def metric_pairing(a1, a2, region=None):
    """G(a1, a2) = 2 Re int Tr(a1^(0,1)* ^ a2^(0,1)) with |dzbar|^2 = 2.

    In ds dtheta coordinates the integrand is 4 Re Tr(a1_zbar^H a2_zbar).
    ``region`` is an optional boolean mask (or callable of z) selecting the domain.
    """
    _check_forms(a1, a2)
    g = a1.grid
    dens = 4.0 * np.real(trace(_accel.matmul2(dagger(a1.zetabar), a2.zetabar)))
    if region is not None:
        mask = region(g.z) if callable(region) else np.asarray(region, bool)
        dens = np.where(mask, dens, 0.0)
    return float(g.integrate(dens))


def gram_matrix(forms, region=None):
    n = len(forms)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            G[i, j] = metric_pairing(forms[i], forms[j], region)
    return G


@dataclass
class FlatnessReport:
    bracket: float
    closed_defect: float
    curvature_A: float
    curvature_B: float
    translate_defect: float
    precondition_violation: bool
    tol_exact: float
    tol_disc: float

    @property
    def passed(self):
        return (not self.precondition_violation and self.bracket <= self.tol_exact
                and self.curvature_B <= self.curvature_A + self.tol_disc
                and self.translate_defect <= self.tol_exact)

    def as_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def flat_translate_check(A_inf, beta, sections=(), tol_exact=1e-12, tol_disc=1e-9):
    """Check that B = A_inf + beta is again flat and acts like A_inf on L^R sections.

    Closedness of beta is checked, not assumed: a non-closed beta is reported
    through ``precondition_violation``.
    """
    g = A_inf.grid
    bz, bzb = beta.zeta, beta.zetabar
    bracket = frob(2 * WEDGE_ZZB * _accel.comm2(bz, bzb))
    closed = frob(d_A_one_form(A_inf, bz, bzb))
    scale = max(1.0, float(np.max(frob(bz))))
    B = UnitaryConnection(g, A_inf.zeta + bz, "dz/z")
    FA = float(np.max(frob(curvature(A_inf))))
    FB = float(np.max(frob(curvature(B))))
    trans = 0.0
    for chi in sections:
        gam = 1j * np.asarray(chi, float)[..., None, None] * SIGMA3
        dA = dolbeault_ops(A_inf, gam)
        dB = dolbeault_ops(B, gam)
        trans = max(trans, float(np.max(frob(dB.del_ - dA.del_))),
                    float(np.max(frob(dB.delbar - dA.delbar))))
    return FlatnessReport(float(np.max(bracket)), float(np.max(closed)), FA, FB, trans,
                          bool(np.max(closed) > tol_disc * scale), tol_exact, tol_disc)


def line_bundle_parallel_check(A, Phi, section, tol=1e-8):
    """sup |[Phi ^ d_A gamma]| for a section gamma of L_Phi."""
    gam = np.asarray(section, dtype=complex)
    phi = Phi.zeta
    pre = float(np.max(frob(_accel.comm2(phi, gam))))
    scale = max(1.0, float(np.max(frob(phi))) * float(np.max(frob(gam))))
    if pre > tol * scale:
        raise PreconditionViolation(f"section does not commute with Phi (|[Phi, gamma]| = {pre:.3g})")
    d = dolbeault_ops(A, gam)
    val = WEDGE_ZZB * _accel.comm2(phi, d.delbar)
    return float(np.max(frob(val)))
