"""Connections, Higgs fields, gauge action and the residual systems.

All fields live on a :class:`~higgsneck.grid.LogPolarGrid`. Coefficients are
stored in the frame they were built in (``"dz"`` or ``"dz/z"``) and converted
to the conformal frame dzeta = dz/z for every computation. 2-form defects
are reported as coefficients of ds ^ dtheta, the cylindrical area form.

Conventions: for Phi = phi dzeta, [Phi ^ Phi*] = (phi phi^H - phi^H phi) dzeta ^ dzetabar,
dzeta ^ dzetabar = -2i ds ^ dtheta.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import FrameError, InvalidParameter, SingularGauge

DZ = "dz"
DZ_Z = "dz/z"
FRAMES = (DZ, DZ_Z)

SIGMA3 = np.diag([1.0 + 0j, -1.0])
ID2 = np.eye(2, dtype=complex)

# dzeta^dzetabar and dzetabar^dzeta in units of ds^dtheta
WEDGE_ZZB = -2j
WEDGE_ZBZ = 2j


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def trace(x):
    return x[..., 0, 0] + x[..., 1, 1]


def frob(x):
    """Pointwise Frobenius norm of (..., 2, 2) arrays (abs for scalars)."""
    x = np.asarray(x)
    if x.ndim >= 2 and x.shape[-2:] == (2, 2):
        return np.sqrt(np.sum(np.abs(x) ** 2, axis=(-1, -2)))
    return np.abs(x)


def _check_frame(frame):
    if frame not in FRAMES:
        raise FrameError(f"unknown frame {frame!r}; expected one of {FRAMES}")


def _to_zeta(coeff, frame, grid):
    if frame == DZ:
        return coeff * grid.z[..., None, None]
    return coeff


def _from_zeta(coeff, frame, grid):
    if frame == DZ:
        return coeff / grid.z[..., None, None]
    return coeff


def _as_field(grid, values):
    values = np.asarray(values, dtype=complex)
    target = grid.shape + (2, 2)
    if values.shape == (2, 2):
        values = np.broadcast_to(values, target).copy()
    if values.shape != target:
        raise ValueError(f"expected samples shaped {target}, got {values.shape}")
    return values


@dataclass(frozen=True)
class BundleData:
    degree: int = 0
    rank: int = 2

    def __post_init__(self):
        if self.rank != 2:
            raise InvalidParameter("only rank 2 bundles are supported")

    @property
    def slope(self):
        return self.degree / 2


@dataclass(frozen=True, eq=False)
class UnitaryConnection:
    """A = a dz - a^H dzbar in the stated frame (a may carry a trace part)."""

    grid: object
    a: np.ndarray
    frame: str = DZ_Z

    def __post_init__(self):
        _check_frame(self.frame)
        object.__setattr__(self, "a", _as_field(self.grid, self.a))

    @classmethod
    def zero(cls, grid, frame=DZ_Z):
        return cls(grid, np.zeros(grid.shape + (2, 2), complex), frame)

    @classmethod
    def from_zetabar(cls, grid, a_zetabar, frame=DZ_Z):
        a_zeta = -dagger(_as_field(grid, a_zetabar))
        return cls(grid, _from_zeta(a_zeta, frame, grid), frame)

    @property
    def zeta(self):
        return _to_zeta(self.a, self.frame, self.grid)

    @property
    def zetabar(self):
        return -dagger(self.zeta)

    def in_frame(self, frame):
        _check_frame(frame)
        return UnitaryConnection(self.grid, _from_zeta(self.zeta, frame, self.grid), frame)

    def trace_free_defect(self):
        return float(np.max(np.abs(trace(self.a))))


@dataclass(frozen=True, eq=False)
class HiggsField:
    """Phi = phi dz (frame "dz") or phi dz/z (frame "dz/z")."""

    grid: object
    phi: np.ndarray
    frame: str = DZ_Z

    def __post_init__(self):
        _check_frame(self.frame)
        object.__setattr__(self, "phi", _as_field(self.grid, self.phi))

    @classmethod
    def zero(cls, grid, frame=DZ_Z):
        return cls(grid, np.zeros(grid.shape + (2, 2), complex), frame)

    @property
    def zeta(self):
        return _to_zeta(self.phi, self.frame, self.grid)

    def in_frame(self, frame):
        _check_frame(frame)
        return HiggsField(self.grid, _from_zeta(self.zeta, frame, self.grid), frame)

    def trace_free_defect(self):
        return float(np.max(np.abs(trace(self.phi))))


@dataclass(frozen=True, eq=False)
class FieldPair:
    A: UnitaryConnection
    Phi: HiggsField

    def __post_init__(self):
        if self.A.grid is not self.Phi.grid and self.A.grid != self.Phi.grid:
            raise ValueError("A and Phi must share a grid")

    @property
    def grid(self):
        return self.A.grid


@dataclass(frozen=True, eq=False)
class GaugeTransformation:
    """Pointwise g with det g = 1.

    ``dzetabar`` optionally supplies the exact derivative of g along dzetabar;
    otherwise it is taken by finite differences.
    """

    grid: object
    g: np.ndarray
    flavor: str = "unitary"
    dzetabar: np.ndarray = None
    tol: float = 1e-12

    def __post_init__(self):
        g = _as_field(self.grid, self.g)
        object.__setattr__(self, "g", g)
        if self.flavor not in ("unitary", "complex"):
            raise ValueError("flavor must be 'unitary' or 'complex'")
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        if np.max(np.abs(det - 1)) > self.tol:
            raise SingularGauge("gauge transformation must have det g = 1 pointwise")
        if self.flavor == "unitary":
            if np.max(frob(_accel.matmul2(dagger(g), g) - ID2)) > self.tol:
                raise ValueError("unitary gauge must satisfy g^H g = 1")
        if self.dzetabar is not None:
            object.__setattr__(self, "dzetabar", _as_field(self.grid, self.dzetabar))

    @classmethod
    def identity(cls, grid):
        return cls(grid, ID2, "unitary", np.zeros((2, 2), complex))

    @property
    def inverse(self):
        g = self.g
        inv = np.empty_like(g)
        inv[..., 0, 0] = g[..., 1, 1]
        inv[..., 1, 1] = g[..., 0, 0]
        inv[..., 0, 1] = -g[..., 0, 1]
        inv[..., 1, 0] = -g[..., 1, 0]
        return inv

    def dbar(self):
        if self.dzetabar is not None:
            return self.dzetabar
        return self.grid.d_zetabar(self.g)


@dataclass
class ResidualReport:
    """Per-equation sup and grid-L2 norms of a defect."""

    defects: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    tol: float = 1e-10

    def add(self, name, values, grid, mask=None):
        pw = frob(values)
        if mask is not None:
            pw = np.where(mask, pw, 0.0)
        sup = float(np.max(pw))
        l2 = float(np.sqrt(abs(grid.integrate(pw ** 2))))
        self.defects[name] = {"sup": sup, "l2": l2}
        return self

    def sup(self, name=None):
        if name is None:
            return max(d["sup"] for d in self.defects.values())
        return self.defects[name]["sup"]

    def l2(self, name):
        return self.defects[name]["l2"]

    def is_zero(self, tol=None):
        tol = self.tol if tol is None else tol
        return all(d["sup"] <= tol and d["l2"] <= tol for d in self.defects.values())

    def as_dict(self):
        return {"defects": self.defects, "grid": self.grid}


def _pair_zeta(A, Phi):
    if A.frame != Phi.frame:
        raise FrameError(f"frame mismatch: A in {A.frame!r}, Phi in {Phi.frame!r}")
    if A.grid is not Phi.grid and A.grid != Phi.grid:
        raise ValueError("A and Phi live on different grids")
    return A.zeta, A.zetabar, Phi.zeta


def curvature(A):
    """F_A as a coefficient of ds ^ dtheta."""
    g = A.grid
    az, azb = A.zeta, A.zetabar
    f = g.d_zeta(azb) - g.d_zetabar(az) + _accel.comm2(az, azb)
    return WEDGE_ZZB * f


def higgs_bracket(Phi):
    """[Phi ^ Phi*] as a coefficient of ds ^ dtheta."""
    p = Phi.zeta
    ph = dagger(p)
    return WEDGE_ZZB * (_accel.matmul2(p, ph) - _accel.matmul2(ph, p))


def dbar_higgs(A, Phi):
    """dbar_A Phi as a coefficient of ds ^ dtheta."""
    _, azb, p = _pair_zeta(A, Phi)
    return WEDGE_ZBZ * (A.grid.d_zetabar(p) + _accel.comm2(azb, p))


def curvature_decompose(A):
    """Split F_A into its trace-free part and (1/2) Tr(F_A) id."""
    F = curvature(A)
    tr = 0.5 * trace(F)[..., None, None] * ID2
    return F - tr, tr


def _meta(grid):
    return grid.describe() if hasattr(grid, "describe") else {}


def residual_full(A, Phi, degree=0, omega=1.0, mask=None):
    """Defects of F_A + [Phi^Phi*] = -i mu omega id and dbar_A Phi = 0.

    ``omega`` is the Kahler form as a coefficient of ds ^ dtheta (scalar or grid array).
    """
    _pair_zeta(A, Phi)
    mu = BundleData(degree).slope
    om = np.broadcast_to(np.asarray(omega, dtype=float), A.grid.shape)
    first = curvature(A) + higgs_bracket(Phi) + 1j * mu * om[..., None, None] * ID2
    rep = ResidualReport(grid=_meta(A.grid))
    rep.add("curvature", first, A.grid, mask)
    rep.add("holomorphic", dbar_higgs(A, Phi), A.grid, mask)
    return rep


def residual_rescaled(A, Phi, t, mask=None):
    """Defects of F_A^perp + t^2 [Phi^Phi*] = 0 and dbar_A Phi = 0."""
    if not t > 0:
        raise InvalidParameter("t must be positive")
    _pair_zeta(A, Phi)
    fperp, _ = curvature_decompose(A)
    first = fperp + t ** 2 * higgs_bracket(Phi)
    rep = ResidualReport(grid=_meta(A.grid))
    rep.add("curvature", first, A.grid, mask)
    rep.add("holomorphic", dbar_higgs(A, Phi), A.grid, mask)
    return rep


def residual_fixed_det(A, Phi, mask=None):
    """Defects of F_A^perp + [Phi^Phi*] = 0 and dbar_A Phi = 0."""
    return residual_rescaled(A, Phi, 1.0, mask)


def residual_decoupled(A, Phi, mask=None):
    """The three decoupled defects F^perp, [Phi^Phi*], dbar_A Phi, reported separately."""
    _pair_zeta(A, Phi)
    fperp, _ = curvature_decompose(A)
    rep = ResidualReport(grid=_meta(A.grid))
    rep.add("curvature", fperp, A.grid, mask)
    rep.add("bracket", higgs_bracket(Phi), A.grid, mask)
    rep.add("holomorphic", dbar_higgs(A, Phi), A.grid, mask)
    return rep


def gauge_act(g, A, Phi):
    """Return g^*(A, Phi) = (g^*A, g^-1 Phi g).

    The (0,1) part transforms as g^-1 A'' g + g^-1 dbar g and the (1,0) part is
    its unitary completion; for unitary g this is the usual g^-1 A g + g^-1 dg.
    """
    _pair_zeta(A, Phi)
    ginv = g.inverse
    azb = _accel.matmul2(_accel.matmul2(ginv, A.zetabar), g.g) + _accel.matmul2(ginv, g.dbar())
    phi = _accel.matmul2(_accel.matmul2(ginv, Phi.zeta), g.g)
    grid = A.grid
    A2 = UnitaryConnection.from_zetabar(grid, azb, A.frame)
    P2 = HiggsField(grid, _from_zeta(phi, Phi.frame, grid), Phi.frame)
    return A2, P2


def det_higgs(Phi):
    """det Phi as a QuadraticDifferential in Phi's frame."""
    from .surface import QuadraticDifferential

    p = Phi.phi
    det = p[..., 0, 0] * p[..., 1, 1] - p[..., 0, 1] * p[..., 1, 0]
    return QuadraticDifferential.from_samples(Phi.grid, det, Phi.frame)


@dataclass
class DolbeaultValues:
    """Derivatives of a section, in the conformal frame (dzeta, dzetabar, ds^dtheta)."""

    grid: object
    del_: np.ndarray      # coefficient of dzeta
    delbar: np.ndarray    # coefficient of dzetabar

    def in_dz(self):
        """(1,0) and (0,1) coefficients relative to dz and dzbar."""
        z = self.grid.z
        zc = np.conj(z)
        if self.del_.ndim == 4:
            z, zc = z[..., None, None], zc[..., None, None]
        return self.del_ / z, self.delbar / zc


def _ad(a, x):
    # adjoint action on End-valued data; scalars commute
    if x.ndim == 2:
        return np.zeros_like(x)
    return _accel.comm2(a, x)


def dolbeault_ops(A, section):
    """del_A, dbar_A and d_A of a scalar or End(E)-valued section."""
    g = A.grid
    x = np.asarray(section, dtype=complex)
    d = g.d_zeta(x) + _ad(A.zeta, x)
    db = g.d_zetabar(x) + _ad(A.zetabar, x)
    return DolbeaultValues(g, d, db)


def d_A_one_form(A, form_zeta, form_zetabar):
    """d_A of an End-valued 1-form, as a ds^dtheta coefficient."""
    g = A.grid
    val = (g.d_zeta(form_zetabar) - g.d_zetabar(form_zeta)
           + _accel.comm2(A.zeta, form_zetabar) - _accel.comm2(A.zetabar, form_zeta))
    return WEDGE_ZZB * val


def d_A_star(A, form_zeta, form_zetabar):
    """d_A^* alpha = -* d_A * alpha for an End-valued 1-form (a 0-form)."""
    # *dzeta = -i dzeta, *dzetabar = i dzetabar, *(ds^dtheta) = 1
    return -d_A_one_form(A, -1j * form_zeta, 1j * form_zetabar)
