"""The acceptance suite as plain functions, shared by ``verify-all`` and the tests.

Each check returns a :class:`CriterionResult`; tolerances come from
:data:`DEFAULT_TOLERANCES` and may be overridden by name.
"""
from dataclasses import dataclass, field
import math
import time

import numpy as np

from . import fields as F
from . import linop as L
from . import localsys as S
from . import models as M
from .grid import LogPolarGrid
from .surface import NodeParameter

DEFAULT_TOLERANCES = {
    "model_residual": 1e-10,
    "gluing": 1e-12,
    "fiducial_residual": 1e-6,
    "fiducial_det": 1e-12,
    "decoupled": 1e-10,
    "gauge_det": 1e-12,
    "hodge": 1e-6,
    "hodge_order": 0.3,
    "bracket": 1e-12,
    "flat_disc": 1e-9,
    "translate": 1e-12,
    "projection": 1e-10,
    "divergence_rel": 0.01,
}

BUDGETS = {"cohomology": 1.0, "model": 30.0, "fiducial": 120.0}


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0
    failures: list = field(default_factory=list)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({'; '.join(self.failures)})" if self.failures else ""
        return f"[{tag}] {self.key}: {self.title} [{self.runtime:.2f}s]{extra}"

    def as_dict(self):
        return {"key": self.key, "title": self.title, "passed": self.passed,
                "metrics": self.metrics, "runtime": self.runtime, "failures": self.failures}


class _Checker:
    def __init__(self, key, title):
        self.res = CriterionResult(key, title, True)
        self.t0 = time.perf_counter()

    def expect(self, cond, what):
        if not cond:
            self.res.passed = False
            self.res.failures.append(what)

    def done(self, budget=None):
        self.res.runtime = time.perf_counter() - self.t0
        if budget is not None:
            self.expect(self.res.runtime < budget, f"runtime {self.res.runtime:.2f}s exceeds {budget}s")
        return self.res


def _tol(tols, name):
    merged = dict(DEFAULT_TOLERANCES)
    merged.update(tols or {})
    return merged[name]


def check_cohomology(tols=None, genera=(2, 3, 4, 5, 6)):
    c = _Checker("cohomology", "h1 = 6(g-1), h0 = h2 = 0, Euler check, for k = 4(g-1)")
    rows = [S.cohomology_row(g) for g in genera]
    for r in rows:
        g = r["genus"]
        c.expect(r["h1"] == 6 * (g - 1), f"g={g}: h1={r['h1']}")
        c.expect(r["h0"] == 0 and r["h2"] == 0, f"g={g}: h0={r['h0']} h2={r['h2']}")
        c.expect(r["euler_ok"] and r["chi"] == 2 - 2 * g - r["punctures"], f"g={g}: Euler")
    c.res.metrics["rows"] = rows
    return c.done(BUDGETS["cohomology"])


def check_models(tols=None, seed=0, count=20):
    c = _Checker("model", "model pairs solve the fixed-determinant system; neck gluing matches")
    tol_r, tol_g = _tol(tols, "model_residual"), _tol(tols, "gluing")
    rng = np.random.default_rng(seed)
    grid = LogPolarGrid.annulus(0.1, 1.0, 256, 128)
    worst_r = worst_g = 0.0
    for _ in range(count):
        params = M.ModelParameters(rng.uniform(0.05, 2.0),
                                   complex(rng.normal(), rng.normal()) or 1.0)
        pair = M.model_pair(params, grid)
        worst_r = max(worst_r, F.residual_fixed_det(pair.A, pair.Phi).sup())
        t = rng.uniform(0.01, 0.5) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        worst_g = max(worst_g, M.glue_model_neck(params, NodeParameter(t)).max_mismatch)
    c.expect(worst_r <= tol_r, f"residual {worst_r:.3g} > {tol_r:g}")
    c.expect(worst_g <= tol_g, f"gluing mismatch {worst_g:.3g} > {tol_g:g}")
    c.res.metrics.update(seed=seed, residual_sup=worst_r, gluing_sup=worst_g)
    return c.done(BUDGETS["model"])


def fiducial_summary(ts=(1, 2, 4, 8), cache_dir=None):
    grid = M.default_disk_grid()
    r_band = np.linspace(0.5, 1.0, 201)
    rows = []
    for t in ts:
        prof = M.fiducial_profile(t, cache_dir=cache_dir)
        pair = M.fiducial_pair(prof, grid)
        det = F.det_higgs(pair.Phi).samples
        rows.append({"t": float(t),
                     "residual": F.residual_rescaled(pair.A, pair.Phi, t).sup(),
                     "det_error": float(np.max(np.abs(det + grid.z))),
                     "sup_h": float(np.max(np.abs(prof.h(r_band))))})
    sups = np.array([r["sup_h"] for r in rows])
    slope = float(np.polyfit(np.asarray(ts, float), np.log(sups), 1)[0]) if len(ts) > 1 else None
    return rows, slope


def check_fiducial(tols=None, ts=(1, 2, 4, 8), cache_dir=None):
    c = _Checker("fiducial", "fiducial pairs solve the rescaled system; det = -z dz^2; |h_t| decays")
    tol_r, tol_d = _tol(tols, "fiducial_residual"), _tol(tols, "fiducial_det")
    rows, slope = fiducial_summary(ts, cache_dir)
    for r in rows:
        c.expect(r["residual"] <= tol_r, f"t={r['t']:g}: residual {r['residual']:.3g}")
        c.expect(r["det_error"] <= tol_d, f"t={r['t']:g}: det error {r['det_error']:.3g}")
    sups = [r["sup_h"] for r in rows]
    c.expect(all(a > b for a, b in zip(sups, sups[1:])), "sup|h_t| not strictly decreasing")
    c.res.metrics.update(rows=rows, decay_slope=slope)
    return c.done(BUDGETS["fiducial"])


def check_decoupled(tols=None):
    c = _Checker("decoupled", "limiting pair solves the decoupled system; g_inf preserves det")
    tol, tol_d = _tol(tols, "decoupled"), _tol(tols, "gauge_det")
    grid = M.default_disk_grid(r_min=0.05, r_max=1.0)
    lim = M.limiting_fiducial_pair(grid)
    rep = F.residual_decoupled(lim.A, lim.Phi)
    for name in ("curvature", "bracket", "holomorphic"):
        v = rep.sup(name)
        c.res.metrics[name] = v
        c.expect(v <= tol, f"{name} defect {v:.3g}")
    pole = M.pole_part_pair(grid)
    moved = M.singular_gauge_apply(grid, pole)
    dd = float(np.max(np.abs(F.det_higgs(moved.Phi).samples - F.det_higgs(pole.Phi).samples)))
    c.res.metrics["gauge_det_change"] = dd
    c.expect(dd <= tol_d, f"det changed by {dd:.3g}")
    return c.done()


def check_hodge(tols=None, seed=1, samples=50, n=256, order_samples=5):
    c = _Checker("hodge", "d_A and d_A^* identities on random su(2) forms; 2nd-order convergence")
    tol, tol_o = _tol(tols, "hodge"), _tol(tols, "hodge_order")
    rng = np.random.default_rng(seed)
    s_min = -1.5
    grid = LogPolarGrid.annulus(math.exp(s_min), 1.0, n, n)
    worst = 0.0
    for _ in range(samples):
        A, al, _ = L.SmoothSample(rng).evaluate(grid)
        worst = max(worst, L.hodge_identity_check(A, al).max)
    c.expect(worst <= tol, f"identity defect {worst:.3g}")
    grids = [LogPolarGrid.annulus(math.exp(s_min), 1.0, m, 16) for m in (33, 65, 129, 257)]
    hs = [g.ds for g in grids]
    orders = [L.convergence_order(hs, L.hodge_truncation_errors(L.SmoothSample(rng), grids))
              for _ in range(order_samples)]
    bad = [o for o in orders if abs(o - 2.0) > tol_o]
    c.expect(not bad, f"orders outside 2 +- {tol_o}: {bad}")
    c.res.metrics.update(seed=seed, identity_defect=worst, orders=orders)
    return c.done()


def random_admissible_beta(rng, grid, amplitude=0.5):
    """u = c + f(theta) + i g(s) + i d_zeta chi with real f, g, chi: d beta = 0 exactly on the grid."""
    S_, TH = grid.S, grid.TH
    c0 = complex(rng.normal(), rng.normal())
    m = rng.integers(1, 4, size=2)
    f = rng.normal() * np.cos(m[0] * TH + rng.uniform(0, 6.3))
    gs = rng.normal() * np.sin(rng.uniform(0.5, 2.0) * S_ + rng.uniform(0, 6.3))
    chi = rng.normal() * np.cos(m[1] * TH) * np.cos(rng.uniform(0.5, 2.0) * S_)
    u = c0 + f + 1j * gs + 1j * grid.d_zeta(chi)
    return S.NeckLineBundleForm(grid, amplitude * u)


def check_flatness(tols=None, seed=2, count=20):
    c = _Checker("flatness", "[b^b] = 0, F_B = 0 and d_B = d_A on L^R sections for random closed b")
    tb, td, tt = _tol(tols, "bracket"), _tol(tols, "flat_disc"), _tol(tols, "translate")
    rng = np.random.default_rng(seed)
    grid = LogPolarGrid.annulus(math.exp(-2.0), 1.0, 128, 64)
    worst = {"bracket": 0.0, "curvature_B": 0.0, "translate": 0.0, "closed": 0.0}
    for _ in range(count):
        A = M.model_pair(M.ModelParameters(rng.uniform(0.1, 2.0), 1.0), grid).A
        beta = random_admissible_beta(rng, grid)
        chis = [rng.normal() * np.cos(grid.TH) * np.sin(grid.S) + rng.normal() for _ in range(2)]
        rep = S.flat_translate_check(A, beta, chis, tol_exact=tb, tol_disc=td)
        c.expect(not rep.precondition_violation, f"beta flagged as not closed ({rep.closed_defect:.3g})")
        worst["bracket"] = max(worst["bracket"], rep.bracket)
        worst["curvature_B"] = max(worst["curvature_B"], rep.curvature_B - rep.curvature_A)
        worst["translate"] = max(worst["translate"], rep.translate_defect)
        worst["closed"] = max(worst["closed"], rep.closed_defect)
    c.expect(worst["bracket"] <= tb, f"bracket {worst['bracket']:.3g}")
    c.expect(worst["curvature_B"] <= td, f"F_B {worst['curvature_B']:.3g}")
    c.expect(worst["translate"] <= tt, f"d_B - d_A {worst['translate']:.3g}")
    c.res.metrics.update(seed=seed, **worst)
    return c.done()


SPECTRUM_RS = (0.04, 0.01, 0.0025, 0.0)


def spectrum_sweep(Rs=SPECTRUM_RS, T=8.0, N=8, M=64, **kw):
    out = []
    for R in Rs:
        fam = L.assemble_b_family(R, T, N, M, **kw)
        out.append((fam, L.small_singular_values(fam)))
    return out


def check_spectrum(tols=None, T=8.0, N=8, M=64, window=1.0):
    c = _Checker("spectrum", "neck near-kernel count matches oracle and is stable in R, M, N")
    tol = _tol(tols, "projection")
    counts = {}
    for scale in (1, 2):
        for fam, spectrum in spectrum_sweep(T=T, N=N * scale, M=M * scale):
            counts[(fam.R, scale)] = spectrum.count
            if fam.R == 0:
                oracle = L.analytic_kernel_count(fam)
                c.expect(spectrum.count == oracle, f"R=0 count {spectrum.count} != oracle {oracle}")
    c.expect(len(set(counts.values())) == 1, f"counts vary: {counts}")
    gp = L.graph_projection(L.assemble_b_family(0.01, T, N, M))
    idem, sym = gp.idempotency_defect(), gp.symmetry_defect()
    c.expect(idem <= tol and sym <= tol, f"projection defects {idem:.3g}, {sym:.3g}")
    table = L.graph_continuity_experiment([0.04, 0.01, 0.0025], window=window, T=T)
    dist = [r["distance"] for r in table]
    c.res.metrics.update(counts={f"R={k[0]:g},x{k[1]}": v for k, v in counts.items()},
                         idempotency=idem, symmetry=sym, distances=table,
                         distances_decreasing=bool(all(a > b for a, b in zip(dist, dist[1:]))))
    return c.done()


def check_divergence(tols=None, ustars=(0.5, 1.0, 2.0)):
    c = _Checker("divergence", "partial L2 norms grow like 2 pi |u*|^2 log(1/eps)")
    tol = _tol(tols, "divergence_rel")
    slopes = {}
    for u in ustars:
        scan = L.l2_divergence_scan(u)
        rel = abs(scan.slope - scan.expected_slope) / scan.expected_slope
        slopes[u] = scan.slope
        c.expect(rel <= tol, f"|u*|={u}: slope {scan.slope:.6g} off by {rel:.3g}")
    zero = L.l2_divergence_scan(0.0)
    c.expect(np.all(np.isfinite(zero.norms)) and np.max(np.abs(zero.norms)) == 0.0,
             "u* = 0 gives nonzero or infinite norms")
    c.res.metrics["slopes"] = {str(k): v for k, v in slopes.items()}
    return c.done()


CHECKS = {
    "cohomology": check_cohomology,
    "model": check_models,
    "fiducial": check_fiducial,
    "decoupled": check_decoupled,
    "hodge": check_hodge,
    "flatness": check_flatness,
    "spectrum": check_spectrum,
    "divergence": check_divergence,
}


def run_all(tols=None, only=None, cache_dir=None):
    results = []
    for key, fn in CHECKS.items():
        if only and key not in only:
            continue
        if key == "fiducial":
            results.append(fn(tols, cache_dir=cache_dir))
        else:
            results.append(fn(tols))
    return results
