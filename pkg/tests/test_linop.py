import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from higgsneck import linop as L
from higgsneck import models as M
from higgsneck.errors import AssumptionViolation, FrameError, ParameterError
from higgsneck.fields import SIGMA3, WEDGE_ZBZ, WEDGE_ZZB, HiggsField, UnitaryConnection
from higgsneck.grid import LogPolarGrid

E12 = np.array([[0, 1], [0, 0]], complex)
E21 = E12.T.copy()


@pytest.fixture(scope="module")
def grid():
    return LogPolarGrid.annulus(0.1, 1.0, 64, 32)


@pytest.fixture(scope="module")
def model(grid):
    return M.model_pair(M.ModelParameters(0.3, 1.0), grid)


def _random_input(grid, rng):
    a = rng.normal(size=grid.shape + (2, 2)) + 1j * rng.normal(size=grid.shape + (2, 2))
    a = a - np.trace(a, axis1=-2, axis2=-1)[..., None, None] / 2 * np.eye(2)
    p = rng.normal(size=grid.shape + (2, 2)) + 1j * rng.normal(size=grid.shape + (2, 2))
    p = p - np.trace(p, axis1=-2, axis2=-1)[..., None, None] / 2 * np.eye(2)
    return L.LinearizedInput(grid, a, p)


# -- linearized operator ------------------------------------------------------------

def test_zero_input_gives_zero(grid, model):
    first, second = L.linearized_apply(model.A, model.Phi, L.LinearizedInput.zero(grid))
    assert np.max(np.abs(first)) == 0 and np.max(np.abs(second)) == 0


def test_diagonal_input_at_model(grid, model):
    eps = 0.3
    alpha = 1j * eps * SIGMA3  # su-completion: alpha_zetabar = alpha_zeta
    inp = L.LinearizedInput(grid, alpha, np.zeros((2, 2)))
    first, second = L.linearized_apply(model.A, model.Phi, inp)
    assert np.max(np.abs(first)) <= 1e-12
    assert np.max(np.abs(second)) <= 1e-12


def test_off_diagonal_higgs_bracket(grid, model):
    phi = 0.5 * E12
    first, _ = L.linearized_apply(model.A, model.Phi, L.LinearizedInput(grid, 0, phi))
    p0 = model.Phi.zeta[0, 0]
    # [P, phi^H] + [phi, P^H] by explicit 2x2 multiplication
    hand = (p0 @ phi.conj().T - phi.conj().T @ p0) + (phi @ p0.conj().T - p0.conj().T @ phi)
    np.testing.assert_allclose(first, np.broadcast_to(WEDGE_ZZB * hand, first.shape), atol=1e-10)
    assert np.max(np.abs(first)) > 0.1


def test_frame_mismatch(grid, model):
    inp = L.LinearizedInput(grid, 0, 0, frame="dz")
    with pytest.raises(FrameError):
        L.linearized_apply(model.A, model.Phi, inp)


def test_input_rejects_non_unitary_alpha(grid):
    with pytest.raises(AssumptionViolation):
        L.LinearizedInput(grid, E12, 0, alpha_zetabar=E12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
def test_linearity(seed, lam):
    rng = np.random.default_rng(seed)
    grid = LogPolarGrid.annulus(0.2, 1.0, 16, 16)
    pair = M.model_pair(M.ModelParameters(0.4, 1 + 1j), grid)
    a, b = _random_input(grid, rng), _random_input(grid, rng)
    fa, sa = L.linearized_apply(pair.A, pair.Phi, a)
    fb, sb = L.linearized_apply(pair.A, pair.Phi, b)
    fc, sc = L.linearized_apply(pair.A, pair.Phi, a.combine(b, lam))
    scale = 1 + abs(lam)
    assert np.max(np.abs(fc - fa - lam * fb)) <= 1e-9 * scale * np.max(np.abs(fa) + np.abs(fb))
    assert np.max(np.abs(sc - sa - lam * sb)) <= 1e-9 * scale * np.max(np.abs(sa) + np.abs(sb))


# -- Hodge identities --------------------------------------------------------------

def test_hodge_zero_alpha(grid, model):
    rep = L.hodge_identity_check(model.A, np.zeros(grid.shape + (2, 2)))
    assert rep.max == 0


def test_hodge_rejects_non_su_alpha(grid, model):
    with pytest.raises(AssumptionViolation):
        L.hodge_identity_check(model.A, np.broadcast_to(E12, grid.shape + (2, 2)),
                               alpha_zetabar=np.broadcast_to(E12, grid.shape + (2, 2)))


def test_hodge_polynomial_alpha_zero_connection():
    g = LogPolarGrid.annulus(0.3, 1.0, 65, 16)
    A = UnitaryConnection.zero(g, "dz/z")
    S, TH = g.S, g.TH
    coef = S ** 2 + S * np.exp(1j * TH)
    alpha = coef[..., None, None] * E12 + (0.5 * S)[..., None, None] * SIGMA3
    # closed form: dbar alpha^(1,0) with d_s, d_theta of the polynomial entries
    dcoef = 0.5 * ((2 * S + np.exp(1j * TH)) + 1j * (1j * S * np.exp(1j * TH)))
    Y = dcoef[..., None, None] * E12 + np.full(g.shape, 0.25)[..., None, None] * SIGMA3
    Z = WEDGE_ZBZ * Y
    sides = L.hodge_sides(A, alpha)
    # second-order stencils are exact on quadratics, so both sides match the closed form
    np.testing.assert_allclose(sides["d_A"][0], Z - np.conj(np.swapaxes(Z, -1, -2)), atol=1e-10)
    assert L.hodge_identity_check(A, alpha).max <= 1e-10


def test_hodge_random_samples_and_order():
    rng = np.random.default_rng(11)
    g = LogPolarGrid.annulus(math.exp(-1.5), 1.0, 128, 64)
    for _ in range(5):
        A, al, _ = L.SmoothSample(rng).evaluate(g)
        assert L.hodge_identity_check(A, al).max <= 1e-10
    grids = [LogPolarGrid.annulus(math.exp(-1.5), 1.0, m, 16) for m in (33, 65, 129, 257)]
    errs = L.hodge_truncation_errors(L.SmoothSample(rng), grids)
    assert np.all(np.diff(errs) < 0)
    assert L.convergence_order([gg.ds for gg in grids], errs) == pytest.approx(2.0, abs=0.15)


# -- W-space -----------------------------------------------------------------------

def test_w_space_examples(grid, model):
    c = 0.7
    member = L.w_space_check(model.A, model.Phi, 1j * c * np.broadcast_to(SIGMA3, grid.shape + (2, 2)))
    assert member["member"]
    assert max(member["d_A"], member["d_A_star"], member["bracket"]) <= 1e-10
    assert L.w_space_check(model.A, model.Phi, np.zeros(grid.shape + (2, 2)))["member"]


def test_w_space_flags_bumps(grid, model):
    bump = np.exp(-((grid.tau - 1.2) / 0.3) ** 2)
    # i b(tau) sigma3 dtheta: not closed
    dtheta = (0.5 * bump)[..., None, None] * SIGMA3
    rep = L.w_space_check(model.A, model.Phi, dtheta)
    assert rep["d_A"] > 1e-3 and not rep["member"]
    # i b(tau) sigma3 dtau is closed but not coclosed
    dtau = (0.5j * bump)[..., None, None] * SIGMA3
    rep = L.w_space_check(model.A, model.Phi, dtau)
    assert rep["d_A"] <= 1e-10 and rep["d_A_star"] > 1e-3 and not rep["member"]


# -- b-family ----------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(N=3), dict(M=16), dict(T=0), dict(cap="x"), dict(R=1.5)])
def test_b_family_parameter_errors(kw):
    args = dict(R=0.0, T=8.0, N=4, M=32)
    args.update(kw)
    with pytest.raises(ParameterError):
        L.assemble_b_family(**args)


def test_mode_zero_kernel_is_constant_pair():
    fam = L.assemble_b_family(0.0, T=8, N=4, M=64)
    b = fam.blocks[0]
    npts = len(b.nodes_plus)
    pair = np.concatenate([np.ones(npts), -np.ones(npts)])
    assert np.max(np.abs(b.raw @ pair)) <= 1e-12
    assert np.max(np.abs(b.constraints @ pair)) <= 1e-12
    rep = L.small_singular_values(fam)
    assert rep.counts[0] == 1
    assert rep.count == L.analytic_kernel_count(fam) == 1


def test_nonzero_modes_bounded_below_in_T():
    # with the e^{-tau} weight the mode-n gap tends to |n| - 1/2 as T grows
    for T in (4.0, 8.0, 16.0, 32.0):
        fam = L.assemble_b_family(0.0, T=T, N=4, M=int(16 * T) + 1)
        rep = L.small_singular_values(fam, m=1)
        for n in fam.modes:
            if n:
                assert float(rep.per_mode[n][0]) >= abs(n) - 0.5
    for n in fam.modes:
        if n:
            assert float(rep.per_mode[n][0]) == pytest.approx(abs(n) - 0.5, rel=0.02)


def test_count_stable_across_R_and_resolution():
    counts = []
    for R in (0.04, 0.01, 0.0025, 0.0):
        for N, M in ((4, 64), (8, 128)):
            fam = L.assemble_b_family(R, T=8, N=N, M=M)
            rep = L.small_singular_values(fam)
            assert rep.count == L.analytic_kernel_count(fam)
            counts.append(rep.count)
    assert len(set(counts)) == 1


def test_dirichlet_node_drops_count():
    base = L.small_singular_values(L.assemble_b_family(0.0, N=4, M=64)).count
    dirichlet = L.small_singular_values(L.assemble_b_family(0.0, N=4, M=64, node="dirichlet")).count
    assert dirichlet == base - 1


def test_R_positive_and_pinched_share_rows():
    h = 0.05
    pos = L.assemble_b_family(0.01, T=8, N=4, M=64, h=h)
    pin = L.assemble_b_family(0.0, T=8, N=4, M=64, h=h)
    assert pos.length == pytest.approx(math.log(10.0))
    for n in pos.modes:
        bp, b0 = pos.blocks[n], pin.blocks[n]
        for b in (bp, b0):
            ref = sla.block_diag(L.box_rows(b.nodes_plus, n), L.box_rows(b.nodes_minus, -n))
            np.testing.assert_array_equal(b.raw, ref)
        # identical cells wherever the node sets coincide
        k = len(bp.nodes_plus) - 2
        np.testing.assert_array_equal(L.box_rows(bp.nodes_plus, n)[:k, :k + 1],
                                      L.box_rows(b0.nodes_plus, n)[:k, :k + 1])


@pytest.mark.parametrize("k", [-2, 1, 3])
def test_box_rows_second_order_on_exact_modes(k):
    errs, hs = [], []
    for m in (33, 65, 129, 257):
        x = np.linspace(0, 4, m)
        errs.append(np.max(np.abs(L.box_rows(x, k) @ np.exp(-k * x))) / np.max(np.exp(-k * x)))
        hs.append(x[1] - x[0])
    assert L.convergence_order(hs, errs) == pytest.approx(2.0, abs=0.1)


# -- graph projections ------------------------------------------------------------

def test_projection_of_zero_operator():
    P = L.graph_projector(np.zeros((3, 4)))
    np.testing.assert_allclose(P, np.diag([1, 1, 1, 1, 0, 0, 0]), atol=1e-15)


def test_projection_of_identity():
    I = np.eye(3)
    np.testing.assert_allclose(L.graph_projector(I), 0.5 * np.block([[I, I], [I, I]]), atol=1e-15)


def test_neck_projection_idempotent():
    gp = L.graph_projection(L.assemble_b_family(0.01, N=4, M=64))
    assert gp.idempotency_defect() <= 1e-10
    assert gp.symmetry_defect() <= 1e-10


def test_graph_distance_identical_and_window():
    rows = L.graph_continuity_experiment([0.0025, 0.0025], window=1.0)
    assert rows[0]["distance"] == rows[1]["distance"]
    ref = L.graph_projection(L.assemble_b_family(0.0, N=4, M=161, h=0.05))
    assert L.graph_distance(ref, ref, 1.0) == 0
    full = [r["distance"] for r in L.graph_continuity_experiment([0.04, 0.01], window=1.0)]
    half = [r["distance"] for r in L.graph_continuity_experiment([0.04, 0.01], window=0.5)]
    ratios = np.array(half) / np.array(full)
    assert np.all((ratios > 0) & (ratios <= 1.0 + 1e-12))
    with pytest.raises(ParameterError):
        L.graph_continuity_experiment([0.04], window=5.0)


# -- L2 divergence ---------------------------------------------------------------

def test_divergence_zero():
    scan = L.l2_divergence_scan(0)
    assert np.all(scan.norms == 0) and scan.slope == 0


@pytest.mark.parametrize("u", [1.0, 2.0, 1 - 1j])
def test_divergence_slope(u):
    scan = L.l2_divergence_scan(u)
    assert scan.slope == pytest.approx(2 * np.pi * abs(u) ** 2, rel=1e-2)
    np.testing.assert_allclose(scan.norms, 2 * np.pi * abs(u) ** 2 * np.log(1 / scan.eps), rtol=1e-6)


def test_divergence_rejects_bad_eps():
    with pytest.raises(ParameterError):
        L.l2_divergence_scan(1, [0.1, 1.5])
