import numpy as np
import pytest

from conftest import SIGMA0
from pulsewave.cylinder import direction_from_angle
from pulsewave.effective import (
    ConsistencyError,
    LinearizedOperator,
    einstein_check,
    geodesic_gradient_fd,
    grad_surface_tension,
    hessian_surface_tension,
    mobility,
    second_corrector_rhs,
    solve_corrector,
    solve_second_corrector,
    surface_tension,
    sweep,
)
from pulsewave.media import homogeneous_medium
from pulsewave.wave import WaveOptions, minimize, minimize_regularized

TIGHT = WaveOptions(tol=1e-10)


@pytest.fixture(scope="module")
def hom_op(hom_wave):
    return LinearizedOperator(hom_wave)


@pytest.fixture(scope="module")
def lam_op(lam_wave):
    return LinearizedOperator(lam_wave)


@pytest.fixture(scope="module")
def small45(lam25, small_grid):
    return minimize(direction_from_angle(45.0), lam25, small_grid, TIGHT)


def interior_random(grid, rng):
    P = rng.standard_normal(grid.shape)
    P[0] = P[-1] = 0.0
    return P


# --- linearized operator ----------------------------------------------------

def test_kernel_defect(hom_op, lam_op):
    assert hom_op.kernel_defect() <= 1e-4
    assert lam_op.kernel_defect() <= 1e-4


def test_kernel_is_close_to_forward_difference(lam_op):
    K, V = lam_op.kernel, lam_op.V
    assert np.linalg.norm(K - V) / np.linalg.norm(V) < 0.05


def test_operator_symmetric_and_psd(lam_op):
    rng = np.random.default_rng(11)
    g = lam_op.grid
    for _ in range(10):
        A, B = interior_random(g, rng), interior_random(g, rng)
        ab, ba = lam_op.inner(lam_op(A), B), lam_op.inner(A, lam_op(B))
        assert abs(ab - ba) <= 1e-10 * max(abs(ab), 1.0)
    for _ in range(100):
        P = interior_random(g, rng)
        assert lam_op.inner(lam_op(P), P) >= -1e-8 * lam_op.inner(P, P)


# --- first-order quantities -------------------------------------------------

def test_homogeneous_tension_gradient_mobility(hom_wave):
    assert surface_tension(hom_wave) == pytest.approx(SIGMA0, abs=2e-3)
    assert np.allclose(grad_surface_tension(hom_wave), SIGMA0 * hom_wave.e, atol=1e-3)
    assert mobility(hom_wave) == pytest.approx(SIGMA0, abs=2e-3)


def test_scaled_mobility(grid10):
    sol = minimize(np.array([1.0, 0.0]), homogeneous_medium(4.0), grid10)
    assert mobility(sol) == pytest.approx(SIGMA0 / 2, abs=1e-3)


@pytest.mark.parametrize("theta", [30.0, 45.0, 60.0])
def test_gradient_matches_geodesic_fd(theta, lam25, small_grid):
    sol = minimize(direction_from_angle(theta), lam25, small_grid, TIGHT)
    an = grad_surface_tension(sol)
    fd = geodesic_gradient_fd(sol, h=1e-4, opts=TIGHT)
    assert np.linalg.norm(an - fd) <= 1e-3 * np.linalg.norm(fd)
    assert np.sign(an[1]) == np.sign(np.sin(np.radians(theta)))


def test_gradient_sign_below_axis(lam25, small_grid):
    sol = minimize(direction_from_angle(-40.0), lam25, small_grid)
    assert grad_surface_tension(sol)[1] < 0


# --- correctors -------------------------------------------------------------

def test_homogeneous_corrector_closed_form(hom_wave, hom_op):
    s = hom_wave.grid.broadcast_s(hom_wave.grid.s)
    R = solve_corrector(hom_wave, hom_wave.e, hom_op).values
    # the discrete direction derivative gives -s V (see the ledger for the sign)
    target = -s * hom_op.kernel
    assert np.linalg.norm(R - target) <= 1e-3 * np.linalg.norm(target)
    xi = np.array([0.6, 0.8])
    R2 = solve_corrector(hom_wave, xi, hom_op).values
    assert np.linalg.norm(R2 - 0.6 * target) <= 1e-3 * np.linalg.norm(0.6 * target)


def test_homogeneous_corrector_tangential_vanishes(hom_wave, hom_op):
    R = solve_corrector(hom_wave, np.array([0.0, 1.0]), hom_op).values
    assert np.abs(R).max() <= 1e-10


def test_corrector_normalization(lam_wave, lam_op):
    R = solve_corrector(lam_wave, np.array([0.0, 1.0]), lam_op).values
    i0 = np.argmin(np.abs(lam_wave.grid.s))
    assert abs(R[i0].mean()) <= 1e-10 * np.abs(R).max()


def test_corrector_matches_wave_fd(small45, lam25, small_grid):
    e = small45.e
    t = direction_from_angle(135.0)
    h = 1e-3
    up = minimize(np.cos(h) * e + np.sin(h) * t, lam25, small_grid, TIGHT, U0=small45.U).U.values
    um = minimize(np.cos(h) * e - np.sin(h) * t, lam25, small_grid, TIGHT, U0=small45.U).U.values
    fd = (up - um) / (2 * h)
    R = solve_corrector(small45, t).values
    assert np.linalg.norm(R - fd) <= 2e-2 * np.linalg.norm(fd)
    # e_2 = cos(45) e + sin(45) t; the radial part is the scaling corrector
    R2 = solve_corrector(small45, np.array([0.0, 1.0])).values
    Re = solve_corrector(small45, e).values
    assert np.allclose(R2, np.sqrt(0.5) * (Re + R), atol=1e-8 * np.abs(R2).max())


# --- Hessian ----------------------------------------------------------------

def test_homogeneous_hessian(hom_wave, hom_op):
    rep = hessian_surface_tension(hom_wave, op=hom_op, return_report=True)
    e = hom_wave.e
    target = SIGMA0 * (np.eye(2) - np.outer(e, e))
    assert np.linalg.norm(rep.hessian - target) <= 1e-2 * np.linalg.norm(target)
    assert np.linalg.norm(rep.hessian @ e) <= 1e-2 * np.linalg.norm(rep.hessian)


def test_hessian_forms_and_bounds(lam_wave, lam_op):
    rep = hessian_surface_tension(lam_wave, op=lam_op, return_report=True)
    H = rep.hessian
    assert np.abs(H - H.T).max() <= 1e-10
    assert np.linalg.norm(H @ lam_wave.e) <= 1e-2 * np.linalg.norm(H)
    assert rep.psi_coverage >= 0.99
    assert np.linalg.norm(rep.hessian_psi - H) <= 2e-2 * np.linalg.norm(H)
    rng = np.random.default_rng(5)
    for _ in range(5):
        xi = rng.standard_normal(2)
        assert xi @ H @ xi <= xi @ rep.direct_bound @ xi + 1e-8


@pytest.mark.parametrize("delta_reg", [0.1, 0.01])
def test_regularized_hessian_bound(delta_reg, lam25, small_grid):
    sol = minimize_regularized(direction_from_angle(20.0), lam25, small_grid, delta_reg)
    H = hessian_surface_tension(sol)
    bound = lam25.field.Lam * mobility(sol)
    for xi in (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.6, -0.8])):
        assert xi @ H @ xi <= bound + 1e-8


def test_einstein_homogeneous(small_grid):
    rep = einstein_check(direction_from_angle(30.0), homogeneous_medium(), small_grid, h=1e-2)
    assert rep["rel_error"] <= 1e-2
    assert rep["mobility_bound_max_eig"] <= 1.0 + 2e-2


# --- second corrector -------------------------------------------------------

def test_second_corrector_radial_homogeneous(hom_wave, hom_op):
    e = hom_wave.e
    P = solve_second_corrector(hom_wave, np.outer(e, e), op=hom_op).values
    s = hom_wave.grid.broadcast_s(hom_wave.grid.s)
    # closed form for a = Id is s^2 V / 2, not zero (see the ledger)
    target = 0.5 * s * s * hom_op.kernel
    assert np.linalg.norm(P - target) <= 3e-2 * np.linalg.norm(target)


def test_second_corrector_linear(small45):
    op = LinearizedOperator(small45)
    rep = hessian_surface_tension(small45, op=op, return_report=True)
    kw = dict(hess=rep.hessian, correctors=rep.correctors, op=op)
    A = np.array([[1.0, 0.3], [0.3, -0.5]])
    B = np.array([[0.2, -0.7], [-0.7, 2.0]])
    PA = solve_second_corrector(small45, A, **kw).values
    PB = solve_second_corrector(small45, B, **kw).values
    PAB = solve_second_corrector(small45, A + B, **kw).values
    assert np.linalg.norm(PAB - PA - PB) <= 1e-6 * np.linalg.norm(PAB)


def test_second_corrector_solvability(lam_wave, lam_op):
    rep = hessian_surface_tension(lam_wave, op=lam_op, return_report=True)
    M = mobility(lam_wave)
    for i, xi in enumerate(np.eye(2)):
        F = second_corrector_rhs(lam_wave, xi, rep.correctors[i], rep.hessian, M, lam_op)
        F[0] = F[-1] = 0.0
        V = lam_op.V
        assert abs(np.vdot(F, V)) / (np.linalg.norm(F) * np.linalg.norm(V)) <= 1e-6


def test_second_corrector_detects_inconsistent_inputs(lam_wave, lam_op):
    rep = hessian_surface_tension(lam_wave, op=lam_op, return_report=True)
    with pytest.raises(ConsistencyError):
        solve_second_corrector(lam_wave, np.eye(2), hess=2.0 * rep.hessian, correctors=rep.correctors, op=lam_op)


# --- sweep ------------------------------------------------------------------

def test_sweep_constant_medium_rotation_covariant(small_grid):
    dirs = [direction_from_angle(t) for t in np.arange(16) * 22.5]
    table = sweep(homogeneous_medium(), small_grid, dirs)
    phi = np.array([r.phi for r in table.rows])
    mob = np.array([r.mobility for r in table.rows])
    assert np.ptp(phi) <= 1e-8 and np.ptp(mob) <= 1e-8
    H0 = table.rows[0].hess
    for r in table.rows:
        th = np.arctan2(r.e[1], r.e[0])
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        assert np.allclose(r.hess, Q @ H0 @ Q.T, atol=1e-6)


def test_sweep_laminar_table(lam25, small_grid):
    thetas = list(range(-170, 0, 20)) + list(range(10, 180, 20))
    table = sweep(lam25, small_grid, [direction_from_angle(t) for t in thetas])
    rows = table.ok_rows()
    assert len(rows) == len(thetas)
    lam, Lam = lam25.field.lam, lam25.field.Lam
    for t, r in zip(thetas, rows):
        assert np.sqrt(lam) * SIGMA0 - 2e-3 <= r.phi <= np.sqrt(Lam) * SIGMA0 + 2e-3
        assert r.mobility > 0
        assert np.sign(r.dphi[1]) == np.sign(t)
        assert np.linalg.norm(r.hess @ r.e) <= 1e-2 * np.linalg.norm(r.hess)
    # continuity on the upper branch: increments bounded by the gradient times the angle step
    pos = [r for t, r in zip(thetas, rows) if t > 0]
    lip = max(np.linalg.norm(r.dphi) for r in pos)
    assert np.max(np.abs(np.diff([r.phi for r in pos]))) <= lip * np.radians(20.0)
    assert table.diagnostics["convexity_defect"] <= 1e-3
    assert table.diagnostics["max_asymmetry"] <= 1e-10


def test_sweep_flags_failures(lam25, small_grid):
    table = sweep(lam25, small_grid, [direction_from_angle(60.0), np.array([1.0, 0.0])])
    assert "failed" not in table.rows[0].flags
    assert table.rows[1].flags[:2] == ["failed", "DomainError"]
    assert len(table.ok_rows()) == 1
