"""The two-plateau laminar medium in d = 2: energy gap, branch limits, mobility blow-up.

The 1D oracle :func:`min_energy_1d` minimizes

    F(u) = int a(x) u'(x)^2 / 2 + W(u(x)) dx

over ``[-L1, L1 + 1]`` with ``u = -1`` and ``u = +1`` at the ends, by
accelerated projected gradient descent on nested uniform grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad

from .cylinder import CylinderGrid, direction_from_angle, generate_physical
from .effective import (
    LinearizedOperator,
    grad_surface_tension,
    hessian_surface_tension,
    mobility,
)
from .media import Medium, Potential, Profile, build_a1_profile, laminar7_medium, make_quartic_potential
from .optim import IterationLimitError, projected_gradient
from .wave import WaveOptions, WaveSolution, minimize, minimize_regularized

__all__ = [
    "Gap1DReport",
    "BranchRow",
    "min_energy_1d",
    "upper_bound_profile",
    "gap_scan",
    "cylinder_family_trace",
    "dtension_branch_limits",
    "mobility_asymptotics",
    "solve_direction",
]

SIGMA0 = 2.0 * np.sqrt(2.0) / 3.0


@dataclass
class Gap1DReport:
    delta: float
    kappa: float
    e_min: float
    e_pinned: float
    sigma_hat: float
    ratio: float
    min_abs_trace: float = float("nan")
    max_jump: float = float("nan")
    trace: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None


def _as_coefficient(a) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(a, Profile) or callable(a):
        return a
    c = float(a)
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def _solve_level(a, W: Potential, x: np.ndarray, u0: np.ndarray, pin_idx, pin_val, tol, max_iter,
                 newton_from: float = 1e-4):
    h = x[1] - x[0]
    n = x.size
    amid = np.asarray(a(0.5 * (x[1:] + x[:-1])), dtype=float)
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h
    K = sp.csr_matrix(D.T @ sp.diags(amid) @ D)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    fixed = np.zeros(n, dtype=bool)
    fixed[0] = fixed[-1] = True
    if pin_idx is not None:
        fixed[pin_idx] = True

    def lin(u):
        return K @ u

    def f_from(u, Ku):
        return 0.5 * h * float(u @ Ku) + float(w @ W.eval(u))

    def g_from(u, Ku):
        r = Ku + (w / h) * W.d1(u)
        r[fixed] = 0.0
        return r

    def project(u):
        np.clip(u, -1.0, 1.0, out=u)
        u[0], u[-1] = -1.0, 1.0
        if pin_idx is not None:
            u[pin_idx] = pin_val
        return u

    def stat(u, r):
        r = r.copy()
        r[(u >= 1.0) & (r < 0)] = 0.0
        r[(u <= -1.0) & (r > 0)] = 0.0
        return float(np.abs(r).max())

    Lmax = 4.0 * amid.max() / h ** 2 + W.d2_max
    res = projected_gradient(lin, f_from, g_from, project, u0, 1.0 / Lmax, stat, max(tol, newton_from),
                             min(max_iter, 20_000), check_every=20, raise_on_limit=False)
    if res.residual > tol:
        res = _newton_polish(res, K, W, w / h, fixed, f_from, g_from, project, stat, tol)
    return res


def _newton_polish(res, K, W, wr, fixed, f_from, g_from, project, stat, tol, max_steps=50):
    """Damped Newton steps on the free nodes; the gradient phase has already reached the basin."""
    from scipy.sparse.linalg import spsolve

    free = ~fixed
    Kff = sp.csr_matrix(K[free][:, free])
    u = res.x.copy()
    Ku = K @ u
    f = f_from(u, Ku)
    r = g_from(u, Ku)
    rn = stat(u, r)
    for _ in range(max_steps):
        if rn <= tol:
            break
        curv = wr[free] * W.d2(u[free])
        step = None
        # exact Newton first, then the convexified Hessian when that is not a descent step
        for c in (curv, np.maximum(curv, 0.0)):
            d = np.zeros_like(u)
            d[free] = -spsolve(sp.csc_matrix(Kff + sp.diags(c)), r[free])
            if not np.all(np.isfinite(d)) or float(d @ r) >= 0:
                continue
            t = 1.0
            while t > 1e-8:
                un = project(u + t * d)
                Kun = K @ un
                fn = f_from(un, Kun)
                if fn <= f + 1e-12 * (1 + abs(f)):
                    step = (un, Kun, fn)
                    break
                t *= 0.5
            if step is not None:
                break
        if step is None:
            break
        u, Ku, f = step
        r = g_from(u, Ku)
        rn = stat(u, r)
    res.x, res.f, res.residual, res.converged = u, f, rn, rn <= tol
    return res


def min_energy_1d(a, pin: Optional[tuple[float, float]] = None, L1: int = 5, h: Optional[float] = None,
                  potential: Optional[Potential] = None, tol: float = 1e-7, max_iter: int = 400_000,
                  center: Optional[float] = None, return_profile: bool = False):
    """Minimal 1D transition energy in the medium ``a`` (profile, callable or constant).

    ``pin=(x0, value)`` enforces ``u(x0) = value`` at a grid node.  The
    default resolution is ``h = min(1/40, sqrt(min a)/20)`` rounded down to
    ``1/(4m)`` so that quarter points lie on the grid.
    """
    W = potential or make_quartic_potential()
    coef = _as_coefficient(a)
    probe = np.linspace(0.0, 1.0, 1025)
    amin = float(np.min(coef(probe)))
    if h is None:
        h = min(1.0 / 40.0, np.sqrt(amin) / 20.0)
    m_target = int(np.ceil(1.0 / (4.0 * h)))
    levels = [m_target]
    while levels[-1] > 10:
        levels.append(int(np.ceil(levels[-1] / 2)))
    levels = levels[::-1]
    if center is None:
        # unpinned start in the softest part of the period containing the middle of the domain
        center = float(probe[np.argmin(coef(probe))]) if pin is None else float(pin[0])
    width = np.sqrt(2.0 * max(float(coef(np.array([center]))[0]), 1e-12))
    u = None
    x_prev = None
    total = 0
    res = None
    for m in levels:
        hh = 1.0 / (4 * m)
        n = int(round((2 * L1 + 1) / hh)) + 1
        x = -L1 + hh * np.arange(n)
        if u is None:
            u = np.tanh((x - center) / width)
        else:
            u = np.interp(x, x_prev, u)
        pin_idx = pin_val = None
        if pin is not None:
            pin_idx = int(round((pin[0] + L1) / hh))
            if abs(x[pin_idx] - pin[0]) > 1e-9:
                raise ValueError("pin location must lie on the quarter grid")
            pin_val = float(pin[1])
        lvl_tol = tol if m == levels[-1] else max(tol, 1e-4)
        res = _solve_level(coef, W, x, u, pin_idx, pin_val, lvl_tol, max_iter)
        total += res.iterations
        u, x_prev = res.x, x
    if not res.converged:
        raise IterationLimitError(f"1D oracle did not converge (residual {res.residual:.2e})", res)
    if return_profile:
        return res.f, x_prev, u
    return res.f


def upper_bound_profile(delta: float, kappa: float, width: Optional[float] = None) -> float:
    """Energy of ``u = tanh((x - 3/4) / w)`` in the two-plateau medium, ``w = sqrt(delta)`` by default.

    ``width`` overrides ``w`` (for instance ``sqrt(2 delta)`` gives the exact
    standing wave of the constant medium ``delta``).
    """
    a = build_a1_profile(delta, kappa)
    W = make_quartic_potential()
    w = np.sqrt(delta) if width is None else float(width)

    def f(x):
        u = np.tanh((x - 0.75) / w)
        up = (1.0 - u * u) / w
        return 0.5 * a(x) * up * up + W.eval(u)

    lo, hi = 0.75 - 60 * w - 1.0, 0.75 + 60 * w + 1.0
    pts = sorted(p + k for k in range(int(lo) - 2, int(hi) + 2)
                 for p in (kappa, 0.5 - kappa, 0.5 + kappa, 1 - kappa) if lo < p + k < hi)
    val, _ = quad(f, lo, hi, points=pts, limit=max(200, 4 * len(pts)), epsabs=1e-13, epsrel=1e-11)
    return float(val)


def cylinder_family_trace(delta: float, kappa: float, g: Optional[CylinderGrid] = None, delta_reg: float = 1e-2,
                          n_zeta: int = 64, opts: Optional[WaveOptions] = None):
    """Values ``u_zeta(1/4)`` of the generated family of the regularized minimizer at ``e_1``."""
    m = laminar7_medium(delta, kappa)
    g = g or CylinderGrid.from_spacing(3.0, 0.02, 32)
    o = opts or WaveOptions(transversality_floor=0.0, tol=1e-6)
    sol = minimize_regularized(np.array([1.0, 0.0]), m, g, delta_reg, o)
    zeta = np.arange(n_zeta) / n_zeta
    pt = np.array([[0.25, 0.0]])
    trace = np.array([float(generate_physical(sol.U, sol.e, z, pt)[0]) for z in zeta])
    return zeta, trace, sol


def gap_scan(delta: float, kappa: float, g: Optional[CylinderGrid] = None, zeta_grid: int = 64,
             delta_reg: float = 1e-2, h: Optional[float] = None, family: bool = False) -> Gap1DReport:
    """Pinned versus unpinned 1D transition energies.

    With ``family=True`` (or an explicit grid ``g``) the regularized cylinder
    minimizer at ``e_1`` is also computed and its trace ``u_zeta(1/4)`` over
    ``zeta_grid`` samples of one period is attached, together with the
    largest jump between neighbouring samples.
    """
    a1 = build_a1_profile(delta, kappa)
    e_min = min_energy_1d(a1, h=h)
    e_pin = min_energy_1d(a1, pin=(0.25, 0.0), h=h)
    rep = Gap1DReport(delta, kappa, e_min, e_pin, e_pin, e_pin / e_min)
    if family or g is not None:
        zeta, trace, _ = cylinder_family_trace(delta, kappa, g, delta_reg, zeta_grid)
        rep.zeta, rep.trace = zeta, trace
        rep.min_abs_trace = float(np.min(np.abs(trace)))
        rep.max_jump = float(np.max(np.abs(np.diff(np.r_[trace, trace[0]]))[:-1]))
    return rep


# ---------------------------------------------------------------------------
# Near-lamination directions


@dataclass
class BranchRow:
    theta: float
    dphi_e2: float
    mobility: float
    sin_theta_mobility: float
    hess_norm_over_mobility: float = float("nan")
    energy: float = float("nan")
    delta_reg: float = 0.0


def solve_direction(theta: float, m: Medium, g: CylinderGrid, delta_reg: float = 0.0,
                    opts: Optional[WaveOptions] = None, U0=None) -> WaveSolution:
    e = direction_from_angle(theta)
    if delta_reg > 0:
        return minimize_regularized(e, m, g, delta_reg, opts, U0=U0)
    return minimize(e, m, g, opts, U0=U0)


def _reg_for(theta, delta_reg, reg_below):
    return delta_reg if abs(theta) <= reg_below else 0.0


def dtension_branch_limits(theta_list: Sequence[float], m: Optional[Medium] = None,
                           g: Optional[CylinderGrid] = None, delta_reg: float = 1e-3, reg_below: float = 25.0,
                           opts: Optional[WaveOptions] = None) -> list[tuple[float, float]]:
    """``<D phi(e_theta), e_2>`` for each angle (degrees); small angles use the regularized problem."""
    rows = _branch_rows(theta_list, m, g, delta_reg, reg_below, opts, hessian=False)
    return [(r.theta, r.dphi_e2) for r in rows]


def mobility_asymptotics(theta_list: Sequence[float], m: Optional[Medium] = None,
                         g: Optional[CylinderGrid] = None, delta_reg: float = 1e-3, reg_below: float = 25.0,
                         opts: Optional[WaveOptions] = None, hessian: bool = False) -> list[BranchRow]:
    """Mobility and ``|sin theta| M`` along the angle list, optionally with ``||D^2 phi|| / M``."""
    return _branch_rows(theta_list, m, g, delta_reg, reg_below, opts, hessian)


def _branch_rows(theta_list, m, g, delta_reg, reg_below, opts, hessian) -> list[BranchRow]:
    m = m or laminar7_medium(0.01, 0.1)
    g = g or CylinderGrid.from_spacing(6.0, 0.01, 64)
    rows = []
    for th in theta_list:
        reg = _reg_for(th, delta_reg, reg_below)
        sol = solve_direction(th, m, g, reg, opts)
        M = mobility(sol)
        hn = float("nan")
        if hessian:
            H = hessian_surface_tension(sol, op=LinearizedOperator(sol))
            hn = float(np.linalg.norm(H, 2) / M)
        rows.append(BranchRow(float(th), float(grad_surface_tension(sol)[1]), M,
                              abs(np.sin(np.deg2rad(th))) * M, hn, sol.energy, reg))
    return rows
