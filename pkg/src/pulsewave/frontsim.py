"""Scaled Allen-Cahn evolution in a periodic medium, front extraction and the homogenized graph flow.

Everything here is two-dimensional: the horizontal coordinate ``x`` is
periodic on ``[0, 1)``, the vertical coordinate ``y`` runs over ``[-H, H]``
with ``u = -1`` at the bottom and ``u = +1`` at the top, and fronts are
graphs ``y = h(x)``.  The coefficient ``a(x/eps)`` must be diagonal.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .effective import EffectiveTable, TableRow
from .media import Medium

__all__ = [
    "StabilityError",
    "FrontExtractionError",
    "ExtrapolationError",
    "PhaseGrid",
    "PhaseFieldState",
    "GraphState",
    "AllenCahn",
    "step_allen_cahn",
    "discrete_energy",
    "extract_front",
    "G_tilde",
    "graph_operator",
    "step_graph_flow",
    "evolve_graph",
    "grim_reaper_residual",
    "planar_state",
    "CompareResult",
    "sharp_interface_compare",
    "homogeneous_table",
]

CLAMP = 1e-12


class StabilityError(ValueError):
    """Time step above the stability bound."""


class FrontExtractionError(ValueError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ExtrapolationError(ValueError):
    """Direction outside the angular coverage of the effective table."""


# ---------------------------------------------------------------------------
# Phase field


@dataclass(frozen=True)
class PhaseGrid:
    """``n_x`` periodic columns of width ``1/n_x`` and rows ``y_j = -H + j h`` (both ends included)."""

    n_x: int
    H: float
    n_y: int

    @classmethod
    def from_spacing(cls, h: float, H: float) -> "PhaseGrid":
        n_x = int(round(1.0 / h))
        hh = 1.0 / n_x
        n_y = 2 * int(np.ceil(H / hh)) + 1
        return cls(n_x, 0.5 * (n_y - 1) * hh, n_y)

    @property
    def h(self) -> float:
        return 1.0 / self.n_x

    @property
    def hy(self) -> float:
        return 2.0 * self.H / (self.n_y - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.h

    @property
    def y(self) -> np.ndarray:
        return np.linspace(-self.H, self.H, self.n_y)


@dataclass
class PhaseFieldState:
    """``u[j, i]`` at height ``y_j`` and column ``x_i``."""

    u: np.ndarray
    epsilon: float
    t: float
    grid: PhaseGrid


@dataclass
class GraphState:
    h: np.ndarray
    t: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.h.size) / self.h.size


def _diag_coeffs(m: Medium, grid: PhaseGrid, eps: float):
    """``a11`` at horizontal midpoints and ``a22`` at columns, from ``a(x/eps)``."""
    if not m.field.is_diagonal():
        raise ValueError("the phase-field solver supports diagonal coefficient fields only")
    if m.d != 2:
        raise ValueError("the phase-field solver is two-dimensional")
    k = m.field.k

    def at(x):
        pts = np.zeros((x.size, k))
        pts[:, 0] = x / eps
        return m.field.evaluate(pts)

    xm = grid.x + 0.5 * grid.h
    return at(xm)[:, 0, 0], at(grid.x)[:, 1, 1]


class AllenCahn:
    """Semi-implicit stepper for ``u_t = div(a(x/eps) Du) - eps^-2 W'(u)``.

    The diffusion matrix is assembled and factorized once per time step size.
    """

    def __init__(self, m: Medium, grid: PhaseGrid, eps: float):
        self.m, self.grid, self.eps = m, grid, float(eps)
        self.W = m.potential
        a11, a22 = _diag_coeffs(m, grid, eps)
        nx, ny = grid.n_x, grid.n_y
        h, hy = grid.h, grid.hy
        # forward differences: periodic in x over all rows, in y between consecutive rows
        Dx = sp.diags([-np.ones(nx), np.ones(nx - 1), np.ones(1)], [0, 1, -(nx - 1)], shape=(nx, nx)) / h
        Dy = sp.diags([-np.ones(ny - 1), np.ones(ny - 1)], [0, 1], shape=(ny - 1, ny)) / hy
        Iy, Ix = sp.identity(ny), sp.identity(nx)
        Gx = sp.kron(Iy, Dx)
        Gy = sp.kron(Dy, Ix)
        Ax = sp.kron(Iy, sp.diags(a11))
        Ay = sp.kron(sp.identity(ny - 1), sp.diags(a22))
        # A = -div(a D), so that the kinetic energy is 1/2 u.A u (times the cell area)
        self.A = sp.csr_matrix(Gx.T @ Ax @ Gx + Gy.T @ Ay @ Gy)
        free = np.ones((ny, nx), dtype=bool)
        free[0] = free[-1] = False
        self.free = free.ravel()
        self.Aff = sp.csr_matrix(self.A[self.free][:, self.free])
        self.Afb = sp.csr_matrix(self.A[self.free][:, ~self.free])
        self._lu = {}

    def dt_max(self) -> float:
        return self.eps ** 2 / (2.0 * self.W.d2_max)

    def _factor(self, dt):
        key = float(dt)
        if key not in self._lu:
            M = sp.identity(self.Aff.shape[0], format="csc") + dt * sp.csc_matrix(self.Aff)
            self._lu = {key: splu(M)}
        return self._lu[key]

    def step(self, state: PhaseFieldState, dt: float) -> PhaseFieldState:
        if dt > self.dt_max() * (1 + 1e-12):
            raise StabilityError(f"dt={dt:.3e} exceeds dt_max={self.dt_max():.3e}")
        u = state.u.ravel()
        uf, ub = u[self.free], u[~self.free]
        rhs = uf - dt * self.eps ** -2 * self.W.d1(uf) - dt * (self.Afb @ ub)
        new = u.copy()
        sol = self._factor(dt).solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise RuntimeError("linear solve produced non-finite values")
        new[self.free] = np.clip(sol, -1 - CLAMP, 1 + CLAMP)
        return PhaseFieldState(new.reshape(state.u.shape), state.epsilon, state.t + dt, state.grid)

    def energy(self, state: PhaseFieldState) -> float:
        """``sum cell * (1/2 <a Du, Du> + eps^-2 W(u))`` with the potential over free nodes."""
        u = state.u.ravel()
        cell = self.grid.h * self.grid.hy
        return float(cell * (0.5 * u @ (self.A @ u) + self.eps ** -2 * np.sum(self.W.eval(u[self.free]))))

    def evolve(self, state: PhaseFieldState, T: float, dt: Optional[float] = None,
               callback: Optional[Callable[[PhaseFieldState], None]] = None) -> PhaseFieldState:
        dt_cap = self.dt_max() if dt is None else dt
        n = max(1, int(np.ceil((T - state.t) / dt_cap - 1e-9)))
        dt = (T - state.t) / n
        for _ in range(n):
            state = self.step(state, dt)
            if callback is not None:
                callback(state)
        return state


def step_allen_cahn(state: PhaseFieldState, dt: float, m: Medium) -> PhaseFieldState:
    """One semi-implicit step (builds the operator; use :class:`AllenCahn` for repeated steps)."""
    return AllenCahn(m, state.grid, state.epsilon).step(state, dt)


def discrete_energy(state: PhaseFieldState, m: Medium) -> float:
    return AllenCahn(m, state.grid, state.epsilon).energy(state)


def planar_state(grid: PhaseGrid, eps: float, profile: Callable[[np.ndarray], np.ndarray], t: float = 0.0,
                 width: Optional[float] = None) -> PhaseFieldState:
    """``u0 = tanh((y - U(x)) / w)`` with ``w = sqrt(2) eps`` and exact boundary rows."""
    w = np.sqrt(2.0) * eps if width is None else width
    Y = grid.y[:, None]
    u = np.tanh((Y - np.asarray(profile(grid.x))[None, :]) / w)
    u[0], u[-1] = -1.0, 1.0
    return PhaseFieldState(np.clip(u, -1.0, 1.0), eps, t, grid)


def extract_front(state: PhaseFieldState) -> GraphState:
    """Height of the zero crossing in each column (linear interpolation)."""
    u = state.u
    y = state.grid.y
    pos = u > 0
    h = np.empty(u.shape[1])
    for i in range(u.shape[1]):
        col = pos[:, i]
        changes = np.nonzero(col[1:] != col[:-1])[0]
        if changes.size == 0:
            raise FrontExtractionError(f"column {i}: no zero crossing", i)
        if changes.size > 1:
            raise FrontExtractionError(f"column {i}: {changes.size} zero crossings", i)
        j = changes[0]
        if col[j]:
            raise FrontExtractionError(f"column {i}: crossing has the wrong orientation", i)
        u0, u1 = u[j, i], u[j + 1, i]
        h[i] = y[j] + (0.0 - u0) / (u1 - u0) * (y[j + 1] - y[j])
    return GraphState(h, state.t)


# ---------------------------------------------------------------------------
# Homogenized graph flow


def _row_angle(r: TableRow) -> float:
    return float(np.arctan2(r.e[1], r.e[0]))


def G_tilde(q, table: EffectiveTable) -> np.ndarray:
    """Graph-flow coefficient ``M(n)^-1 (P D^2phi(n) P)_{11}`` at slope ``q``, ``n = (-q, 1)/sqrt(1+q^2)``.

    Vectorized over ``q``; returns an array of shape ``q.shape + (1, 1)``.
    """
    if table.d != 2:
        raise NotImplementedError("graph flow is implemented for d = 2")
    rows = sorted(table.ok_rows(), key=_row_angle)
    if len(rows) < 2:
        raise ExtrapolationError("the table needs at least two valid rows")
    ang = np.array([_row_angle(r) for r in rows])
    H = np.array([r.hess for r in rows])
    M = np.array([r.mobility for r in rows])
    q = np.asarray(q, dtype=float)
    qq = q.reshape(-1)
    n = np.stack([-qq, np.ones_like(qq)], axis=-1) / np.sqrt(1.0 + qq * qq)[:, None]
    th = np.arctan2(n[:, 1], n[:, 0])
    if np.any(th < ang[0] - 1e-12) or np.any(th > ang[-1] + 1e-12):
        bad = th[(th < ang[0] - 1e-12) | (th > ang[-1] + 1e-12)][0]
        raise ExtrapolationError(f"direction angle {np.degrees(bad):.3f} deg outside table coverage "
                                 f"[{np.degrees(ang[0]):.3f}, {np.degrees(ang[-1]):.3f}]")
    Mi = np.interp(th, ang, M)
    Hi = np.empty((qq.size, 2, 2))
    for a in range(2):
        for b in range(2):
            Hi[:, a, b] = np.interp(th, ang, H[:, a, b])
    Hi = 0.5 * (Hi + np.swapaxes(Hi, 1, 2))
    P = np.eye(2)[None] - n[:, :, None] * n[:, None, :]
    PHP = P @ Hi @ P
    G = PHP[:, 0, 0] / Mi
    return G.reshape(q.shape + (1, 1))


def _lambda_table(table: EffectiveTable) -> float:
    """Largest graph coefficient over the table rows with a vertical component."""
    vals = []
    for r in table.ok_rows():
        if r.e[1] <= 0:
            continue
        q = -r.e[0] / r.e[1]
        vals.append(float(G_tilde(q, table)[0, 0]))
    return max(vals)


def graph_operator(h: np.ndarray, dx: float, table: EffectiveTable, periodic: bool = True) -> np.ndarray:
    """``G(h') h''`` with centred differences; interior nodes only when ``periodic`` is false."""
    if periodic:
        hp = (np.roll(h, -1) - np.roll(h, 1)) / (2 * dx)
        hpp = (np.roll(h, -1) - 2 * h + np.roll(h, 1)) / dx ** 2
    else:
        hp = (h[2:] - h[:-2]) / (2 * dx)
        hpp = (h[2:] - 2 * h[1:-1] + h[:-2]) / dx ** 2
    return G_tilde(hp, table)[..., 0, 0] * hpp


def step_graph_flow(gs: GraphState, table: EffectiveTable, dt: float, Lambda: Optional[float] = None) -> GraphState:
    """Explicit step of ``h_t = G(h') h''`` on the periodic grid ``x_i = i/n``."""
    dx = 1.0 / gs.h.size
    lam = _lambda_table(table) if Lambda is None else Lambda
    if dt > dx * dx / (2.0 * lam) * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds dx^2/(2 Lambda)={dx * dx / (2 * lam):.3e}")
    return GraphState(gs.h + dt * graph_operator(gs.h, dx, table), gs.t + dt)


def evolve_graph(gs: GraphState, table: EffectiveTable, T: float, safety: float = 0.9) -> GraphState:
    dx = 1.0 / gs.h.size
    lam = _lambda_table(table)
    n = max(1, int(np.ceil((T - gs.t) / (safety * dx * dx / (2 * lam)))))
    dt = (T - gs.t) / n
    for _ in range(n):
        gs = step_graph_flow(gs, table, dt, lam)
    return gs


def grim_reaper_residual(table: EffectiveTable, n: int, window: float = 0.3, t: float = 0.0) -> float:
    """Max of ``|h_t - G(h') h''|`` for the grim reaper ``pi t - log(cos(pi (x - 1/2))) / pi`` on ``|x - 1/2| <= window``."""
    dx = 2 * window / n
    x = 0.5 - window + dx * np.arange(-1, n + 2)
    h = np.pi * t - np.log(np.cos(np.pi * (x - 0.5))) / np.pi
    return float(np.abs(np.pi - graph_operator(h, dx, table, periodic=False)).max())


def homogeneous_table(theta_deg: Sequence[float], sigma: float = 2 * np.sqrt(2) / 3) -> EffectiveTable:
    """Closed-form table of the medium ``a = Id``: ``phi = sigma``, ``D^2 phi = sigma (Id - e e)``, ``M = sigma``."""
    rows = []
    for th in theta_deg:
        e = np.array([np.cos(np.radians(th)), np.sin(np.radians(th))])
        rows.append(TableRow(e, sigma, sigma * e, sigma * (np.eye(2) - np.outer(e, e)), sigma, []))
    return EffectiveTable(2, rows)


# ---------------------------------------------------------------------------
# Sharp-interface comparison


@dataclass
class CompareResult:
    epsilon: np.ndarray
    sup_error: np.ndarray
    l2_error: np.ndarray
    runtime_s: np.ndarray
    fronts: list = field(default_factory=list)
    graph: Optional[GraphState] = None

    def slope(self) -> float:
        if self.epsilon.size < 2:
            return float("nan")
        return float(np.polyfit(np.log(self.epsilon), np.log(self.sup_error), 1)[0])


def _periodic_interp(xq, x, h):
    xx = np.concatenate([x - 1.0, x, x + 1.0])
    hh = np.concatenate([h, h, h])
    return np.interp(np.mod(xq, 1.0), xx, hh)


def sharp_interface_compare(m: Medium, table: EffectiveTable, eps_list: Sequence[float], T: float,
                            init: Callable[[np.ndarray], np.ndarray], n_graph: int = 256,
                            cells_per_eps: int = 8, margin: float = 0.1,
                            amplitude: Optional[float] = None, dt_slope: float = 5.0) -> CompareResult:
    """Front error ``sup |eta_eps(T) - h(T)|`` for each ``eps``.

    ``1/eps`` must be an integer so the medium ``a(x/eps)`` is 1-periodic in
    ``x``.  The phase-field step is ``dt_max * min(1, dt_slope * eps)``: at a
    fixed ratio ``dt / eps^2`` the splitting error in the front speed does
    not vanish as ``eps -> 0``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    for e in eps_list:
        if abs(1.0 / e - round(1.0 / e)) > 1e-9:
            raise ValueError(f"1/eps must be an integer, got eps={e}")
    xg = np.arange(n_graph) / n_graph
    h0 = np.asarray(init(xg), dtype=float)
    amp = float(np.max(np.abs(h0))) if amplitude is None else amplitude
    graph = evolve_graph(GraphState(h0.copy()), table, T)
    sup, l2, rts, fronts = [], [], [], []
    for eps in eps_list:
        t0 = time.perf_counter()
        grid = PhaseGrid.from_spacing(eps / cells_per_eps, amp + 10 * eps + margin)
        ac = AllenCahn(m, grid, eps)
        state = ac.evolve(planar_state(grid, eps, init), T, dt=ac.dt_max() * min(1.0, dt_slope * eps))
        front = extract_front(state)
        ref = _periodic_interp(grid.x, xg, graph.h)
        err = front.h - ref
        sup.append(float(np.abs(err).max()))
        l2.append(float(np.sqrt(np.mean(err ** 2))))
        rts.append(time.perf_counter() - t0)
        fronts.append((grid.x, front.h))
    return CompareResult(np.array(eps_list), np.array(sup), np.array(l2), np.array(rts), fronts, graph)
