"""Minimizers of the discrete cylinder Lagrangian (pulsating standing waves)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cylinder import (
    CylinderField,
    CylinderGrid,
    Discretization,
    DomainError,
    as_direction,
    magnetization_profile,
    transversality,
)
from .media import Medium
from .optim import IterationLimitError, projected_gradient

__all__ = [
    "WaveOptions",
    "WaveSolution",
    "minimize",
    "minimize_regularized",
    "check_monotone",
    "mass_identity",
    "decay_rate",
    "shift_rows",
    "random_initial",
]

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class WaveOptions:
    """Solver controls.  ``tol=None`` selects 1e-8 for constant media and 1e-6 otherwise."""

    tol: Optional[float] = None
    max_iter: int = 400_000
    transversality_floor: float = 0.05
    init: str = "tanh"
    seed: Optional[int] = None
    pre_tol: float = 1e-3
    check_every: int = 10

    def resolved_tol(self, medium: Medium) -> float:
        if self.tol is not None:
            return float(self.tol)
        return 1e-8 if medium.field.constant else 1e-6


@dataclass
class WaveSolution:
    U: CylinderField
    e: np.ndarray
    energy: float
    shift: float
    iterations: int
    residual_norm: float
    delta_reg: float
    medium: Medium
    converged: bool = True
    objective: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> CylinderGrid:
        return self.U.grid

    def discretization(self, v=None) -> Discretization:
        return Discretization(self.grid, self.e if v is None else v, self.medium, self.delta_reg)


# ---------------------------------------------------------------------------


def _normal_vector(grid: CylinderGrid) -> np.ndarray:
    """Constraint vector ``c`` with ``<c, U>`` = x-average of U at s = 0."""
    c = np.zeros(grid.shape)
    pos = grid.L / grid.h_s
    i0 = int(np.floor(pos))
    w = pos - i0
    nx = float(np.prod(grid.n_x))
    c[i0] += (1.0 - w) / nx
    if w > 0:
        c[i0 + 1] += w / nx
    return c


def shift_rows(values: np.ndarray, grid: CylinderGrid, shift: float) -> np.ndarray:
    """``U(s + shift, x)`` by linear interpolation in ``s``; limits +-1 outside."""
    pos = (grid.s + shift + grid.L) / grid.h_s
    lo = pos <= 0
    hi = pos >= grid.n_s - 1
    p = np.clip(pos, 0, grid.n_s - 1 - 1e-12)
    i0 = np.floor(p).astype(int)
    w = grid.broadcast_s(p - i0)
    out = (1 - w) * values[i0] + w * values[np.minimum(i0 + 1, grid.n_s - 1)]
    out[lo] = -1.0
    out[hi] = 1.0
    out[0] = -1.0
    out[-1] = 1.0
    return out


def _psi_zero(grid: CylinderGrid, values: np.ndarray) -> float:
    s, psi, _ = magnetization_profile(CylinderField(grid, values))
    idx = np.nonzero((psi[:-1] <= 0) & (psi[1:] > 0))[0]
    if idx.size == 0:
        raise DomainError("x-average never crosses zero")
    i = idx[np.argmin(np.abs(s[idx]))]
    return float(s[i] + (0 - psi[i]) / (psi[i + 1] - psi[i]) * grid.h_s)


def random_initial(grid: CylinderGrid, rng: np.random.Generator) -> np.ndarray:
    """Random admissible start: a tanh profile with random centre, width and x-modulation."""
    s = grid.broadcast_s(grid.s)
    s0 = rng.uniform(-1.0, 1.0)
    w = rng.uniform(0.7, 2.0)
    U = np.tanh((s - s0) / w) * np.ones(grid.shape)
    xs = grid.x_points()
    for _ in range(3):
        kvec = rng.integers(-2, 3, size=grid.k)
        amp = rng.uniform(-0.3, 0.3)
        U = U + amp * np.cos(2 * np.pi * (xs @ kvec) + rng.uniform(0, 2 * np.pi))[None] / np.cosh(s - s0)
    U = np.clip(U, -1.0, 1.0)
    U[0] = -1.0
    U[-1] = 1.0
    return U


def _initial(grid: CylinderGrid, opts: WaveOptions) -> np.ndarray:
    if opts.init == "random":
        return random_initial(grid, np.random.default_rng(opts.seed))
    if opts.init != "tanh":
        raise DomainError(f"unknown init {opts.init!r}")
    U = np.tanh(grid.broadcast_s(grid.s) / SQRT2) * np.ones(grid.shape)
    U[0] = -1.0
    U[-1] = 1.0
    return U


def _solve(e, m: Medium, g: CylinderGrid, delta_reg: float, opts: WaveOptions, U0) -> WaveSolution:
    e = as_direction(e)
    if e.size != m.d:
        raise DomainError(f"direction has {e.size} components, medium has d={m.d}")
    if not m.field.constant:
        dist = transversality(e, m.k)
        if dist < opts.transversality_floor:
            raise DomainError(f"direction {e} is within {dist:.3g} of the lamination sphere "
                              f"(floor {opts.transversality_floor})")
    tol = opts.resolved_tol(m)
    disc = Discretization(g, e, m, delta_reg)
    Lmax = 1.05 * disc.stiffness_norm() + m.potential.d2_max
    step = 1.0 / Lmax
    c = _normal_vector(g)
    cc = float(np.vdot(c, c))

    def box(U):
        np.clip(U, -1.0, 1.0, out=U)
        U[0] = -1.0
        U[-1] = 1.0
        return U

    def box_normalized(U):
        U = U - c * (np.vdot(c, U) / cc)
        return box(U)

    def stat_factory(constrained):
        def stat(U, r):
            r = r.copy()
            if constrained:
                r -= c * (np.vdot(c, r) / cc)
            r[(U >= 1.0) & (r < 0)] = 0.0
            r[(U <= -1.0) & (r > 0)] = 0.0
            return float(np.abs(r[1:-1]).max())
        return stat

    U = _initial(g, opts) if U0 is None else box(np.array(U0.values if isinstance(U0, CylinderField) else U0,
                                                         dtype=float))
    total = 0
    # phase 1: unconstrained descent to a rough tolerance
    lin, fe, gr = disc.stiffness, disc.energy_from, disc.residual_from
    r1 = projected_gradient(lin, fe, gr, box, U, step, stat_factory(False),
                            max(opts.pre_tol, tol), opts.max_iter, opts.check_every, raise_on_limit=False)
    total += r1.iterations
    shift = _psi_zero(g, r1.x)
    U = shift_rows(r1.x, g, shift)
    # phase 2: enforce the normalization by projection
    r2 = projected_gradient(lin, fe, gr, box_normalized, U, step, stat_factory(True),
                            tol, max(opts.max_iter - total, opts.check_every), opts.check_every,
                            raise_on_limit=False)
    total += r2.iterations
    field_ = CylinderField(g, r2.x)
    sol = WaveSolution(
        U=field_, e=e, energy=Discretization(g, e, m).energy(r2.x), shift=shift, iterations=total,
        residual_norm=r2.residual, delta_reg=float(delta_reg), medium=m, converged=r2.converged,
        objective=r2.f, info={"restarts": r1.restarts + r2.restarts, "step": step, "tol": tol},
    )
    if not r2.converged:
        raise IterationLimitError(
            f"wave solve did not reach tol {tol:.1e} in {total} iterations (residual {r2.residual:.3e})", sol)
    return sol


def minimize(e, m: Medium, g: CylinderGrid, opts: Optional[WaveOptions] = None, U0=None) -> WaveSolution:
    """Normalized minimizer of the discrete Lagrangian in direction ``e``.

    Raises :class:`DomainError` for directions too close to the lamination
    sphere and :class:`IterationLimitError` (carrying the last iterate as
    ``err.result``) when the tolerance is not reached.
    """
    return _solve(e, m, g, 0.0, opts or WaveOptions(), U0)


def minimize_regularized(e, m: Medium, g: CylinderGrid, delta_reg: float,
                         opts: Optional[WaveOptions] = None, U0=None) -> WaveSolution:
    """Minimizer of the Lagrangian plus ``delta_reg/2 * int |d_s U|^2``."""
    if not delta_reg > 0:
        raise DomainError("delta_reg must be positive")
    return _solve(e, m, g, delta_reg, opts or WaveOptions(), U0)


# ---------------------------------------------------------------------------
# Diagnostics


def check_monotone(sol) -> float:
    U = sol.U if isinstance(sol, WaveSolution) else sol
    return float(np.min(np.diff(U.values, axis=0)) / U.grid.h_s)


def mass_identity(sol) -> float:
    U = sol.U if isinstance(sol, WaveSolution) else sol
    g = U.grid
    return float(np.sum(np.diff(U.values, axis=0)) / g.h_s * g.cell)


def decay_rate(sol, window: tuple[float, float] = (0.5, 0.75)) -> tuple[float, float]:
    """Exponential tail rates ``(nu_plus, nu_minus)`` of ``1 -+ psi``.

    The fit uses ``|s| in [window[0] L, window[1] L]``; the outermost part
    of the outer quarter is left out because the Dirichlet rows bend the tail.
    """
    U = sol.U if isinstance(sol, WaveSolution) else sol
    s, psi, _ = magnetization_profile(U)
    L = U.grid.L
    out = []
    for sign in (1.0, -1.0):
        sel = (sign * s >= window[0] * L) & (sign * s <= window[1] * L)
        y = 1.0 - sign * psi[sel]
        if np.any(y <= 0) or sel.sum() < 2:
            out.append(float("inf"))
            continue
        slope = np.polyfit(sign * s[sel], np.log(y), 1)[0]
        out.append(float(-slope))
    return out[0], out[1]
