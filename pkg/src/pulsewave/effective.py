"""Effective interface coefficients from a computed wave.

All quantities are exact derivatives of the *discrete* problem: the
corrector right-hand side is minus the derivative of the discrete residual
with respect to the (non-unit) direction, and the Hessian is the second
derivative of the discrete minimal energy.  The kernel of the linearized
operator is resolved numerically (lowest eigenvector of the sparse matrix)
and used for deflation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .cylinder import CylinderField, CylinderGrid, DomainError, apply_D_e, direction_from_angle
from .media import Medium
from .wave import WaveOptions, WaveSolution, minimize, minimize_regularized

__all__ = [
    "SolverError",
    "ConsistencyError",
    "LinearizedOperator",
    "CGResult",
    "deflated_cg",
    "surface_tension",
    "grad_surface_tension",
    "mobility",
    "forward_V",
    "solve_corrector",
    "hessian_surface_tension",
    "HessianReport",
    "einstein_check",
    "second_corrector_rhs",
    "solve_second_corrector",
    "TableRow",
    "EffectiveTable",
    "effective_row",
    "sweep",
    "geodesic_gradient_fd",
]


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class ConsistencyError(RuntimeError):
    pass


def forward_V(sol: WaveSolution) -> np.ndarray:
    """``d_s U`` by the forward difference of the energy discretization (last row 0)."""
    U = sol.U.values
    V = np.zeros_like(U)
    V[:-1] = np.diff(U, axis=0) / sol.grid.h_s
    return V


# ---------------------------------------------------------------------------
# Linearized operator


class LinearizedOperator:
    """``Phi -> D^T a D Phi + W''(U) Phi`` on interior nodes, zero Dirichlet rows."""

    def __init__(self, sol: WaveSolution):
        self.base = sol
        self.disc = sol.discretization()
        self.grid = sol.grid
        self.U = sol.U.values
        self.V = forward_V(sol)
        self._kernel = None
        self.kernel_eigenvalue = None

    def __call__(self, Phi: np.ndarray) -> np.ndarray:
        return self.disc.hess_apply(self.U, Phi)

    def matrix(self):
        return self.disc.hessian_matrix(self.U)

    def inner(self, A, B) -> float:
        return float(np.vdot(A, B)) * self.grid.cell

    @property
    def kernel(self) -> np.ndarray:
        """Discrete kernel vector, scaled to best match the forward difference ``d_s U``."""
        if self._kernel is None:
            H = self.matrix()
            interior = self.disc.interior
            v0 = self.V.ravel()[interior]
            try:
                w, vec = spla.eigsh(H, k=1, sigma=-1e-3, which="LM", v0=v0)
            except Exception as exc:  # pragma: no cover - ARPACK failure is rare
                raise SolverError(f"kernel eigen-solve failed: {exc}") from exc
            K = np.zeros(self.grid.shape)
            K.ravel()[interior] = vec[:, 0]
            K *= np.vdot(K, self.V) / np.vdot(K, K)
            self._kernel = K
            self.kernel_eigenvalue = float(w[0])
        return self._kernel

    def kernel_defect(self, V: Optional[np.ndarray] = None) -> float:
        """``||L V|| / ||V||`` over interior nodes (default: the kernel vector)."""
        V = self.kernel if V is None else V
        Vi = np.array(V, copy=True)
        Vi[0] = Vi[-1] = 0.0
        return float(np.linalg.norm(self(Vi)) / np.linalg.norm(Vi))


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list
    removed_fraction: float


def deflated_cg(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, kernel: np.ndarray,
                tol: float = 1e-10, max_iter: int = 20000) -> CGResult:
    """Conjugate gradients on the orthogonal complement of ``kernel``.

    The right-hand side and every iterate are projected orthogonally to
    ``kernel``.  Convergence is declared when the projected residual drops
    below ``tol`` times the projected right-hand side.
    """
    q = kernel / np.linalg.norm(kernel)

    def P(v):
        return v - q * np.vdot(q, v)

    bn = np.linalg.norm(b)
    pb = P(b)
    removed = 0.0 if bn == 0 else 1.0 - np.linalg.norm(pb) / bn
    x = np.zeros_like(b)
    r = pb.copy()
    nr0 = np.linalg.norm(r)
    history = [nr0]
    if nr0 == 0.0:
        return CGResult(x, 0, 0.0, history, removed)
    p = r.copy()
    rr = np.vdot(r, r)
    for it in range(1, max_iter + 1):
        Ap = P(apply(p))
        pAp = np.vdot(p, Ap)
        if pAp <= 0:
            raise SolverError("operator not positive on the deflated space", history)
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = np.vdot(r, r)
        history.append(float(np.sqrt(rr_new)))
        if np.sqrt(rr_new) <= tol * nr0:
            x = P(x)
            true_res = np.linalg.norm(P(apply(x)) - pb) / nr0
            return CGResult(x, it, float(true_res), history, removed)
        p = r + (rr_new / rr) * p
        rr = rr_new
        if it % 200 == 0:
            x = P(x)
            p = P(p)
    raise SolverError(f"deflated CG did not converge in {max_iter} iterations "
                      f"(relative residual {history[-1] / nr0:.2e})", history)


# ---------------------------------------------------------------------------
# First-order quantities


def surface_tension(sol: WaveSolution) -> float:
    return float(sol.energy)


def grad_surface_tension(sol: WaveSolution) -> np.ndarray:
    """``sum d_s U * a D_e U`` over the cylinder (envelope derivative of the energy)."""
    g = sol.grid
    DU = apply_D_e(sol.U, sol.e)  # (d, n_s, *n_x)
    a = sol.medium.field.on_grid(g.n_x)  # (*n_x, d, d)
    flux = np.einsum("...ij,j...->i...", a[None], DU)
    S = forward_V(sol)
    return np.array([np.sum(S * flux[i]) for i in range(flux.shape[0])]) * g.cell


def mobility(sol: WaveSolution) -> float:
    S = forward_V(sol)
    return float(np.sum(S * S)) * sol.grid.cell


# ---------------------------------------------------------------------------
# Correctors and Hessian


def _normalization_vector(grid: CylinderGrid) -> np.ndarray:
    from .wave import _normal_vector

    return _normal_vector(grid)


def solve_corrector(sol: WaveSolution, xi, op: Optional[LinearizedOperator] = None,
                    tol: float = 1e-10, return_info: bool = False):
    """Derivative of the normalized wave in direction ``xi`` (first corrector ``R``).

    Solves ``L R = b`` by deflated CG, with ``b`` minus the derivative of the
    discrete residual along ``xi``.  A multiple of the kernel vector fixes
    the zero x-average of ``R`` at ``s = 0``.
    """
    op = op or LinearizedOperator(sol)
    b = op.disc.v_derivative_rhs(op.U, xi)
    K = op.kernel
    res = deflated_cg(op, b, K, tol=tol)
    c = _normalization_vector(sol.grid)
    R = res.x - K * (np.vdot(c, res.x) / np.vdot(c, K))
    R[0] = R[-1] = 0.0
    flags = []
    if res.removed_fraction > 0.5:
        flags.append("near_singular")
        warnings.warn("kernel projection removed more than half of the corrector RHS", RuntimeWarning)
    info = {"iterations": res.iterations, "residual": res.residual, "removed_fraction": res.removed_fraction,
            "flags": flags}
    field_ = CylinderField(sol.grid, R)
    return (field_, info) if return_info else field_


def _qform(sol: WaveSolution, op: LinearizedOperator, xi: np.ndarray, R: np.ndarray) -> float:
    a = op.disc.a
    axx = np.einsum("...ij,i,j->...", a, xi, xi)
    S = op.V
    direct = float(np.sum(axx[None] * S * S)) * sol.grid.cell
    return direct - op.inner(R, op(R))


def _psi_form(sol: WaveSolution, op: LinearizedOperator, xi: np.ndarray, R: np.ndarray, v_floor_rel: float):
    """``sum <a(xi + D_e Psi), xi + D_e Psi> V^2`` with ``Psi = R / V`` on covered nodes."""
    g = sol.grid
    V = op.kernel
    floor = v_floor_rel * np.abs(V).max()
    ok = V > floor
    Psi = np.where(ok, R / np.where(ok, V, 1.0), 0.0)
    DPsi = apply_D_e(CylinderField(g, Psi), sol.e)
    # a forward difference needs its neighbours covered as well
    cov = ok.copy()
    cov[:-1] &= ok[1:]
    for j in range(g.k):
        cov &= np.roll(ok, -1, axis=1 + j)
    vec = xi.reshape((-1,) + (1,) * (g.k + 1)) + DPsi
    a = op.disc.a
    av = np.einsum("...ij,j...->i...", a[None], vec)
    dens = np.sum(av * vec, axis=0) * V * V
    value = float(np.sum(dens[cov])) * g.cell
    coverage = float(cov[1:-1].mean())
    return value, coverage


@dataclass
class HessianReport:
    hessian: np.ndarray
    hessian_psi: np.ndarray
    psi_coverage: float
    correctors: list
    info: list = field(default_factory=list)
    direct_bound: np.ndarray = None


def hessian_surface_tension(sol: WaveSolution, correctors: Optional[Sequence[np.ndarray]] = None,
                            op: Optional[LinearizedOperator] = None, v_floor_rel: float = 1e-8,
                            return_report: bool = False):
    """Hessian of the 1-homogeneous surface tension at ``sol.e``.

    ``correctors`` are the correctors for the standard basis; they are
    computed if omitted.  Off-diagonal entries come from polarization,
    ``(Q(xi+eta) - Q(xi-eta)) / 4``, using linearity of the corrector.
    """
    op = op or LinearizedOperator(sol)
    d = sol.medium.d
    basis = np.eye(d)
    infos = []
    if correctors is None:
        correctors = []
        for i in range(d):
            R, info = solve_corrector(sol, basis[i], op, return_info=True)
            correctors.append(R.values)
            infos.append(info)
    Rs = [np.asarray(R.values if isinstance(R, CylinderField) else R) for R in correctors]
    H = np.zeros((d, d))
    Hp = np.zeros((d, d))
    cov = 1.0
    bound = np.zeros((d, d))
    for i in range(d):
        H[i, i] = _qform(sol, op, basis[i], Rs[i])
        Hp[i, i], c = _psi_form(sol, op, basis[i], Rs[i], v_floor_rel)
        cov = min(cov, c)
        for j in range(i + 1, d):
            qp = _qform(sol, op, basis[i] + basis[j], Rs[i] + Rs[j])
            qm = _qform(sol, op, basis[i] - basis[j], Rs[i] - Rs[j])
            H[i, j] = H[j, i] = 0.25 * (qp - qm)
            pp, c1 = _psi_form(sol, op, basis[i] + basis[j], Rs[i] + Rs[j], v_floor_rel)
            pm, c2 = _psi_form(sol, op, basis[i] - basis[j], Rs[i] - Rs[j], v_floor_rel)
            Hp[i, j] = Hp[j, i] = 0.25 * (pp - pm)
            cov = min(cov, c1, c2)
    S = op.V
    a = op.disc.a
    for i in range(d):
        for j in range(d):
            bound[i, j] = float(np.sum(a[..., i, j][None] * S * S)) * sol.grid.cell
    if return_report:
        return HessianReport(H, Hp, cov, Rs, infos, bound)
    return H


# ---------------------------------------------------------------------------
# Finite-difference oracles on the sphere


def _geodesic(e: np.ndarray, t: np.ndarray, h: float) -> np.ndarray:
    return np.cos(h) * e + np.sin(h) * t


def _tangent_basis(e: np.ndarray) -> np.ndarray:
    d = e.size
    M = np.eye(d) - np.outer(e, e)
    u, s, _ = np.linalg.svd(M)
    return u[:, : d - 1].T


def _solve_like(sol: WaveSolution, e, opts: Optional[WaveOptions]) -> WaveSolution:
    if sol.delta_reg > 0:
        return minimize_regularized(e, sol.medium, sol.grid, sol.delta_reg, opts, U0=sol.U)
    return minimize(e, sol.medium, sol.grid, opts, U0=sol.U)


def geodesic_gradient_fd(sol: WaveSolution, h: float = 1e-4, opts: Optional[WaveOptions] = None) -> np.ndarray:
    """Central differences of the minimal energy along tangent geodesics, plus the radial part ``phi * e``."""
    e = sol.e
    g = sol.energy * e
    for t in _tangent_basis(e):
        fp = _solve_like(sol, _geodesic(e, t, h), opts).energy
        fm = _solve_like(sol, _geodesic(e, t, -h), opts).energy
        g = g + (fp - fm) / (2 * h) * t
    return g


def _fd_hessian(sol: WaveSolution, h: float, opts: Optional[WaveOptions]) -> np.ndarray:
    """Hessian of the 1-homogeneous extension from second differences along geodesics.

    On the sphere, ``<D^2 phi t, t> = f''(0) + f(0)`` for ``f(h) = phi(cos h e + sin h t)``;
    mixed tangent entries use polarization over ``(t_i +- t_j)/sqrt 2``.
    """
    e = sol.e
    T = _tangent_basis(e)
    f0 = sol.energy
    cache = {}

    def second(tvec):
        key = tuple(np.round(tvec, 14))
        if key not in cache:
            fp = _solve_like(sol, _geodesic(e, tvec, h), opts).energy
            fm = _solve_like(sol, _geodesic(e, tvec, -h), opts).energy
            cache[key] = (fp - 2 * f0 + fm) / (h * h) + f0
        return cache[key]

    n = T.shape[0]
    B = np.zeros((n, n))
    for i in range(n):
        B[i, i] = second(T[i])
    for i in range(n):
        for j in range(i + 1, n):
            qp = second((T[i] + T[j]) / np.sqrt(2))
            qm = second((T[i] - T[j]) / np.sqrt(2))
            B[i, j] = B[j, i] = 0.5 * (qp - qm)
    return T.T @ B @ T


def einstein_check(e, m: Medium, g: CylinderGrid, h: float = 1e-2, opts: Optional[WaveOptions] = None,
                   sol: Optional[WaveSolution] = None, delta_reg: float = 0.0) -> dict:
    """Corrector Hessian versus the finite-difference Hessian of the minimal energy."""
    if sol is None:
        sol = (minimize_regularized(e, m, g, delta_reg, opts) if delta_reg > 0 else minimize(e, m, g, opts))
    op = LinearizedOperator(sol)
    rep = hessian_surface_tension(sol, op=op, return_report=True)
    H = rep.hessian
    H_fd = _fd_hessian(sol, h, opts)
    rel = float(np.linalg.norm(H - H_fd) / np.linalg.norm(H_fd))
    M = mobility(sol)
    T = _tangent_basis(sol.e)
    eig = np.linalg.eigvalsh(T @ (H / M) @ T.T)
    return {
        "e": sol.e.tolist(),
        "hess_corrector": H.tolist(),
        "hess_fd": H_fd.tolist(),
        "hess_psi": rep.hessian_psi.tolist(),
        "psi_coverage": rep.psi_coverage,
        "rel_error": rel,
        "mobility": M,
        "mobility_bound_max_eig": float(eig.max()),
        "Lambda": m.field.Lam,
        "energy": sol.energy,
        "kernel_defect": op.kernel_defect(),
    }


# ---------------------------------------------------------------------------
# Second corrector


def second_corrector_rhs(sol: WaveSolution, xi, R: np.ndarray, hess: np.ndarray, mob: float,
                         op: Optional[LinearizedOperator] = None) -> np.ndarray:
    """Right-hand side ``F`` of the second corrector equation in direction ``xi``.

    The discrete form is built so that ``<G, V> = <D^2 phi xi, xi>`` holds
    exactly when ``R`` is the discrete corrector, with ``V`` the forward
    difference of ``U``; hence ``F = G - (Q/M) V`` is orthogonal to ``V``.
    """
    op = op or LinearizedOperator(sol)
    xi = np.asarray(xi, dtype=float)
    R = np.asarray(R.values if isinstance(R, CylinderField) else R)
    g = sol.grid
    disc = op.disc
    a = disc.a
    V = op.V
    axi = a @ xi
    axx = np.einsum("...i,i->...", axi, xi)[None]
    c_s = np.einsum("...i,i->...", axi, sol.e)[None]
    G = axx * V
    dsR = np.zeros_like(R)
    dsR[:-1] = np.diff(R, axis=0) / g.h_s
    G = G + 2.0 * c_s * dsR
    SR = np.zeros_like(R)
    SR[:-1] = R[1:]
    for j in range(g.k):
        c_j = axi[..., j][None]
        dxR = (np.roll(R, -1, axis=1 + j) - R) / g.h_x[j]
        w = c_j * SR
        G = G + c_j * dxR - (np.roll(w, 1, axis=1 + j) - w) / g.h_x[j]
    Q = float(xi @ hess @ xi)
    F = G - (Q / mob) * V
    return F


def solve_second_corrector(sol: WaveSolution, A, hess: Optional[np.ndarray] = None, mob: Optional[float] = None,
                           correctors: Optional[Sequence] = None, op: Optional[LinearizedOperator] = None,
                           check_tol: float = 1e-4, return_info: bool = False):
    """Second corrector ``P^A = sum lambda_i P^{xi_i}`` from the eigen-decomposition of ``A``."""
    op = op or LinearizedOperator(sol)
    A = np.asarray(A, dtype=float)
    if hess is None:
        rep = hessian_surface_tension(sol, correctors, op, return_report=True)
        hess, correctors = rep.hessian, rep.correctors
    if mob is None:
        mob = mobility(sol)
    d = A.shape[0]
    Rs = None
    if correctors is not None:
        Rs = [np.asarray(R.values if isinstance(R, CylinderField) else R) for R in correctors]
    lam, vecs = np.linalg.eigh(0.5 * (A + A.T))
    P = np.zeros(sol.grid.shape)
    c = _normalization_vector(sol.grid)
    K = op.kernel
    checks = []
    lam_tol = 1e-13 * max(np.abs(lam).max(), 1e-300)
    for i in range(d):
        if abs(lam[i]) <= lam_tol:
            continue
        xi = vecs[:, i]
        if Rs is not None:
            R = sum(xi[j] * Rs[j] for j in range(d))
        else:
            R = solve_corrector(sol, xi, op).values
        F = second_corrector_rhs(sol, xi, R, hess, mob, op)
        F[0] = F[-1] = 0.0
        nF = np.linalg.norm(F)
        if nF <= 1e-10 * np.linalg.norm(op.V):
            # identically zero up to round-off (e.g. tangential xi in a constant medium)
            checks.append(0.0)
            continue
        ratio = abs(np.vdot(F, op.V)) / (nF * np.linalg.norm(op.V)) if nF > 0 else 0.0
        checks.append(ratio)
        if nF > 0 and abs(np.vdot(F, op.V)) / nF > check_tol:
            raise ConsistencyError(f"second-corrector RHS not orthogonal to V (ratio {ratio:.2e})")
        res = deflated_cg(op, F, K)
        Pi = res.x - K * (np.vdot(c, res.x) / np.vdot(c, K))
        P += lam[i] * Pi
    P[0] = P[-1] = 0.0
    out = CylinderField(sol.grid, P)
    return (out, {"orthogonality": checks}) if return_info else out


# ---------------------------------------------------------------------------
# Tabulation


@dataclass
class TableRow:
    e: np.ndarray
    phi: float
    dphi: np.ndarray
    hess: np.ndarray
    mobility: float
    flags: list = field(default_factory=list)


@dataclass
class EffectiveTable:
    d: int
    rows: list
    diagnostics: dict = field(default_factory=dict)

    def angles(self) -> np.ndarray:
        return np.array([np.arctan2(r.e[1], r.e[0]) for r in self.rows])

    def ok_rows(self) -> list:
        return [r for r in self.rows if "failed" not in r.flags]


def effective_row(sol: WaveSolution) -> TableRow:
    op = LinearizedOperator(sol)
    flags = []
    rep = hessian_surface_tension(sol, op=op, return_report=True)
    for info in rep.info:
        flags.extend(info["flags"])
    H = 0.5 * (rep.hessian + rep.hessian.T)
    return TableRow(sol.e.copy(), surface_tension(sol), grad_surface_tension(sol), H, mobility(sol),
                    sorted(set(flags)))


def _convexity_defect(table: EffectiveTable) -> float:
    """Largest violation of midpoint convexity over row pairs whose bisector is also a row (d = 2)."""
    rows = table.ok_rows()
    if table.d != 2 or len(rows) < 3:
        return float("nan")
    ang = np.array([np.arctan2(r.e[1], r.e[0]) for r in rows])
    worst = -np.inf
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            mid = 0.5 * (ang[i] + ang[j])
            k = np.nonzero(np.abs(ang - mid) < 1e-9)[0]
            if k.size == 0 or abs(ang[i] - ang[j]) >= np.pi:
                continue
            half = np.linalg.norm(rows[i].e + rows[j].e) / 2
            lhs = half * rows[k[0]].phi
            rhs = 0.5 * (rows[i].phi + rows[j].phi)
            worst = max(worst, lhs - rhs)
    return float(worst)


def sweep(m: Medium, g: CylinderGrid, directions: Sequence, opts: Optional[WaveOptions] = None,
          delta_reg: float = 0.0, warm_start: bool = True) -> EffectiveTable:
    """Effective coefficients over a list of directions; failing rows are flagged and skipped."""
    rows = []
    prev = None
    for e in directions:
        e = np.asarray(e, dtype=float)
        try:
            U0 = prev.U if (warm_start and prev is not None) else None
            if delta_reg > 0:
                sol = minimize_regularized(e, m, g, delta_reg, opts, U0=U0)
            else:
                sol = minimize(e, m, g, opts, U0=U0)
            rows.append(effective_row(sol))
            prev = sol
        except Exception as exc:  # record and continue
            d = m.d
            rows.append(TableRow(e, float("nan"), np.full(d, np.nan), np.full((d, d), np.nan), float("nan"),
                                 ["failed", type(exc).__name__]))
    table = EffectiveTable(m.d, rows)
    ok = table.ok_rows()
    if ok:
        table.diagnostics["convexity_defect"] = _convexity_defect(table)
        table.diagnostics["max_radial_hessian"] = max(
            float(np.linalg.norm(r.hess @ r.e) / max(np.linalg.norm(r.hess), 1e-300)) for r in ok)
        table.diagnostics["max_asymmetry"] = max(float(np.abs(r.hess - r.hess.T).max()) for r in ok)
    return table
