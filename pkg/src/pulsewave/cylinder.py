"""Truncated cylinder grids and the discrete Lagrangian.

Fields live on ``[-L, L] x T^k`` sampled at ``n_s`` nodes in ``s`` (including
both ends) and ``n_x[j]`` periodic nodes per torus coordinate.  Arrays have
shape ``(n_s, *n_x)``.

The derivative ``D_e = e d_s + D_x`` uses forward differences: in ``s`` with
the closure ``d_s U = 0`` on the last row (``U`` continues as the constant
``+1`` beyond ``L``), in ``x`` with periodic wrap.  The adjoint is the exact
transpose with respect to the uniform grid inner product, so the discrete
Euler-Lagrange operator is symmetric and the residual is the exact gradient
of :func:`energy` divided by the cell measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .media import Medium

__all__ = [
    "CylinderGrid",
    "CylinderField",
    "Box",
    "DomainError",
    "as_direction",
    "direction_from_angle",
    "transversality",
    "Discretization",
    "difference_matrices",
    "apply_D_e",
    "adjoint_D_e",
    "energy",
    "energy_density",
    "residual",
    "magnetization_profile",
    "tv_diagnostic",
    "holder_ratio",
    "generate_physical",
    "verify_cell_identity",
    "birkhoff_check",
    "default_L",
]


class DomainError(ValueError):
    """Input outside the domain of an operation."""


@dataclass(frozen=True)
class CylinderGrid:
    L: float
    n_s: int
    n_x: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "n_x", tuple(int(n) for n in self.n_x))
        if self.n_s < 3 or any(n < 2 for n in self.n_x) or self.L <= 0:
            raise DomainError("need L > 0, n_s >= 3 and n_x >= 2")

    @classmethod
    def from_spacing(cls, L: float, h_s: float, n_x: Sequence[int] | int = 16, k: int = 1) -> "CylinderGrid":
        n_s = int(round(2 * L / h_s)) + 1
        if n_s % 2 == 0:
            n_s += 1  # keep s = 0 on a node
        nx = (n_x,) * k if np.isscalar(n_x) else tuple(n_x)
        return cls(float(L), n_s, nx)

    @property
    def k(self) -> int:
        return len(self.n_x)

    @property
    def h_s(self) -> float:
        return 2.0 * self.L / (self.n_s - 1)

    @property
    def h_x(self) -> np.ndarray:
        return 1.0 / np.asarray(self.n_x, dtype=float)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_s,) + self.n_x

    @property
    def cell(self) -> float:
        return self.h_s * float(np.prod(self.h_x))

    @property
    def s(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_s)

    def x_axis(self, j: int = 0) -> np.ndarray:
        return np.arange(self.n_x[j]) / self.n_x[j]

    def x_points(self) -> np.ndarray:
        mesh = np.meshgrid(*[self.x_axis(j) for j in range(self.k)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def s_weights(self) -> np.ndarray:
        w = np.full(self.n_s, self.h_s)
        w[0] = w[-1] = 0.5 * self.h_s
        return w

    def broadcast_s(self, v: np.ndarray) -> np.ndarray:
        return np.reshape(v, (self.n_s,) + (1,) * self.k)


@dataclass(frozen=True)
class CylinderField:
    grid: CylinderGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: CylinderGrid, f: Callable) -> "CylinderField":
        s = grid.broadcast_s(grid.s)
        xs = [np.reshape(grid.x_axis(j), (1,) * (j + 1) + (-1,) + (1,) * (grid.k - j - 1)) for j in range(grid.k)]
        return cls(grid, np.broadcast_to(f(s, *xs), grid.shape).astype(float))

    def is_admissible(self, tol: float = 0.0) -> bool:
        v = self.values
        return bool(np.all(np.abs(v[0] + 1) <= tol) and np.all(np.abs(v[-1] - 1) <= tol))

    def is_clamped(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values) <= 1.0 + tol))


@dataclass(frozen=True)
class Box:
    """Uniform rectangular grid in ``R^d``: ``origin + spacing * index``."""

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    @classmethod
    def unit_cells(cls, origin: Sequence[float], cells: Sequence[int], nodes_per_unit: int) -> "Box":
        d = len(origin)
        return cls(tuple(map(float, origin)), (1.0 / nodes_per_unit,) * d,
                   tuple(int(c) * nodes_per_unit for c in cells))

    def points(self) -> np.ndarray:
        axes = [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


# ---------------------------------------------------------------------------
# Directions


def as_direction(e, tol: float = 1e-12) -> np.ndarray:
    e = np.asarray(e, dtype=float).ravel()
    if abs(np.linalg.norm(e) - 1.0) > tol:
        raise DomainError(f"direction must be a unit vector, |e| = {np.linalg.norm(e):.15g}")
    return e


def direction_from_angle(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    return np.array([np.cos(t), np.sin(t)])


def transversality(e: np.ndarray, k: int) -> float:
    """Distance from ``e`` to the unit sphere of ``R^k x {0}``."""
    e = np.asarray(e, dtype=float)
    head = e[:k]
    nh = np.linalg.norm(head)
    if nh == 0.0:
        return float(np.sqrt(2.0))
    return float(np.linalg.norm(e - np.concatenate([head / nh, np.zeros(e.size - k)])))


def default_L(medium: Medium, tol: float = 1e-8) -> float:
    """Truncation length with ``exp(-nu L) < tol`` for the a-priori decay rate."""
    f = medium.field
    nu = medium.potential.alpha / (2.0 * (f.Lam + f.d * f.lipschitz))
    return float(np.log(1.0 / tol) / nu)


# ---------------------------------------------------------------------------
# Elementary difference operators on arrays of shape (n_s, *n_x)


def _ds(U, h):
    out = np.empty_like(U)
    out[:-1] = (U[1:] - U[:-1]) / h
    out[-1] = 0.0
    return out


def _dsT(g, h):
    out = np.empty_like(g)
    out[0] = -g[0]
    out[1:-1] = g[:-2] - g[1:-1]
    out[-1] = g[-2]
    return out / h


def _dx(U, j, h):
    return (np.roll(U, -1, axis=1 + j) - U) / h


def _dxT(g, j, h):
    return (np.roll(g, 1, axis=1 + j) - g) / h


def _forward_s_matrix(n_s: int, h: float) -> sp.csr_matrix:
    main = np.full(n_s, -1.0 / h)
    main[-1] = 0.0
    upper = np.full(n_s - 1, 1.0 / h)
    return sp.diags([main, upper], [0, 1], format="csr")


def _forward_periodic_matrix(n: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    for i in range(n):
        m[i, i] -= 1.0 / h
        m[i, (i + 1) % n] += 1.0 / h
    return m.tocsr()


def difference_matrices(grid: CylinderGrid) -> tuple[sp.csr_matrix, list[sp.csr_matrix]]:
    """Sparse forward differences ``(D_s, [D_x_j])`` acting on raveled fields."""
    Ds = _forward_s_matrix(grid.n_s, grid.h_s)
    eyes = [sp.identity(n, format="csr") for n in grid.n_x]

    def kron_all(mats):
        out = mats[0]
        for m_ in mats[1:]:
            out = sp.kron(out, m_, format="csr")
        return out

    S = kron_all([Ds] + eyes)
    X = []
    for j in range(grid.k):
        mats = [sp.identity(grid.n_s, format="csr")] + list(eyes)
        mats[j + 1] = _forward_periodic_matrix(grid.n_x[j], grid.h_x[j])
        X.append(kron_all(mats))
    return S, X


class Discretization:
    """Discrete Lagrangian for a fixed grid, direction and medium.

    The kinetic density is written in reduced variables ``S = d_s U`` and
    ``X_j = d_{x_j} U``:  ``0.5 * (c_ss S^2 + 2 c_sj S X_j + c_jl X_j X_l)``
    with ``c_ss = <a v, v> + delta_reg``, ``c_sj = <a v, e_j>``, ``c_jl = a_jl``.
    ``v`` need not be a unit vector, which is what the corrector equations use.
    The quadratic part is assembled once as the sparse matrix
    ``K = D^T C D`` over all nodes, boundary rows included.
    """

    def __init__(self, grid: CylinderGrid, v, medium: Medium, delta_reg: float = 0.0):
        self.grid = grid
        self.v = np.asarray(v, dtype=float)
        self.medium = medium
        self.delta_reg = float(delta_reg)
        f = medium.field
        if f.k != grid.k:
            raise DomainError(f"medium has k={f.k} periodic coordinates, grid has {grid.k}")
        if self.v.size != f.d:
            raise DomainError(f"direction has {self.v.size} components, medium has d={f.d}")
        self.a = f.on_grid(grid.n_x)  # (*n_x, d, d)
        self.W = medium.potential
        k = grid.k
        av = self.a @ self.v
        c_ss = np.einsum("...i,i->...", av, self.v) + self.delta_reg
        c_sx = [av[..., j] for j in range(k)]
        c_xx = [[self.a[..., j, l] for l in range(k)] for j in range(k)]
        self.Ds, self.Dx = difference_matrices(grid)

        def node_diag(c):
            return sp.diags(np.broadcast_to(c, grid.shape).ravel())

        fluxS = node_diag(c_ss) @ self.Ds
        fluxX = []
        for j in range(k):
            fluxS = fluxS + node_diag(c_sx[j]) @ self.Dx[j]
            fx = node_diag(c_sx[j]) @ self.Ds
            for l in range(k):
                fx = fx + node_diag(c_xx[j][l]) @ self.Dx[l]
            fluxX.append(fx)
        K = self.Ds.T @ fluxS
        for j in range(k):
            K = K + self.Dx[j].T @ fluxX[j]
        self.K = sp.csr_matrix(K)
        self._weights_W = (np.broadcast_to(grid.broadcast_s(grid.s_weights()), grid.shape).ravel()
                           * float(np.prod(grid.h_x)))
        interior = np.ones(grid.shape, dtype=bool)
        interior[0] = interior[-1] = False
        self.interior = interior.ravel()

    # matrix-vector products on raveled or shaped arrays ------------------------
    def stiffness(self, U):
        """``D^T c D U`` (the kinetic part of the residual)."""
        U = np.asarray(U, dtype=float)
        return (self.K @ U.ravel()).reshape(U.shape)

    def kinetic_density(self, U):
        U = np.asarray(U, dtype=float)
        S = (self.Ds @ U.ravel())
        X = [Dx @ U.ravel() for Dx in self.Dx]
        a = self.a
        g = self.grid
        av = a @ self.v
        c_ss = np.broadcast_to(np.einsum("...i,i->...", av, self.v) + self.delta_reg, g.shape).ravel()
        kin = c_ss * S * S
        for j in range(g.k):
            kin = kin + 2 * np.broadcast_to(av[..., j], g.shape).ravel() * S * X[j]
            for l in range(g.k):
                kin = kin + np.broadcast_to(a[..., j, l], g.shape).ravel() * X[j] * X[l]
        return 0.5 * kin.reshape(U.shape)

    # energy and residual -----------------------------------------------------
    def energy_from(self, U, KU) -> float:
        u = np.asarray(U).ravel()
        return 0.5 * float(np.dot(u, np.asarray(KU).ravel())) * self.grid.cell + float(
            np.dot(self._weights_W, self.W.eval(u)))

    def residual_from(self, U, KU):
        r = np.asarray(KU) + self.W.d1(U)
        r = np.array(r, dtype=float).reshape(np.shape(U))
        r[0] = 0.0
        r[-1] = 0.0
        return r

    def energy(self, U) -> float:
        return self.energy_from(U, self.stiffness(U))

    def residual(self, U):
        """Gradient of :meth:`energy` with respect to node values, divided by the cell measure.

        Rows 0 and ``n_s-1`` are pinned and their entries are set to zero.
        """
        return self.residual_from(U, self.stiffness(U))

    def energy_density(self, U):
        """Nodal energy density used in quadrature identities."""
        return self.kinetic_density(U) + self.W.eval(U)

    # linearization ---------------------------------------------------------
    def hessian_matrix(self, U) -> sp.csr_matrix:
        """Sparse second variation restricted to interior nodes (raveled interior ordering)."""
        idx = np.nonzero(self.interior)[0]
        K = self.K[idx][:, idx]
        return sp.csr_matrix(K + sp.diags(self.W.d2(np.asarray(U).ravel()[idx])))

    def hess_apply(self, U, Phi):
        """Second variation ``D^T c D Phi + W''(U) Phi`` with zero Dirichlet rows."""
        P = np.array(Phi, dtype=float, copy=True)
        P[0] = 0.0
        P[-1] = 0.0
        out = self.stiffness(P) + self.W.d2(U) * P
        out[0] = 0.0
        out[-1] = 0.0
        return out

    def stiffness_norm(self, iters: int = 60, seed: int = 0) -> float:
        """Power-iteration estimate of the norm of ``D^T c D`` on interior nodes."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.grid.shape)
        x[0] = x[-1] = 0.0
        lam = 0.0
        for _ in range(iters):
            x /= np.linalg.norm(x)
            y = self.stiffness(x)
            y[0] = y[-1] = 0.0
            lam = float(np.vdot(x, y))
            x = y
        return lam

    def v_derivative_rhs(self, U, xi):
        """``-d/dv`` of the residual in direction ``xi`` (right-hand side of the corrector)."""
        xi = np.asarray(xi, dtype=float)
        g = self.grid
        k = g.k
        u = np.asarray(U, dtype=float).ravel()
        S = self.Ds @ u
        X = [Dx @ u for Dx in self.Dx]
        axi = self.a @ xi
        c_s = np.broadcast_to(np.einsum("...i,i->...", axi, self.v), g.shape).ravel()
        fS = 2.0 * c_s * S
        out = np.zeros_like(u)
        for j in range(k):
            c_j = np.broadcast_to(axi[..., j], g.shape).ravel()
            fS = fS + c_j * X[j]
            out += self.Dx[j].T @ (c_j * S)
        out += self.Ds.T @ fS
        b = -out.reshape(g.shape)
        b[0] = 0.0
        b[-1] = 0.0
        return b


# ---------------------------------------------------------------------------
# Public API on CylinderField


def _disc(U: CylinderField, e, m: Medium, delta_reg=0.0) -> Discretization:
    return Discretization(U.grid, e, m, delta_reg)


def apply_D_e(U: CylinderField, e) -> np.ndarray:
    """``e d_s U + D_x U`` as an array of shape ``(d, n_s, *n_x)``."""
    e = np.asarray(e, dtype=float)
    g = U.grid
    if e.size < g.k:
        raise DomainError("direction dimension below the number of periodic coordinates")
    S = _ds(U.values, g.h_s)
    out = e.reshape((-1,) + (1,) * (g.k + 1)) * S[None]
    for j in range(g.k):
        out[j] = out[j] + _dx(U.values, j, g.h_x[j])
    return out


def adjoint_D_e(F: np.ndarray, e, grid: CylinderGrid) -> CylinderField:
    """Transpose of :func:`apply_D_e` for the uniform grid inner product."""
    e = np.asarray(e, dtype=float)
    F = np.asarray(F, dtype=float)
    out = _dsT(np.tensordot(e, F, axes=(0, 0)), grid.h_s)
    for j in range(grid.k):
        out = out + _dxT(F[j], j, grid.h_x[j])
    return CylinderField(grid, out)


def energy(U: CylinderField, e, m: Medium, delta_reg: float = 0.0) -> float:
    """Discrete Lagrangian: rectangle rule on s-cells for the kinetic part,
    trapezoid in s for ``W``, rectangle rule in the periodic variables."""
    if not np.all(np.isfinite(U.values)):
        raise FloatingPointError("non-finite values in field")
    return _disc(U, e, m, delta_reg).energy(U.values)


def energy_density(U: CylinderField, e, m: Medium) -> CylinderField:
    return CylinderField(U.grid, _disc(U, e, m).energy_density(U.values))


def residual(U: CylinderField, e, m: Medium, delta_reg: float = 0.0) -> CylinderField:
    return CylinderField(U.grid, _disc(U, e, m, delta_reg).residual(U.values))


def magnetization_profile(U: CylinderField):
    """Row averages ``psi(s)``; returns ``(s, psi, callable)``."""
    axes = tuple(range(1, U.grid.k + 1))
    psi = U.values.mean(axis=axes)
    s = U.grid.s

    def f(t):
        return np.interp(t, s, psi, left=-1.0, right=1.0)

    return s, psi, f


def tv_diagnostic(U: CylinderField, s0: float, s1: float) -> float:
    """Total variation of ``U`` over the slab ``(s0, s1) x T^k``."""
    g = U.grid
    if not s0 < s1:
        raise DomainError("need s0 < s1")
    S = _ds(U.values, g.h_s)
    mag2 = S * S
    for j in range(g.k):
        X = _dx(U.values, j, g.h_x[j])
        mag2 = mag2 + X * X
    s = g.s
    # cell [s_i, s_i+1] belongs to the slab when it lies inside it
    inside = (s[:-1] >= s0 - 1e-12) & (s[1:] <= s1 + 1e-12)
    mask = np.zeros(g.n_s, dtype=bool)
    mask[:-1] = inside
    return float(np.sum(np.sqrt(mag2)[mask])) * g.cell


def holder_ratio(U: CylinderField, energy_value: float, lam: float, stride: int = 1) -> float:
    """Largest ratio ``|psi(s)-psi(t)| / (sqrt(2/lam) sqrt(E) |s-t|^(1/2))`` over row pairs."""
    s, psi, _ = magnetization_profile(U)
    s, psi = s[::stride], psi[::stride]
    ds = np.abs(s[:, None] - s[None, :])
    num = np.abs(psi[:, None] - psi[None, :])
    bound = np.sqrt(2.0 / lam) * np.sqrt(max(energy_value, 0.0)) * np.sqrt(ds)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(ds > 0, num / bound, 0.0)
    return float(np.nanmax(r))


# ---------------------------------------------------------------------------
# Generator map and quadrature identities


def _interp_cylinder(values: np.ndarray, grid: CylinderGrid, s: np.ndarray, x: np.ndarray,
                     outside=(-1.0, 1.0)) -> np.ndarray:
    """Multilinear interpolation at ``(s, x)``; ``x`` has trailing axis ``k``."""
    pos = (np.asarray(s) + grid.L) / grid.h_s
    lo, hi = pos < 0, pos > grid.n_s - 1
    pos = np.clip(pos, 0.0, grid.n_s - 1 - 1e-12)
    i0 = np.floor(pos).astype(int)
    fs = pos - i0
    xpos = [np.mod(x[..., j], 1.0) * grid.n_x[j] for j in range(grid.k)]
    j0 = [np.floor(p).astype(int) % grid.n_x[j] for j, p in enumerate(xpos)]
    fx = [xpos[j] - np.floor(xpos[j]) for j in range(grid.k)]
    out = np.zeros(np.shape(pos))
    for corner in np.ndindex(*(2,) * (grid.k + 1)):
        w = fs if corner[0] else 1.0 - fs
        idx = [np.minimum(i0 + corner[0], grid.n_s - 1)]
        for j in range(grid.k):
            c = corner[j + 1]
            w = w * (fx[j] if c else 1.0 - fx[j])
            idx.append((j0[j] + c) % grid.n_x[j])
        out = out + w * values[tuple(idx)]
    out = np.where(lo, outside[0], out)
    out = np.where(hi, outside[1], out)
    return out


def generate_physical(U: CylinderField, e, zeta: float, box: Box | np.ndarray) -> np.ndarray:
    """``u_zeta(x) = U(<x, e> - zeta, x)`` on the nodes of ``box``.

    ``box`` may also be an explicit array of points with trailing axis ``d``.
    Values outside ``[-L, L]`` in ``s`` are the limits ``-1`` and ``+1``.
    """
    pts = box.points() if isinstance(box, Box) else np.asarray(box, dtype=float)
    e = np.asarray(e, dtype=float)
    s = pts @ e - zeta
    return _interp_cylinder(U.values, U.grid, s, pts[..., : U.grid.k])


def _integer_direction(e, max_den: int = 50) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    j = int(np.argmax(np.abs(e)))
    ratios = [Fraction(float(c / e[j])).limit_denominator(max_den) for c in e]
    den = 1
    for r in ratios:
        den = den * r.denominator // gcd(den, r.denominator)
    p = np.array([int(r * den) for r in ratios])
    g = 0
    for c in p:
        g = gcd(g, abs(int(c)))
    p = p // g
    if np.linalg.norm(p / np.linalg.norm(p) - e) > 1e-10:
        raise DomainError(f"direction {e} is not rational with small denominators")
    return p


def verify_cell_identity(U: CylinderField, e, m: Medium, integrand: np.ndarray | None = None,
                         n_zeta: int = 64, n_lambda: int = 128, t_refine: int = 8):
    """Compare a cylinder integral with the physical double average along a rational direction.

    The integrand ``G`` (default: nodal energy density) is extended to the
    cylinder by multilinear interpolation, whose exact integral is the
    trapezoid / rectangle grid sum.  The right-hand side averages
    ``G(<x,e> - zeta, x)`` over ``zeta in [0, m_e)`` and a fundamental strip
    ``Q_e + R e``, both by midpoint rules, in dimension two.

    Returns ``(lhs, rhs, gap)``.
    """
    g = U.grid
    e = as_direction(e, 1e-10)
    if e.size != 2 or g.k != 1:
        raise DomainError("cell identity quadrature implemented for d=2, k=1")
    p = _integer_direction(e)
    m_e = 1.0 / np.linalg.norm(p)
    v = np.array([-p[1], p[0]], dtype=float)  # generator of Z^2 ∩ e^perp
    G = energy_density(U, e, m).values if integrand is None else np.asarray(integrand, dtype=float)
    if G.shape != g.shape:
        raise DomainError("integrand must live on the cylinder grid")
    lhs = float(np.sum(g.broadcast_s(g.s_weights()) * G)) * float(np.prod(g.h_x))
    # substitute s = t - zeta so the cut-off at s = +-L falls on cell edges
    n_t = int(np.ceil(2 * g.L / g.h_s)) * t_refine
    s_edges = np.linspace(-g.L, g.L, n_t + 1)
    sm = 0.5 * (s_edges[1:] + s_edges[:-1])
    ds = s_edges[1] - s_edges[0]
    lam = (np.arange(n_lambda) + 0.5) / n_lambda
    zetas = (np.arange(n_zeta) + 0.5) / n_zeta * m_e
    total = 0.0
    for z in zetas:
        x1 = lam[:, None] * v[0] + (sm[None, :] + z) * e[0]
        vals = _interp_cylinder(G, g, np.broadcast_to(sm, x1.shape), x1[..., None], outside=(0.0, 0.0))
        total += vals.sum() * ds / n_lambda
    rhs = total / n_zeta
    return lhs, float(rhs), abs(lhs - float(rhs))


def birkhoff_check(u: np.ndarray, e, lattice_bound: int = 1, nodes_per_unit: int | None = None,
                   tol: float = 1e-6, box: Box | None = None) -> int:
    """Count nodes with ``u(x + k) < u(x) - tol`` for integer ``k`` with ``<k, e> >= 0``."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    if nodes_per_unit is None:
        if box is None:
            raise DomainError("need nodes_per_unit or box")
        npu = 1.0 / np.asarray(box.spacing)
        if not np.allclose(npu, np.round(npu)) or len(set(np.round(npu))) != 1:
            raise DomainError("box spacing must divide 1")
        nodes_per_unit = int(round(npu[0]))
    d = u.ndim
    count = 0
    for kvec in np.ndindex(*(2 * lattice_bound + 1,) * d):
        k = np.asarray(kvec) - lattice_bound
        if not k.any() or k @ e < 0:
            continue
        off = k * nodes_per_unit
        src, dst = [], []
        for ax in range(d):
            n = u.shape[ax]
            o = int(off[ax])
            if abs(o) >= n:
                break
            src.append(slice(max(0, -o), n - max(0, o)))
            dst.append(slice(max(0, o), n - max(0, -o)))
        else:
            count += int(np.sum(u[tuple(dst)] < u[tuple(src)] - tol))
    return count
