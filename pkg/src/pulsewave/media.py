"""Double-well potentials and periodic coefficient fields.

A :class:`Medium` bundles a :class:`Potential` ``W`` with a
:class:`CoefficientField` ``a`` defined on the torus ``T^k``.  Fields in
laminar mode depend only on the first ``k`` coordinates of ``R^d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Potential",
    "Profile",
    "CoefficientField",
    "Medium",
    "Violation",
    "ValidationError",
    "make_quartic_potential",
    "build_a1_profile",
    "constant_profile",
    "cosine_profile",
    "make_laminar_field",
    "make_constant_field",
    "homogeneous_medium",
    "laminar7_medium",
    "cosine_laminar_medium",
    "validate",
]


class ValidationError(ValueError):
    """Raised for parameters outside the admissible range."""


# ---------------------------------------------------------------------------
# Potentials


@dataclass(frozen=True)
class Potential:
    """Double-well potential with zeros at -1 and +1, extended to [-2, 2]."""

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    alpha: float
    domain: tuple[float, float] = (-2.0, 2.0)
    # upper bound of |W''| on [-1, 1]; used for step sizes
    d2_max: float = 2.0

    def __call__(self, u):
        return self.eval(u)


def _quartic_W(u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - u * u
    inner = 0.25 * w * w
    if u.size and np.abs(u).max() <= 1.0:
        return inner
    return np.where(u > 1.0, u - 1.0, np.where(u < -1.0, -u - 1.0, inner))


def _quartic_dW(u):
    u = np.asarray(u, dtype=float)
    inner = u * u * u - u
    if u.size and np.abs(u).max() <= 1.0:
        return inner
    return np.where(u > 1.0, 1.0, np.where(u < -1.0, -1.0, inner))


def _quartic_d2W(u):
    u = np.asarray(u, dtype=float)
    inner = 3.0 * u * u - 1.0
    return np.where(np.abs(u) > 1.0, 0.0, inner)


def make_quartic_potential() -> Potential:
    """``W(u) = (1 - u^2)^2 / 4`` on [-1, 1], linear continuation outside.

    The continuation is ``u - 1`` on [1, 2] and ``-u - 1`` on [-2, -1], which
    keeps ``W`` continuous and even.
    """
    return Potential("quartic", _quartic_W, _quartic_dW, _quartic_d2W, alpha=2.0, d2_max=2.0)


# ---------------------------------------------------------------------------
# One-dimensional periodic profiles


@dataclass(frozen=True)
class Profile:
    """A 1-periodic scalar function with a reference sample grid."""

    func: Callable[[np.ndarray], np.ndarray]
    n_samples: int = 256
    name: str = "profile"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.func(np.mod(x, 1.0)), dtype=float) + 0.0 * x

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.n_samples

    @property
    def values(self) -> np.ndarray:
        return self(self.grid)


def _smootherstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def build_a1_profile(delta: float, kappa: float, n_samples: int = 256) -> Profile:
    """Two-plateau profile: 1 on [k, 1/2-k], ``delta`` on [1/2+k, 1-k].

    The plateaus are joined by quintic smoothstep ramps of width ``2*kappa``
    centred at 1/2 and at 0, so the profile is C^2, monotone on each ramp and
    symmetric under ``x -> 1/2 - x`` and ``x -> 3/2 - x``.
    """
    # delta up to 1 is accepted: mild contrasts and the constant control
    if not (0.0 < delta <= 1.0):
        raise ValidationError(f"delta must lie in (0, 1], got {delta}")
    if not (0.0 < kappa < 0.25):
        raise ValidationError(f"kappa must lie in (0, 1/4), got {kappa}")
    if n_samples < 2:
        raise ValidationError("n_samples must be at least 2")

    def a1(x):
        x = np.asarray(x, dtype=float)
        down = 1.0 + (delta - 1.0) * _smootherstep((x - (0.5 - kappa)) / (2.0 * kappa))
        # the rising ramp straddles x = 0; shift the left half up one period
        y = np.where(x < 0.5, x + 1.0, x)
        up = delta + (1.0 - delta) * _smootherstep((y - (1.0 - kappa)) / (2.0 * kappa))
        return np.where((x >= 0.25) & (x <= 0.75), down, up)

    return Profile(a1, n_samples, "a1", {"delta": delta, "kappa": kappa})


def constant_profile(c: float = 1.0, n_samples: int = 64) -> Profile:
    c = float(c)
    return Profile(lambda x: np.full_like(np.asarray(x, dtype=float), c), n_samples, "constant", {"c": c})


def cosine_profile(mean: float, amplitude: float, n_samples: int = 256, phase: float = 0.0) -> Profile:
    """``mean + amplitude * cos(2 pi (x - phase))``."""
    return Profile(
        lambda x: mean + amplitude * np.cos(2.0 * np.pi * (np.asarray(x) - phase)),
        n_samples,
        "cosine",
        {"mean": mean, "amplitude": amplitude, "phase": phase},
    )


# ---------------------------------------------------------------------------
# Coefficient fields


def _periodic_grid(shape: Sequence[int]) -> np.ndarray:
    axes = [np.arange(n) / n for n in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric matrix field ``a`` on ``T^k`` with values in ``S_d``.

    ``evaluator`` maps points of shape ``(..., k)`` to matrices ``(..., d, d)``.
    If it is omitted the stored samples are interpolated multilinearly.
    """

    k: int
    d: int
    samples: np.ndarray
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"
    constant: bool = False

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != self.k + 2 or s.shape[-2:] != (self.d, self.d):
            raise ValidationError(f"samples must have shape (n_1..n_k, {self.d}, {self.d})")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.samples.shape[: self.k]

    @property
    def spacing(self) -> np.ndarray:
        return 1.0 / np.asarray(self.shape, dtype=float)

    def _eigs(self) -> np.ndarray:
        sym = 0.5 * (self.samples + np.swapaxes(self.samples, -1, -2))
        return np.linalg.eigvalsh(sym)

    @property
    def lam(self) -> float:
        return float(self._eigs().min())

    @property
    def Lam(self) -> float:
        return float(self._eigs().max())

    @property
    def div_a(self) -> np.ndarray:
        """Row divergence ``sum_j d_j a_ij`` by centred differences, shape (..., d)."""
        out = np.zeros(self.shape + (self.d,))
        for j in range(self.k):
            h = 1.0 / self.shape[j]
            col = self.samples[..., :, j]
            out += (np.roll(col, -1, axis=j) - np.roll(col, 1, axis=j)) / (2.0 * h)
        return out

    @property
    def lipschitz(self) -> float:
        """Grid estimate of the Lipschitz constant of ``a`` in operator norm."""
        lip = 0.0
        for j in range(self.k):
            h = 1.0 / self.shape[j]
            diff = (np.roll(self.samples, -1, axis=j) - self.samples) / h
            lip = max(lip, float(np.abs(np.linalg.eigvalsh(0.5 * (diff + np.swapaxes(diff, -1, -2)))).max()))
        return lip

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Coefficient matrices at ``points`` (last axis of length ``k``)."""
        points = np.asarray(points, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(np.mod(points, 1.0)))
        return self._interpolate(points)

    def _interpolate(self, points):
        pts = np.mod(points, 1.0)
        n = np.asarray(self.shape)
        pos = pts * n
        base = np.floor(pos).astype(int)
        frac = pos - base
        out = np.zeros(pts.shape[:-1] + (self.d, self.d))
        for corner in np.ndindex(*(2,) * self.k):
            w = np.ones(pts.shape[:-1])
            idx = []
            for j, c in enumerate(corner):
                w = w * (frac[..., j] if c else 1.0 - frac[..., j])
                idx.append((base[..., j] + c) % n[j])
            out += w[..., None, None] * self.samples[tuple(idx)]
        return out

    def on_grid(self, shape: Sequence[int]) -> np.ndarray:
        """Samples on the uniform periodic grid with ``shape`` nodes."""
        shape = tuple(int(n) for n in shape)
        if shape == self.shape and self.evaluator is None:
            return np.array(self.samples)
        return self.evaluate(_periodic_grid(shape))

    def is_diagonal(self) -> bool:
        off = self.samples - np.einsum("...ii->...i", self.samples)[..., None] * np.eye(self.d)
        return bool(np.all(off == 0.0))


def make_constant_field(c: float | np.ndarray = 1.0, d: int = 2, k: int = 1, n_samples: int = 16) -> CoefficientField:
    """Constant field ``c * Id`` (scalar ``c``) or a constant symmetric matrix."""
    mat = np.asarray(c, dtype=float)
    if mat.ndim == 0:
        mat = float(mat) * np.eye(d)
    if mat.shape != (d, d):
        raise ValidationError("constant matrix must be d x d")
    samples = np.broadcast_to(mat, (n_samples,) * k + (d, d)).copy()

    def ev(points):
        return np.broadcast_to(mat, np.shape(points)[:-1] + (d, d)).copy()

    return CoefficientField(k, d, samples, ev, name="constant", constant=True)


def make_laminar_field(a1: Profile, a2: Optional[Profile] = None, d: int = 2, n_samples: Optional[int] = None) -> CoefficientField:
    """Diagonal laminar field ``diag(a1, a2, ..., a2)`` depending on ``x_1`` only."""
    if d < 2:
        raise ValidationError("laminar fields need d >= 2")
    a2 = a2 if a2 is not None else constant_profile(1.0)
    n = int(n_samples or max(a1.n_samples, a2.n_samples))
    grid = np.arange(n) / n
    for p, label in ((a1, "a1"), (a2, "a2")):
        if np.any(p(grid) <= 0.0):
            raise ValidationError(f"profile {label} must be strictly positive")

    def ev(points):
        x1 = np.asarray(points)[..., 0]
        out = np.zeros(x1.shape + (d, d))
        out[..., 0, 0] = a1(x1)
        v2 = a2(x1)
        for i in range(1, d):
            out[..., i, i] = v2
        return out

    samples = ev(grid[:, None])
    const = np.ptp(samples) == 0.0
    return CoefficientField(1, d, samples, ev, name="laminar", constant=bool(const))


# ---------------------------------------------------------------------------
# Media


@dataclass(frozen=True)
class Medium:
    field: CoefficientField
    potential: Potential
    name: str = "medium"

    @property
    def d(self) -> int:
        return self.field.d

    @property
    def k(self) -> int:
        return self.field.k


def homogeneous_medium(c: float = 1.0, d: int = 2, k: int = 1) -> Medium:
    return Medium(make_constant_field(c, d, k), make_quartic_potential(), f"homogeneous(c={c:g})")


def laminar7_medium(delta: float = 0.01, kappa: float = 0.1, a2: Optional[Profile] = None,
                    n_samples: int = 256) -> Medium:
    """Two-plateau laminar medium ``a1(x1) e1 e1 + a2(x1) e2 e2`` in d=2."""
    a1 = build_a1_profile(delta, kappa, n_samples)
    return Medium(make_laminar_field(a1, a2, 2, n_samples), make_quartic_potential(),
                  f"laminar7(delta={delta:g},kappa={kappa:g})")


def cosine_laminar_medium(amp1: float = 0.5, amp2: float = 0.3) -> Medium:
    """Smooth laminar medium ``diag(1 - amp1 cos 2 pi x1, 1 - amp2 cos 2 pi x1)``."""
    if not (0 <= amp1 < 1 and 0 <= amp2 < 1):
        raise ValidationError("amplitudes must lie in [0, 1)")
    field_ = make_laminar_field(cosine_profile(1.0, -amp1), cosine_profile(1.0, -amp2), 2)
    return Medium(field_, make_quartic_potential(), f"cosine({amp1:g},{amp2:g})")


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    location: tuple
    message: str


def _validate_potential(p: Potential) -> list[Violation]:
    out: list[Violation] = []
    u = np.linspace(-1.0, 1.0, 2001)
    w = p.eval(u)
    if np.any(w < 0):
        out.append(Violation("potential_sign", (float(u[np.argmin(w)]),), "W < 0 on [-1, 1]"))
    for z in (-1.0, 1.0):
        if abs(float(p.eval(z))) > 1e-14:
            out.append(Violation("potential_zero", (z,), f"W({z}) != 0"))
        if float(p.d2(z)) < p.alpha:
            out.append(Violation("potential_alpha", (z,), f"W''({z}) < alpha"))
    if p.alpha <= 0:
        out.append(Violation("potential_alpha", (), "alpha must be positive"))
    if np.any(w[1:-1] <= 0):
        out.append(Violation("potential_zero", (), "W vanishes inside (-1, 1)"))
    for z in (-1.0, 1.0):
        jump = abs(float(p.eval(z * (1 + 1e-9))) - float(p.eval(z)))
        if jump > 1e-6:
            out.append(Violation("potential_extension", (z,), "extension discontinuous"))
    left, right = u[(u > -1) & (u < 0)], u[(u > 0) & (u < 1)]
    if np.any(p.d1(left) <= 0) or np.any(p.d1(right) >= 0):
        out.append(Violation("potential_sign_condition", (), "W' sign condition fails"))
    return out


def _validate_field(f: CoefficientField) -> list[Violation]:
    out: list[Violation] = []
    s = f.samples
    asym = np.abs(s - np.swapaxes(s, -1, -2)).max(axis=(-1, -2))
    for idx in zip(*np.nonzero(asym > 0.0)):
        out.append(Violation("field_symmetry", tuple(int(i) for i in idx), f"asymmetry {asym[idx]:.3e}"))
    eig = np.linalg.eigvalsh(0.5 * (s + np.swapaxes(s, -1, -2)))
    for idx in zip(*np.nonzero(eig[..., 0] <= 0.0)):
        out.append(Violation("field_ellipticity", tuple(int(i) for i in idx), "non-positive eigenvalue"))
    if not np.all(np.isfinite(s)):
        out.append(Violation("field_finite", (), "non-finite samples"))
    return out


def validate(obj) -> list[Violation]:
    """Check the invariants of a medium, field or potential; report-only."""
    if isinstance(obj, Medium):
        return _validate_field(obj.field) + _validate_potential(obj.potential)
    if isinstance(obj, CoefficientField):
        return _validate_field(obj)
    if isinstance(obj, Potential):
        return _validate_potential(obj)
    raise TypeError(f"cannot validate {type(obj).__name__}")
