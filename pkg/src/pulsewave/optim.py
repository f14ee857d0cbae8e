"""Accelerated projected gradient descent with monotone restarts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["PGResult", "IterationLimitError", "projected_gradient", "power_norm"]


class IterationLimitError(RuntimeError):
    """Raised when the iteration budget is exhausted; carries the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class PGResult:
    x: np.ndarray
    f: float
    iterations: int
    residual: float
    converged: bool
    restarts: int = 0
    backtracks: int = 0
    history: list = field(default_factory=list)


def power_norm(apply: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, iters: int = 50) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration."""
    x = np.array(x0, dtype=float)
    lam = 0.0
    for _ in range(iters):
        nx = np.linalg.norm(x)
        if nx == 0:
            return 0.0
        x /= nx
        y = apply(x)
        lam = float(np.vdot(x, y))
        x = y
    return lam


def projected_gradient(
    lin: Callable[[np.ndarray], np.ndarray],
    f_from: Callable[[np.ndarray, np.ndarray], float],
    grad_from: Callable[[np.ndarray, np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    step: float,
    stat: Callable[[np.ndarray, np.ndarray], float],
    tol: float,
    max_iter: int = 100_000,
    check_every: int = 10,
    raise_on_limit: bool = True,
    f_noise: float = 1e-12,
) -> PGResult:
    """Minimize ``f`` over the set defined by ``project``.

    The objective is given through a linear map ``lin`` (typically the
    stiffness matrix) and the evaluators ``f_from(x, lin(x))`` and
    ``grad_from(x, lin(x))``.  Exploiting linearity, one application of
    ``lin`` per iteration suffices: the image of the extrapolated point is a
    linear combination of cached images.

    The update is ``project(y - step * grad(y))``.  Nesterov momentum is
    reset whenever the objective would increase or the gradient-mapping test
    fails, so accepted iterates have ``f`` non-increasing up to the relative
    round-off allowance ``f_noise``; if a plain step from the current iterate
    fails to decrease ``f`` the step is halved (Armijo fallback).  ``stat(x, g)``
    measures stationarity and is compared with ``tol``.
    """
    x = project(np.array(x0, dtype=float))
    Lx = lin(x)
    fx = f_from(x, Lx)
    y, Ly = x, Lx
    t = 1.0
    restarts = backtracks = 0
    history = [fx]

    def worse(fn, fx):
        return fn > fx + f_noise * (1.0 + abs(fx))

    for it in range(1, max_iter + 1):
        xn = project(y - step * grad_from(y, Ly))
        Lxn = lin(xn)
        fn = f_from(xn, Lxn)
        # gradient-mapping restart: momentum points against the descent step
        if worse(fn, fx) or np.vdot(y - xn, xn - x) > 0.0:
            restarts += 1
            t = 1.0
            if worse(fn, fx):
                gx = grad_from(x, Lx)
                while True:
                    xn = project(x - step * gx)
                    Lxn = lin(xn)
                    fn = f_from(xn, Lxn)
                    if not worse(fn, fx):
                        break
                    step *= 0.5
                    backtracks += 1
                    if step < 1e-30:
                        xn, Lxn, fn = x, Lx, fx
                        break
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / tn
        y = xn + beta * (xn - x)
        Ly = Lxn + beta * (Lxn - Lx)
        x, Lx, fx, t = xn, Lxn, fn, tn
        if it % check_every == 0:
            history.append(fx)
            res = stat(x, grad_from(x, Lx))
            if res <= tol:
                return PGResult(x, fx, it, res, True, restarts, backtracks, history)
    result = PGResult(x, fx, max_iter, stat(x, grad_from(x, Lx)), False, restarts, backtracks, history)
    if raise_on_limit:
        raise IterationLimitError(f"no convergence in {max_iter} iterations (residual {result.residual:.3e})", result)
    return result
