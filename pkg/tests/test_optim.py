import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pulsewave.optim import IterationLimitError, power_norm, projected_gradient


def box_quadratic(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = B @ B.T / n + 0.1 * np.eye(n)
    b = 2.0 * rng.standard_normal(n)
    return A, b


def run(A, b, tol=1e-10, max_iter=50_000, raise_on_limit=True):
    return projected_gradient(
        lin=lambda x: A @ x,
        f_from=lambda x, Ax: 0.5 * x @ Ax - b @ x,
        grad_from=lambda x, Ax: Ax - b,
        project=lambda x: np.clip(x, -1.0, 1.0),
        x0=np.zeros(b.size),
        step=1.0 / np.linalg.eigvalsh(A).max(),
        stat=lambda x, g: float(np.abs(np.where((x >= 1) & (g < 0) | (x <= -1) & (g > 0), 0.0, g)).max()),
        tol=tol,
        max_iter=max_iter,
        raise_on_limit=raise_on_limit,
    )


def test_power_norm_diagonal():
    d = np.array([1.0, 3.0, 7.5, 2.0])
    lam = power_norm(lambda x: d * x, np.ones(4), iters=200)
    assert lam == pytest.approx(7.5, rel=1e-8)


def test_box_qp_matches_active_set_solution():
    A = np.diag([1.0, 2.0, 4.0])
    b = np.array([0.5, 6.0, -8.0])
    res = run(A, b)
    assert res.converged
    assert np.allclose(res.x, [0.5, 1.0, -1.0], atol=1e-9)


def test_iteration_limit_carries_iterate():
    A, b = box_quadratic(30, 3)
    with pytest.raises(IterationLimitError) as info:
        run(A, b, tol=1e-14, max_iter=20)
    assert info.value.result is not None
    assert info.value.result.iterations == 20 and not info.value.result.converged
    quiet = run(A, b, tol=1e-14, max_iter=20, raise_on_limit=False)
    assert not quiet.converged


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 10_000))
def test_descent_and_kkt(n, seed):
    A, b = box_quadratic(n, seed)
    res = run(A, b)
    h = np.array(res.history)
    # accepted iterates never increase f beyond the round-off allowance
    assert np.all(np.diff(h) <= 1e-12 * (1 + np.abs(h[:-1])))
    g = A @ res.x - b
    x = res.x
    assert np.all(np.abs(x) <= 1.0)
    free = (x > -1 + 1e-9) & (x < 1 - 1e-9)
    assert np.all(np.abs(g[free]) <= 1e-8)
    assert np.all(g[x >= 1 - 1e-9] <= 1e-8)
    assert np.all(g[x <= -1 + 1e-9] >= -1e-8)
