import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fris_isac.numerics import (
    LineSearchError,
    QpProblem,
    SolverError,
    active_set_qp,
    dominant_eigpair,
    quasi_newton_minimize,
    sphere_constrained_min,
    unit_modulus_descent,
)
from conftest import crandn


def test_quasi_newton_quadratic(rng):
    B = rng.standard_normal((5, 5))
    A = B @ B.T + np.eye(5)
    b = rng.standard_normal(5)
    sol = quasi_newton_minimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b), np.zeros(5), tol=1e-10)
    np.testing.assert_allclose(sol.x, np.linalg.solve(A, b), atol=1e-8)
    assert sol.converged
    assert np.all(np.diff(sol.trace) <= 0)


def test_quasi_newton_quartic():
    sol = quasi_newton_minimize(lambda x: ((x @ x) ** 2, 4 * (x @ x) * x), np.array([1.0, -2.0]), tol=1e-8,
                                max_iter=2000)
    assert np.linalg.norm(sol.x) < 1e-2


def test_quasi_newton_rosenbrock():
    def rosen(x):
        f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
        return f, g

    sol = quasi_newton_minimize(rosen, np.array([-1.2, 1.0]), tol=1e-9, max_iter=2000)
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-5)


def test_quasi_newton_ftol_stops_early():
    def rosen(x):
        f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
        return f, g

    full = quasi_newton_minimize(rosen, np.array([-1.2, 1.0]), tol=1e-12, max_iter=2000)
    early = quasi_newton_minimize(rosen, np.array([-1.2, 1.0]), tol=1e-12, max_iter=2000, ftol=1e-2)
    assert early.converged and early.iterations < full.iterations


def test_quasi_newton_tiny_iterates_do_not_produce_nan():
    sol = quasi_newton_minimize(lambda x: ((x @ x) ** 2, 4 * (x @ x) * x), np.array([1.0, 1.0]), tol=0.0,
                                max_iter=3000)
    assert np.all(np.isfinite(sol.x)) and np.isfinite(sol.fun)


def test_line_search_error_on_ascent_gradient():
    with pytest.raises(LineSearchError) as err:
        quasi_newton_minimize(lambda x: (float(x @ x), -2 * x), np.array([1.0]), max_halvings=5)
    assert err.value.x is not None


def _grid_qp(qp, lo=-3, hi=3, n=601):
    g = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    C, b = qp.all_rows()
    ok = np.all(pts @ C.T - b >= -1e-12, axis=1)
    vals = 0.5 * qp.curvature * np.sum(pts**2, axis=1) + pts @ qp.linear
    return vals[ok].min()


@given(st.integers(0, 2**31))
def test_active_set_kkt_and_grid_oracle(seed):
    r = np.random.default_rng(seed)
    rows = r.standard_normal((3, 2))
    offsets = -r.uniform(0.1, 1.0, 3)  # origin strictly feasible
    qp = QpProblem(float(r.uniform(0.5, 3)), r.standard_normal(2) * 3, rows, offsets, lower=[-2, -2], upper=[2, 2])
    sol = active_set_qp(qp, np.zeros(2))
    info = sol.info
    assert info["feasibility"] <= 1e-10
    assert info["stationarity"] <= 1e-9
    assert info["complementarity"] <= 1e-9
    assert np.all(info["multipliers"] >= -1e-10)
    assert sol.fun <= _grid_qp(qp) + 1e-9


def test_active_set_unconstrained_and_infeasible_start():
    qp = QpProblem(2.0, np.array([2.0, -4.0]), np.zeros((0, 2)), np.zeros(0))
    np.testing.assert_allclose(active_set_qp(qp, [5.0, 5.0]).x, [-1.0, 2.0])
    qp2 = QpProblem(1.0, np.zeros(2), np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(SolverError):
        active_set_qp(qp2, [0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(0.0, np.zeros(2), np.zeros((0, 2)), np.zeros(0))


def test_active_set_projection_example():
    # min ||x - (2, 2)||^2 / 2 s.t. x1 + x2 <= 1 -> (0.5, 0.5)
    qp = QpProblem(1.0, np.array([-2.0, -2.0]), np.array([[-1.0, -1.0]]), np.array([-1.0]))
    sol = active_set_qp(qp, [0.0, 0.0])
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-12)
    assert sol.info["multipliers"][0] == pytest.approx(1.5)


def test_dominant_eigpair(rng):
    B = crandn(rng, 4, 4)
    H = B @ B.conj().T
    val, vec, zero = dominant_eigpair(H)
    assert not zero
    assert val == pytest.approx(np.linalg.eigvalsh(H)[-1])
    np.testing.assert_allclose(H @ vec, val * vec, atol=1e-9)
    z = dominant_eigpair(np.zeros((3, 3)))
    assert z.zero and z.value == 0 and np.linalg.norm(z.vector) == 1
    with pytest.raises(ValueError):
        dominant_eigpair(B)


def test_sphere_min_linear_and_quadratic(rng):
    c = crandn(rng, 4)
    sol = sphere_constrained_min(lambda s: (float(np.real(np.vdot(c, s))), c), 2.0, crandn(rng, 4))
    np.testing.assert_allclose(sol.x, -2.0 * c / np.linalg.norm(c), atol=1e-6)
    B = crandn(rng, 4, 4)
    H = B @ B.conj().T
    sol = sphere_constrained_min(lambda s: (float(np.real(np.vdot(s, H @ s))), 2 * H @ s), 1.0, crandn(rng, 4),
                                 restarts=2, rng=rng)
    assert sol.fun == pytest.approx(np.linalg.eigvalsh(H)[0], rel=1e-7)
    assert np.linalg.norm(sol.x) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sphere_constrained_min(lambda s: (0.0, 0 * s), 0.0, np.ones(2))


def test_unit_modulus_descent_diagonal(rng):
    b = crandn(rng, 5)
    sol = unit_modulus_descent(np.eye(5), b, np.ones(5, dtype=complex), tol=1e-15, max_iter=2000)
    np.testing.assert_allclose(sol.x, b / np.abs(b), atol=1e-4)
    with pytest.raises(ValueError):
        unit_modulus_descent(np.eye(2), np.ones(2), np.array([2.0, 1.0]))
