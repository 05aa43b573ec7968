"""Small dense solver primitives shared by the optimization modules.

Every solver returns a :class:`Solution` carrying iteration counts and final
residuals so callers can log them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

_TINY = 1e-200  # curvature pairs below this are numerically meaningless


@dataclass
class Solution:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    residual: float = 0.0
    trace: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


class SolverError(RuntimeError):
    pass


class LineSearchError(SolverError):
    """Backtracking could not find an Armijo step; ``x``/``fun`` hold the last iterate."""

    def __init__(self, message, x, fun, iterations):
        super().__init__(message)
        self.x = x
        self.fun = fun
        self.iterations = iterations


# ---------------------------------------------------------------------------
# quasi-Newton (limited-memory BFGS) with Armijo backtracking


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        yy = y @ y
        if yy > 0:
            q *= (s @ y) / yy
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def quasi_newton_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    tol: float = 1e-8,
    max_iter: int = 500,
    memory: int = 10,
    c1: float = 1e-4,
    max_halvings: int = 60,
    ftol: float = 0.0,
) -> Solution:
    """Minimize a smooth function given as ``fun(x) -> (value, gradient)``.

    Stops when the gradient norm drops below ``tol``, when an accepted step
    lowers the value by less than ``ftol * |f|`` (off by default) or after
    ``max_iter`` iterations. Every accepted step satisfies the Armijo condition, so the
    recorded objective sequence in ``Solution.trace`` is non-increasing.
    Raises :class:`LineSearchError` when even a steepest-descent step fails
    after ``max_halvings`` halvings.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    trace = [f]
    it = 0
    gnorm = float(np.linalg.norm(g))
    while gnorm >= tol and it < max_iter:
        if s_hist:
            d = _two_loop(g, s_hist, y_hist)
            if g @ d >= 0:
                s_hist.clear()
                y_hist.clear()
                d = -g / gnorm
        else:
            d = -g / max(gnorm, 1.0) if it == 0 else -g
        slope = g @ d
        t = 1.0
        for _ in range(max_halvings):
            x_new = x + t * d
            f_new, g_new = fun(x_new)
            if f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            raise LineSearchError(
                f"line search failed after {max_halvings} halvings (|g|={gnorm:.3e})", x, f, it
            )
        s = x_new - x
        y = g_new - g
        if s @ y > max(1e-12 * np.linalg.norm(s) * np.linalg.norm(y), _TINY):
            s_hist.append(s)
            y_hist.append(y)
        small = f - f_new <= ftol * abs(f_new)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        trace.append(f)
        it += 1
        if small:
            break
    return Solution(x, float(f), it, gnorm < tol or small, gnorm, trace)


# ---------------------------------------------------------------------------
# two-dimensional (or small) QP with isotropic curvature


@dataclass
class QpProblem:
    """min  (curvature/2)*||x||^2 + linear.x   s.t.  rows @ x >= offsets, lower <= x <= upper."""

    curvature: float
    linear: np.ndarray
    rows: np.ndarray
    offsets: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        d = self.linear.size
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, d)
        self.offsets = np.asarray(self.offsets, dtype=float).ravel()
        if self.rows.shape[0] != self.offsets.size:
            raise ValueError("rows and offsets disagree in length")
        if not self.curvature > 0:
            raise ValueError(f"curvature must be positive, got {self.curvature}")

    @property
    def dimension(self) -> int:
        return self.linear.size

    def all_rows(self) -> tuple[np.ndarray, np.ndarray]:
        C, b = [self.rows], [self.offsets]
        eye = np.eye(self.dimension)
        if self.lower is not None:
            C.append(eye)
            b.append(np.broadcast_to(np.asarray(self.lower, dtype=float), (self.dimension,)))
        if self.upper is not None:
            C.append(-eye)
            b.append(-np.broadcast_to(np.asarray(self.upper, dtype=float), (self.dimension,)))
        return np.vstack(C), np.concatenate(b)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.curvature * float(x @ x) + float(self.linear @ x)


def active_set_qp(qp: QpProblem, start, feas_tol: float = 1e-9) -> Solution:
    """Primal active-set method started from a feasible point.

    Returns the KKT point; ``info`` holds the multipliers and the
    stationarity / feasibility / complementarity residuals.
    """
    C, b = qp.all_rows()
    delta, c = qp.curvature, qp.linear
    x = np.array(start, dtype=float)
    m = C.shape[0]
    if m and np.min(C @ x - b) < -feas_tol:
        raise SolverError("active_set_qp: start point is infeasible")
    work: list[int] = []
    max_pivots = 10 * max(m, 1) + 10
    lam_w = np.zeros(0)
    for pivot in range(max_pivots):
        y = -c / delta
        if work:
            Cw = C[work]
            nu = np.linalg.lstsq(Cw @ Cw.T, b[work] - Cw @ y, rcond=None)[0]
            target = y + Cw.T @ nu
            lam_w = delta * nu
        else:
            target = y
            lam_w = np.zeros(0)
        p = target - x
        if np.linalg.norm(p) <= 1e-13 * (1.0 + np.linalg.norm(x)):
            if lam_w.size == 0 or lam_w.min() >= -1e-12 * (1.0 + np.abs(lam_w).max()):
                break
            work.pop(int(np.argmin(lam_w)))
            continue
        Cp = C @ p
        slack = C @ x - b
        alpha, block = 1.0, -1
        for i in np.flatnonzero(Cp < -1e-15):
            if i in work:
                continue
            a_i = max(slack[i], 0.0) / -Cp[i]
            if a_i < alpha:
                alpha, block = a_i, int(i)
        x = x + alpha * p
        if block >= 0:
            work.append(block)
    else:
        raise SolverError(f"active_set_qp: no convergence after {max_pivots} pivots")

    lam = np.zeros(m)
    lam[work] = lam_w
    slack = C @ x - b if m else np.zeros(0)
    stat = float(np.linalg.norm(delta * x + c - C.T @ lam)) if m else float(np.linalg.norm(delta * x + c))
    feas = float(max(0.0, -slack.min())) if m else 0.0
    comp = float(np.abs(lam * slack).max()) if m else 0.0
    return Solution(
        x,
        qp.objective(x),
        pivot + 1,
        True,
        max(stat, feas, comp),
        info={"multipliers": lam, "stationarity": stat, "feasibility": feas,
              "complementarity": comp, "active": sorted(work)},
    )


# ---------------------------------------------------------------------------
# unit-modulus (product of circles) descent


def _normalize(z):
    return z / np.abs(z)


def unit_modulus_descent(A, b, theta0, tol: float = 1e-8, max_iter: int = 200, c1: float = 1e-4) -> Solution:
    """Riemannian conjugate-gradient descent of theta^H A theta - 2 Re{b^H theta} on |theta_n| = 1.

    Steps are retracted by element-wise normalization and accepted only under
    the Armijo condition, so the objective never increases.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    theta = np.asarray(theta0, dtype=complex).copy()
    if np.max(np.abs(np.abs(theta) - 1.0)) > 1e-8:
        raise ValueError("theta0 must have unit-modulus entries")
    theta = _normalize(theta)

    def value(t):
        return float(np.real(np.vdot(t, A @ t)) - 2 * np.real(np.vdot(b, t)))

    def rgrad(t):
        eg = 2 * (A @ t - b)
        return eg - np.real(eg * t.conj()) * t

    f = value(theta)
    g = rgrad(theta)
    d = -g
    step = 1.0 / max(2 * np.linalg.norm(A, 2), np.linalg.norm(b), 1e-300)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        slope = float(np.real(np.vdot(g, d)))
        if slope >= 0:
            d = -g
            slope = -float(np.real(np.vdot(g, g)))
        if slope == 0:
            converged = True
            break
        t = step * 2.0
        for _ in range(60):
            cand = theta + t * d
            if np.all(np.abs(cand) > 0):
                cand = _normalize(cand)
                f_new = value(cand)
                if f_new <= f + c1 * t * slope:
                    break
            t *= 0.5
        else:
            converged = True
            break
        step = t
        g_new = rgrad(cand)
        # Polak-Ribiere+ with transport by tangent projection
        g_old_t = g - np.real(g * cand.conj()) * cand
        d_t = d - np.real(d * cand.conj()) * cand
        beta = max(0.0, float(np.real(np.vdot(g_new, g_new - g_old_t))) / max(float(np.real(np.vdot(g, g))), 1e-300))
        d = -g_new + beta * d_t
        rel = abs(f - f_new) / max(1.0, abs(f))
        theta, f, g = cand, f_new, g_new
        trace.append(f)
        if rel < tol:
            converged = True
            break
    return Solution(theta, f, it, converged, float(np.linalg.norm(g)), trace)


# ---------------------------------------------------------------------------
# eigen-extraction and sphere-constrained minimization


class EigPair(NamedTuple):
    value: float
    vector: np.ndarray
    zero: bool


def dominant_eigpair(H) -> EigPair:
    """Largest eigenvalue and unit eigenvector of a Hermitian PSD matrix."""
    H = np.asarray(H, dtype=complex)
    scale = max(np.abs(H).max(), 1e-300)
    if np.abs(H - H.conj().T).max() > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian")
    n = H.shape[0]
    if np.abs(H).max() == 0:
        e = np.zeros(n, dtype=complex)
        e[0] = 1.0
        return EigPair(0.0, e, True)
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    return EigPair(max(float(w[-1]), 0.0), V[:, -1], False)


def _c2r(z):
    return np.concatenate([z.real, z.imag])


def _r2c(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def sphere_constrained_min(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    radius: float,
    x0,
    restarts: int = 0,
    rng: np.random.Generator | None = None,
    tol: float = 1e-9,
    max_iter: int = 500,
    ftol: float = 0.0,
) -> Solution:
    """Minimize ``fun`` over complex vectors of norm ``radius``.

    ``fun(s) -> (value, grad)`` with ``grad`` the complex form of the real
    gradient (d value = Re{grad^H ds}). The sphere is parameterized by
    ``s = radius * z / ||z||`` and ``z`` is driven by the quasi-Newton
    solver, so every iterate is exactly on the sphere and the objective is
    non-increasing. ``x0`` may be one start or a list of starts; ``restarts``
    extra Gaussian starts are drawn from ``rng``. The best run wins.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    starts = [np.asarray(s, dtype=complex) for s in (x0 if isinstance(x0, (list, tuple)) else [x0])]
    if restarts:
        rng = rng if rng is not None else np.random.default_rng(0)
        n = starts[0].size
        starts += [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(restarts)]

    def real_fun(z):
        nz = np.linalg.norm(z)
        u = z / nz
        val, g = fun(radius * _r2c(u))
        gr = _c2r(g)
        gz = (radius / nz) * (gr - (u @ gr) * u)
        return val, gz

    best = None
    total_it = 0
    for z0 in starts:
        z0 = _c2r(z0 / np.linalg.norm(z0))
        try:
            sol = quasi_newton_minimize(real_fun, z0, tol=tol, max_iter=max_iter, ftol=ftol)
            z, val, its, trace = sol.x, sol.fun, sol.iterations, sol.trace
        except LineSearchError as err:
            z, val, its, trace = err.x, err.fun, err.iterations, []
        total_it += its
        if best is None or val < best[1]:
            best = (z, val, its, trace)
    z, val, its, trace = best
    s = radius * _r2c(z) / np.linalg.norm(z)
    return Solution(s, float(val), total_it, True, 0.0, trace, info={"starts": len(starts)})
