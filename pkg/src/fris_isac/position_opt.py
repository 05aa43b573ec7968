"""Element-by-element position updates of the surface by majorization-minimization.

With the other elements fixed, the position-dependent part of the
objective for element n collapses to a sum of cosines of linear functions
of p_n. Each update minimizes an isotropic quadratic upper model of that
sum over a polytope obtained by linearizing the spacing constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LinkGeometry, direction_cosines, ula_steering
from .numerics import QpProblem, SolverError, active_set_qp

DELTA_FLOOR = 1e-6
MAX_DOUBLINGS = 30


@dataclass(frozen=True)
class PositionContext:
    """Position-independent constants of the objective.

    ``a_t_tilde[n]`` is the n-th entry of the row vector a_t^H x s_r^H Theta^H,
    i.e. (a_t^H x) conj(s_r[n]) conj(theta[n]).
    """

    a_t_tilde: np.ndarray
    c_x: float
    c0: float
    S: np.ndarray  # N x K
    theta: np.ndarray
    kappa_r: np.ndarray  # 2
    kappa_c: np.ndarray  # K x 2
    dkappa: np.ndarray  # K x 2, kappa_r - kappa_c
    zeta_G: float
    zeta_users: np.ndarray
    omega: float
    alpha: float
    wavenumber: float

    @property
    def N(self) -> int:
        return self.theta.size

    @property
    def K(self) -> int:
        return self.zeta_users.size


def build_position_context(theta, x, s_r, s_c, omega: float, alpha: float, geometry: LinkGeometry,
                           M: int, wavelength: float) -> PositionContext:
    theta = np.asarray(theta, dtype=complex)
    a_t = ula_steering(geometry.phi_t, M)
    ax = complex(np.vdot(a_t, np.asarray(x)))
    c_x = abs(ax) ** 2
    zeta_users = np.atleast_1d(np.asarray(geometry.zeta_users, dtype=float))
    s_c = np.atleast_1d(np.asarray(s_c, dtype=complex))
    kappa_r = direction_cosines(geometry.phi_r, geometry.psi_r)
    kappa_c = np.atleast_2d(direction_cosines(geometry.phi_c, geometry.psi_c)).reshape(-1, 2)
    S = np.outer(theta.conj() * ax, s_c.conj() * np.sqrt(zeta_users))
    return PositionContext(
        a_t_tilde=ax * np.conj(s_r) * theta.conj(),
        c_x=c_x,
        c0=omega**2 * geometry.zeta_G * c_x,
        S=S,
        theta=theta,
        kappa_r=kappa_r,
        kappa_c=kappa_c,
        dkappa=kappa_r[None, :] - kappa_c,
        zeta_G=geometry.zeta_G,
        zeta_users=zeta_users,
        omega=float(omega),
        alpha=float(alpha),
        wavenumber=2 * np.pi / wavelength,
    )


def f0_value(ctx: PositionContext, positions) -> float:
    """Position-dependent part of the objective for a whole configuration."""
    P = np.asarray(positions, dtype=float)
    k = ctx.wavenumber
    a_r = np.exp(1j * k * (P @ ctx.kappa_r))
    sens = -2 * ctx.alpha * np.sqrt(ctx.zeta_G) * np.real(ctx.a_t_tilde @ a_r)
    phase = np.exp(1j * k * (P @ ctx.dkappa.T))  # N x K
    quartic = np.abs(ctx.theta.conj() @ phase) ** 2
    lin = np.real(np.sum(ctx.S * phase))
    comm = ctx.c0 * float(ctx.zeta_users @ quartic) - 2 * ctx.omega * np.sqrt(ctx.zeta_G) * lin
    return float(sens + (1 - ctx.alpha) * comm)


@dataclass(frozen=True)
class SurrogateParams:
    """Amplitudes and phases of the cosine terms for one moving element."""

    n: int
    nu: float
    xi: float
    nu_tilde: np.ndarray  # K
    xi_tilde: np.ndarray  # (N-1) x K
    nu_bar: np.ndarray  # K
    xi_bar: np.ndarray  # K
    kappa_r: np.ndarray
    dkappa: np.ndarray
    wavenumber: float


def per_element_params(ctx: PositionContext, n: int, positions) -> SurrogateParams:
    """Cosine-sum parameters of element ``n`` (0-based) with the others fixed."""
    P = np.asarray(positions, dtype=float)
    N = P.shape[0]
    if not 0 <= n < N:
        raise IndexError(f"element index {n} out of range")
    k = ctx.wavenumber
    sq_g = np.sqrt(ctx.zeta_G)
    rho = abs(ctx.a_t_tilde[n])
    others = np.arange(N) != n
    # c~_{i,n,k} = theta_i conj(theta_n) exp(-j k dkappa_k . p_i): unit modulus
    c_tilde = (ctx.theta[others] * np.conj(ctx.theta[n]))[:, None] * np.exp(-1j * k * (P[others] @ ctx.dkappa.T))
    s_nk = np.sign(ctx.omega) * ctx.S[n] if ctx.omega != 0 else ctx.S[n]
    return SurrogateParams(
        n=n,
        nu=2 * ctx.alpha * sq_g * rho,
        xi=float(np.angle(ctx.a_t_tilde[n])),
        nu_tilde=2 * (1 - ctx.alpha) * ctx.c0 * ctx.zeta_users,
        xi_tilde=np.angle(c_tilde).reshape(-1, ctx.K),
        nu_bar=2 * (1 - ctx.alpha) * abs(ctx.omega) * sq_g * np.abs(ctx.S[n]),
        xi_bar=np.angle(s_nk),
        kappa_r=ctx.kappa_r,
        dkappa=ctx.dkappa,
        wavenumber=k,
    )


def _terms(params: SurrogateParams, p):
    """(signed amplitude, phase argument, direction) of every cosine term."""
    p = np.asarray(p, dtype=float)
    k = params.wavenumber
    amp = [np.array([-params.nu])]
    arg = [np.array([params.xi + k * params.kappa_r @ p])]
    vec = [params.kappa_r[None, :]]
    if params.nu_bar.size:
        t = k * (params.dkappa @ p)  # K
        amp.append(np.broadcast_to(params.nu_tilde, params.xi_tilde.shape).ravel())
        arg.append((params.xi_tilde + t[None, :]).ravel())
        vec.append(np.tile(params.dkappa, (params.xi_tilde.shape[0], 1)))
        amp.append(-params.nu_bar)
        arg.append(params.xi_bar + t)
        vec.append(params.dkappa)
    return np.concatenate(amp), np.concatenate(arg), np.vstack(vec)


def f1_value(params: SurrogateParams, p) -> float:
    amp, arg, _ = _terms(params, p)
    return float(amp @ np.cos(arg))


def f1_values(params: SurrogateParams, points) -> np.ndarray:
    """:func:`f1_value` at many candidate points (rows of ``points``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = params.wavenumber
    out = -params.nu * np.cos(params.xi + k * pts @ params.kappa_r)
    if params.nu_bar.size:
        t = k * pts @ params.dkappa.T  # m x K
        out += np.sum(params.nu_tilde * np.cos(params.xi_tilde[None, :, :] + t[:, None, :]), axis=(1, 2))
        out -= np.cos(params.xi_bar[None, :] + t) @ params.nu_bar
    return out


def f1_derivatives(params: SurrogateParams, p):
    """Gradient, Hessian and the curvature coefficient max(||Hessian||_F, floor)."""
    amp, arg, u = _terms(params, p)
    k = params.wavenumber
    grad = -k * (amp * np.sin(arg)) @ u
    hess = -k * k * (u.T * (amp * np.cos(arg))) @ u
    hess = 0.5 * (hess + hess.T)
    return grad, hess, max(float(np.linalg.norm(hess)), DELTA_FLOOR)


def curvature_bound(params: SurrogateParams) -> float:
    """Global upper bound on the spectral norm of the Hessian."""
    amp, _, u = _terms(params, np.zeros(2))
    return float(params.wavenumber**2 * np.sum(np.abs(amp) * np.sum(u * u, axis=1)))


@dataclass(frozen=True)
class ConstraintSet:
    rows: np.ndarray
    offsets: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def slack(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.concatenate([self.rows @ p - self.offsets, p - self.lower, self.upper - p])


def linearize_constraints(p_prev, others, DeltaD: float, A: float) -> ConstraintSet:
    """Halfspaces u^T (p - p') >= DeltaD with u the unit vector from p' to p_prev, plus the box."""
    p_prev = np.asarray(p_prev, dtype=float)
    others = np.asarray(others, dtype=float).reshape(-1, 2)
    diff = p_prev[None, :] - others
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist == 0):
        raise ValueError("moving element coincides with a fixed element")
    u = diff / dist[:, None]
    offsets = DeltaD + np.einsum("ij,ij->i", u, others)
    return ConstraintSet(u, offsets, np.zeros(2), np.full(2, float(A)))


@dataclass(frozen=True)
class SurrogateQP:
    gradient: np.ndarray
    delta: float
    expansion_point: np.ndarray
    constraints: ConstraintSet

    def value(self, p) -> float:
        d = np.asarray(p, dtype=float) - self.expansion_point
        return float(self.gradient @ d + 0.5 * self.delta * d @ d)


def solve_position_qp(qp: SurrogateQP) -> np.ndarray:
    """Minimize grad^T (p - p0) + delta/2 ||p - p0||^2 over the polytope."""
    p0 = qp.expansion_point
    c = qp.constraints
    problem = QpProblem(qp.delta, qp.gradient - qp.delta * p0, c.rows, c.offsets, c.lower, c.upper)
    sol = active_set_qp(problem, p0)
    p = sol.x
    if qp.value(p) > 0:
        return p0.copy()
    return p


def circle_packing_init(N: int, A: float, DeltaD: float) -> np.ndarray:
    """Center-anchored packing lattice of pitch DeltaD inside the region.

    A square lattice of pitch DeltaD (a half-wavelength planar array at the
    default spacing) is used when a ceil(sqrt N)-wide block fits, otherwise
    the denser hexagonal lattice of the same pitch. The N lattice sites
    nearest the region center are kept, ties in lattice order. The layout
    does not depend on A beyond fitting in it.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    center = np.array([A / 2, A / 2])
    lo, hi = DeltaD / 2, A - DeltaD / 2
    c = int(np.ceil(np.sqrt(N)))
    tol = 1e-12 * max(A, 1.0)
    if (c - 1) * DeltaD <= hi - lo + tol:
        g = (np.arange(c) - (c - 1) / 2) * DeltaD
        sites = center + np.stack(np.meshgrid(g, g, indexing="xy"), axis=-1).reshape(-1, 2)
    else:
        dy = DeltaD * np.sqrt(3) / 2
        rows = int(np.floor((hi - lo + tol) / dy)) + 1
        cols = int(np.floor((hi - lo + tol) / DeltaD)) + 1
        pts = []
        for r in range(rows):
            y = lo + r * dy
            shift = 0.5 * DeltaD if r % 2 else 0.0
            for q in range(cols):
                xq = lo + shift + q * DeltaD
                if xq <= hi + tol:
                    pts.append((xq, y))
        sites = np.array(pts).reshape(-1, 2)
        # re-center the occupied bounding box
        if sites.size:
            sites += center - 0.5 * (sites.min(axis=0) + sites.max(axis=0))
    if sites.shape[0] < N:
        raise ValueError(f"cannot pack {N} elements with spacing {DeltaD} in a {A} m square")
    order = np.argsort(np.round(np.linalg.norm(sites - center, axis=1), 12), kind="stable")
    return np.clip(sites[np.sort(order[:N])], 0.0, A)


def random_positions(N: int, A: float, DeltaD: float, rng: np.random.Generator,
                     attempts: int = 2000, restarts: int = 5, sweeps: int = 200) -> np.ndarray:
    """Random feasible placement.

    Uniform random sequential placement is tried first. Dense regions jam
    it (packing fraction above ~0.55), so the fallback starts from the
    lattice of :func:`circle_packing_init` and applies ``sweeps`` rounds of
    uniform random single-element moves, each accepted only if it keeps the
    configuration feasible.
    """
    for _ in range(restarts):
        pts: list[np.ndarray] = []
        for _ in range(attempts):
            cand = rng.uniform(0, A, 2)
            if all(np.linalg.norm(cand - q) >= DeltaD for q in pts):
                pts.append(cand)
                if len(pts) == N:
                    return np.array(pts)
    try:
        P = circle_packing_init(N, A, DeltaD)
    except ValueError:
        raise ValueError(f"random placement of {N} elements failed") from None
    step = DeltaD
    for _ in range(sweeps):
        for n in rng.permutation(N):
            cand = P[n] + rng.uniform(-step, step, 2)
            if np.any(cand < 0) or np.any(cand > A):
                continue
            d = np.linalg.norm(P - cand, axis=1)
            d[n] = np.inf
            if d.min() >= DeltaD:
                P[n] = cand
    return P[rng.permutation(N)]


def min_spacing(positions) -> float:
    P = np.asarray(positions, dtype=float)
    if P.shape[0] < 2:
        return np.inf
    d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def check_positions(positions, A: float, DeltaD: float, tol: float = 1e-9) -> bool:
    P = np.asarray(positions, dtype=float)
    in_box = bool(np.all(P >= -tol) and np.all(P <= A + tol))
    return in_box and min_spacing(P) >= DeltaD - tol


@dataclass
class PositionPassResult:
    positions: np.ndarray
    f1_change: np.ndarray  # per element, <= 0
    deltas: np.ndarray
    doublings: np.ndarray
    trace: list = field(default_factory=list)


def run_position_pass(ctx: PositionContext, positions, A: float, DeltaD: float, wavelength: float,
                      order=None, rng: np.random.Generator | None = None) -> PositionPassResult:
    """One MM step per element in ``order`` (default 0..N-1).

    If a step raises the exact cosine sum, the curvature is doubled and the
    QP re-solved (up to 30 times); failing that the element stays put.
    """
    P = np.array(positions, dtype=float)
    N = P.shape[0]
    order = np.arange(N) if order is None else np.asarray(order)
    rng = rng if rng is not None else np.random.default_rng(0)
    changes = np.zeros(N)
    deltas = np.zeros(N)
    doublings = np.zeros(N, dtype=int)
    trace = [f0_value(ctx, P)]
    for n in order:
        others = np.delete(P, n, axis=0)
        if others.size and np.min(np.linalg.norm(others - P[n], axis=1)) < 1e-9:
            ang = rng.uniform(0, 2 * np.pi)
            P[n] = np.clip(P[n] + 1e-6 * wavelength * np.array([np.cos(ang), np.sin(ang)]), 0, A)
        params = per_element_params(ctx, n, P)
        grad, _, delta = f1_derivatives(params, P[n])
        p0 = P[n].copy()
        cons = linearize_constraints(p0, others, DeltaD, A)
        f_old = f1_value(params, p0)
        new = p0
        for d in range(MAX_DOUBLINGS + 1):
            try:
                cand = solve_position_qp(SurrogateQP(grad, delta, p0, cons))
            except SolverError:
                cand = p0
            if f1_value(params, cand) <= f_old:
                new = cand
                break
            delta *= 2.0
            doublings[n] = d + 1
        changes[n] = f1_value(params, new) - f_old
        deltas[n] = delta
        P[n] = new
        trace.append(trace[-1] + changes[n])
    return PositionPassResult(P, changes, deltas, doublings, trace)
