"""Transmit beamformer design on the power sphere by an augmented Lagrangian method."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import LineSearchError, SolverError, quasi_newton_minimize


def vec(W) -> np.ndarray:
    return np.asarray(W).ravel(order="F")


def unvec(w, M: int, K: int) -> np.ndarray:
    return np.asarray(w).reshape((M, K), order="F")


def real_embedding(A) -> np.ndarray:
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


@dataclass(frozen=True)
class BeamformerQuadratic:
    """w^H A2 w - 2 Re{b2^H w} with w = vec(W), plus its real form."""

    A2: np.ndarray
    b2: np.ndarray
    A2_real: np.ndarray
    b2_real: np.ndarray
    P_t: float
    M: int
    K: int

    def objective(self, w) -> float:
        w = vec(w) if np.ndim(w) == 2 else np.asarray(w)
        return float(np.real(np.vdot(w, self.A2 @ w)) - 2 * np.real(np.vdot(self.b2, w)))

    def objective_real(self, wr) -> float:
        wr = np.asarray(wr)
        return float(wr @ self.A2_real @ wr - 2 * self.b2_real @ wr)


@dataclass
class AlmState:
    mu: float
    gamma: float
    feasibility: float


@dataclass
class AlmResult:
    W: np.ndarray
    objective: float
    feasibility: float
    outer_iterations: int
    inner_iterations: int
    history: list = field(default_factory=list)


def effective_channel(H_rc, theta, G) -> np.ndarray:
    """H_c = H_rc^H Theta^H G, the K x M BS-to-user channel."""
    return np.asarray(H_rc).conj().T @ (np.conj(theta)[:, None] * np.asarray(G))


def build_w_quadratic(G, theta, H_rc, s_r, s_c, omega: float, alpha: float, P_t: float) -> BeamformerQuadratic:
    G = np.asarray(G)
    s_c = np.asarray(s_c)
    M, K = G.shape[1], s_c.size
    H_c = effective_channel(H_rc, theta, G)
    S = np.outer(s_c.conj(), s_c)  # s_c^* s_c^T
    A2 = alpha * np.kron(S, G.conj().T @ G) + (1 - alpha) * omega**2 * np.kron(S, H_c.conj().T @ H_c)
    A2 = 0.5 * (A2 + A2.conj().T)
    B = alpha * np.outer(G.conj().T @ (theta * np.asarray(s_r)), s_c.conj()) \
        + (1 - alpha) * omega * np.outer(H_c.conj().T @ s_c, s_c.conj())
    b2 = vec(B)
    return BeamformerQuadratic(A2, b2, real_embedding(A2), np.concatenate([b2.real, b2.imag]), P_t, M, K)


def matched_filter(H_c, P_t: float) -> np.ndarray:
    """W proportional to H_c^H with ||W||_F^2 = P_t."""
    W = np.asarray(H_c).conj().T
    nrm = np.linalg.norm(W)
    if nrm == 0:
        W = np.ones_like(W)
        nrm = np.linalg.norm(W)
    return W * np.sqrt(P_t) / nrm


def alm_optimize_w(
    q: BeamformerQuadratic,
    w_init,
    alm_tol: float,
    gamma0: float = 1.0,
    gamma_factor: float = 2.0,
    gamma_max: float = 1e8,
    max_outer: int = 100,
    inner_max_iter: int = 500,
) -> AlmResult:
    """ALM on the real form with a quasi-Newton inner solver.

    The multiplier follows mu <- mu + gamma (w^T w - P_t) and the penalty is
    multiplied by ``gamma_factor`` every outer iteration up to ``gamma_max``.
    The exit point is rescaled onto ||w||^2 = P_t and is never worse than the
    (rescaled) initial point.
    """
    P_t = q.P_t
    w0 = vec(w_init) if np.ndim(w_init) == 2 else np.asarray(w_init, dtype=complex)
    if abs(np.vdot(w0, w0).real - P_t) > 1e-6 * P_t:
        raise ValueError("w_init must satisfy ||w||^2 = P_t")
    Ar, br = q.A2_real, q.b2_real
    x = np.concatenate([w0.real, w0.imag])
    scale = np.linalg.norm(Ar, 2) * np.sqrt(P_t) + np.linalg.norm(br) + 1e-300
    mu, gamma = 0.0, gamma0
    history = []
    inner_total = 0
    feas = abs(x @ x - P_t)
    outer = 0
    for outer in range(1, max_outer + 1):
        def lagrangian(z, mu=mu, gamma=gamma):
            Az = Ar @ z
            h = z @ z - P_t
            val = z @ Az - 2 * br @ z + mu * h + 0.5 * gamma * h * h
            return val, 2 * Az - 2 * br + 2 * (mu + gamma * h) * z

        tol = 1e-7 * (scale + abs(mu) * np.sqrt(P_t) + gamma * P_t**1.5)
        try:
            sol = quasi_newton_minimize(lagrangian, x, tol=tol, max_iter=inner_max_iter)
            x, its = sol.x, sol.iterations
        except LineSearchError as err:
            x, its = err.x, err.iterations
        inner_total += its
        h = x @ x - P_t
        feas = abs(h)
        mu += gamma * h
        history.append(AlmState(mu, gamma, feas))
        if feas < alm_tol:
            break
        gamma = min(gamma * gamma_factor, gamma_max)
    else:
        raise SolverError(f"ALM did not reach feasibility {alm_tol:.3e} (last {feas:.3e})")

    n = x.size // 2
    w = x[:n] + 1j * x[n:]
    w *= np.sqrt(P_t) / np.linalg.norm(w)
    f, f0 = q.objective(w), q.objective(w0 * np.sqrt(P_t) / np.linalg.norm(w0))
    if f0 < f:
        w, f = w0 * np.sqrt(P_t) / np.linalg.norm(w0), f0
    return AlmResult(unvec(w, q.M, q.K), f, abs(np.vdot(w, w).real - P_t), outer, inner_total, history)
