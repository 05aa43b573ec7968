"""Phase-shift design of the surface under unit-modulus constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Solution, unit_modulus_descent


@dataclass(frozen=True)
class PhaseQuadratic:
    """theta^H A1 theta - 2 Re{b1^H theta}."""

    A1: np.ndarray
    b1: np.ndarray

    def objective(self, theta) -> float:
        theta = np.asarray(theta)
        return float(np.real(np.vdot(theta, self.A1 @ theta)) - 2 * np.real(np.vdot(self.b1, theta)))


def build_phase_quadratic(G, x, H_rc, s_r, s_c, omega: float, alpha: float) -> PhaseQuadratic:
    """Quadratic in theta obtained with tr(Theta^H C1 Theta C2) = theta^H (C1 o C2^T) theta.

    With v = Theta^H G x = conj(theta) o g, expanding both squared errors in
    conj(theta) and conjugating gives
    A1 = alpha (g g^H o I) + (1 - alpha) omega^2 (g g^H o H_rc^* H_rc^T),
    b1 = alpha diag(g s_r^H) + (1 - alpha) omega diag(g s_c^H H_rc^H).
    """
    g = np.asarray(G) @ np.asarray(x)
    H_rc = np.asarray(H_rc)
    ggH = np.outer(g, g.conj())
    A1 = alpha * np.diag(np.abs(g) ** 2) + (1 - alpha) * omega**2 * ggH * (H_rc.conj() @ H_rc.T)
    b1 = alpha * g * np.conj(s_r) + (1 - alpha) * omega * g * np.conj(H_rc @ np.asarray(s_c))
    A1 = 0.5 * (A1 + A1.conj().T)
    return PhaseQuadratic(A1, b1)


def optimize_phases(q: PhaseQuadratic, theta_init, tol: float = 1e-8, max_iter: int = 200,
                    extra_starts: bool = True) -> Solution:
    """Unit-modulus minimization of the phase quadratic.

    Starts from ``theta_init`` (warm start). With ``extra_starts`` the
    phase-aligned point exp(j angle b1) is also tried; the best result is
    returned only if it does not exceed the objective of ``theta_init``.
    """
    theta_init = np.asarray(theta_init, dtype=complex)
    if np.max(np.abs(np.abs(theta_init) - 1.0)) > 1e-8:
        raise ValueError("theta_init must have unit-modulus entries")
    best = unit_modulus_descent(q.A1, q.b1, theta_init, tol=tol, max_iter=max_iter)
    if extra_starts and np.all(np.abs(q.b1) > 0):
        alt = unit_modulus_descent(q.A1, q.b1, q.b1 / np.abs(q.b1), tol=tol, max_iter=max_iter)
        if alt.fun < best.fun:
            best = alt
    f0 = q.objective(theta_init)
    if best.fun > f0:
        best = Solution(theta_init / np.abs(theta_init), f0, best.iterations, True, best.residual, [f0])
    return best
