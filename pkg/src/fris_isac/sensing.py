"""Beampatterns, the mismatch metric and the sensing-only reference signal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import steering_matrix
from .config import SystemConfig
from .numerics import dominant_eigpair, sphere_constrained_min

BETA_MIN = 1e-12


@dataclass(frozen=True)
class AngleGrid:
    azimuths: np.ndarray  # radians, length I_a
    elevations: np.ndarray  # radians, length I_e

    @classmethod
    def from_config(cls, config: SystemConfig) -> "AngleGrid":
        az = np.deg2rad(np.linspace(*config.azimuth_range_deg, config.I_a))
        el = np.deg2rad(np.linspace(*config.elevation_range_deg, config.I_e))
        return cls(az, el)

    @property
    def shape(self) -> tuple[int, int]:
        return self.azimuths.size, self.elevations.size

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (phi, psi) pairs, azimuth-major."""
        phi, psi = np.meshgrid(self.azimuths, self.elevations, indexing="ij")
        return phi.ravel(), psi.ravel()

    def steering(self, positions, wavelength: float) -> np.ndarray:
        phi, psi = self.directions()
        return steering_matrix(positions, phi, psi, wavelength)


@dataclass
class SensingReference:
    R_tilde: np.ndarray
    s_r: np.ndarray
    beta: float
    lambda_s: float
    power: float
    mismatch: float
    unit_signal: np.ndarray  # unit-norm solution before scaling and phase alignment
    trace: list = field(default_factory=list)


def ideal_beampattern(target_angles, mainlobe_width: float, grid: AngleGrid) -> np.ndarray:
    """Unit plateaus of the given width (radians) around each target azimuth.

    Each plateau sits on the elevation row closest to the target's
    elevation; everything else is zero.
    """
    P_d = np.zeros(grid.shape)
    tol = 1e-9
    for phi_t, psi_t in np.atleast_2d(np.asarray(target_angles, dtype=float)).reshape(-1, 2):
        row = int(np.argmin(np.abs(grid.elevations - psi_t)))
        inside = np.abs(grid.azimuths - phi_t) <= mainlobe_width / 2 + tol
        P_d[inside, row] = 1.0
    return P_d


def beampattern(R_s, positions, grid: AngleGrid, wavelength: float, steering=None) -> np.ndarray:
    """a^H(phi, psi) R_s a(phi, psi) on every grid direction."""
    R_s = np.asarray(R_s, dtype=complex)
    scale = max(np.abs(R_s).max(), 1e-300)
    if np.abs(R_s - R_s.conj().T).max() > 1e-10 * scale:
        raise ValueError("R_s is not Hermitian")
    a = grid.steering(positions, wavelength) if steering is None else steering
    P = np.real(np.einsum("nd,nm,md->d", a.conj(), R_s, a))
    return P.reshape(grid.shape)


def signal_beampattern(v, positions, grid: AngleGrid, wavelength: float, steering=None) -> np.ndarray:
    """Beampattern of the rank-one covariance v v^H, i.e. |a^H v|^2."""
    a = grid.steering(positions, wavelength) if steering is None else steering
    return (np.abs(a.conj().T @ np.asarray(v, dtype=complex)) ** 2).reshape(grid.shape)


def mismatch(beta: float, P_d, P_s) -> float:
    return float(np.sum((beta * np.asarray(P_d) - np.asarray(P_s)) ** 2))


def optimal_beta(P_d, P_s) -> float:
    """Least-squares scale of the ideal pattern, clamped to stay positive."""
    P_d = np.asarray(P_d, dtype=float)
    den = float(np.sum(P_d * P_d))
    if den <= 0:
        raise ValueError("ideal beampattern is identically zero")
    return max(float(np.sum(P_d * np.asarray(P_s))) / den, BETA_MIN)


def _mismatch_objective(steer: np.ndarray, P_d: np.ndarray):
    pd = P_d.ravel()
    pd_sq = float(pd @ pd)

    def fun(s):
        y = steer.conj().T @ s
        P = y.real**2 + y.imag**2
        beta = max(float(pd @ P) / pd_sq, BETA_MIN)
        e = P - beta * pd
        return float(e @ e), 4.0 * (steer @ (e * y))

    return fun


def design_reference_signal(
    G,
    x,
    P_d,
    grid: AngleGrid,
    positions,
    wavelength: float,
    *,
    restarts: int = 4,
    rng: np.random.Generator | None = None,
    init=None,
    align_to=None,
    target_angles=None,
    steering=None,
    max_iter: int = 500,
    ftol: float = 1e-9,
) -> SensingReference:
    """Sensing-only rank-one reflected signal with power ||G x||^2.

    The covariance s s^H is searched on the sphere ||s||^2 = ||G x||^2 (which
    absorbs the trace and rank-one constraints) with beta refitted in closed
    form at every evaluation. The pattern is scale-homogeneous, so the search
    runs at unit radius and is rescaled. The desired signal is then read off
    the dominant eigenpair of the covariance; when ``align_to`` is given its
    free global phase is chosen to best match that signal.
    """
    Gx = np.asarray(G) @ np.asarray(x)
    power = float(np.vdot(Gx, Gx).real)
    if not power > 0:
        raise ValueError("zero illumination power at the fRIS")
    P_d = np.asarray(P_d, dtype=float)
    steer = grid.steering(positions, wavelength) if steering is None else steering
    n = steer.shape[0]
    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=complex))
    elif target_angles is not None and len(target_angles):
        ta = np.atleast_2d(np.asarray(target_angles, dtype=float))
        starts.append(steering_matrix(positions, ta[:, 0], ta[:, 1], wavelength).sum(axis=1))
    if not starts or np.linalg.norm(starts[0]) == 0:
        starts = [np.ones(n, dtype=complex)]
    rng = rng if rng is not None else np.random.default_rng(0)
    sol = sphere_constrained_min(
        _mismatch_objective(steer, P_d), 1.0, starts, restarts=restarts, rng=rng, max_iter=max_iter, ftol=ftol
    )
    unit = sol.x
    s = np.sqrt(power) * unit
    R_tilde = np.outer(s, s.conj())
    lam, u, _ = dominant_eigpair(R_tilde)
    s_r = np.sqrt(lam) * u
    if align_to is not None:
        c = np.vdot(s_r, np.asarray(align_to))
        if abs(c) > 0:
            s_r = s_r * (c / abs(c))
    P_s = (np.abs(steer.conj().T @ s_r) ** 2).reshape(grid.shape)
    beta = optimal_beta(P_d, P_s)
    return SensingReference(
        R_tilde, s_r, beta, lam, power, mismatch(beta, P_d, P_s), unit,
        [v * power**2 for v in sol.trace],
    )


def sensing_mse(s_r, theta, G, x) -> float:
    """||s_r - Theta^H G x||^2."""
    v = np.conj(theta) * (np.asarray(G) @ np.asarray(x))
    r = np.asarray(s_r) - v
    return float(np.vdot(r, r).real)
