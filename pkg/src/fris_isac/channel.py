"""Steering vectors, path gains and the line-of-sight channels of the fRIS link."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class LinkGeometry:
    """Far-field angles and path gains; independent of element positions.

    Angles are in radians. ``phi_r``/``psi_r`` is the BS direction seen from
    the fRIS, ``phi_t`` the fRIS direction seen from the BS array and
    ``phi_c``/``psi_c`` the user directions seen from the fRIS.
    """

    phi_r: float
    psi_r: float
    phi_t: float
    phi_c: np.ndarray
    psi_c: np.ndarray
    zeta_G: float
    zeta_users: np.ndarray


@dataclass(frozen=True)
class ChannelSet:
    G: np.ndarray  # N x M
    H_rc: np.ndarray  # N x K
    A_rc: np.ndarray  # N x K
    Sigma_rc: np.ndarray  # K, sqrt path gains
    zeta_G: float
    a_r: np.ndarray
    a_t: np.ndarray
    geometry: LinkGeometry


def path_difference(p, phi, psi):
    """Path difference of a plane wave from (phi, psi) at planar position ``p``.

    ``p`` has trailing dimension 2; ``phi``/``psi`` broadcast against the
    leading dimensions.
    """
    p = np.asarray(p, dtype=float)
    return p[..., 0] * np.sin(phi) * np.cos(psi) + p[..., 1] * np.sin(psi)


def direction_cosines(phi, psi) -> np.ndarray:
    """The pair (sin phi cos psi, sin psi) that multiplies (p_x, p_y)."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return np.stack([np.sin(phi) * np.cos(psi), np.sin(psi)], axis=-1)


def fris_steering(positions, phi, psi, wavelength: float) -> np.ndarray:
    """Steering vector of the movable-element surface, one entry per element."""
    d = path_difference(positions, phi, psi)
    return np.exp(1j * (2 * np.pi / wavelength) * d)


def steering_matrix(positions, phis, psis, wavelength: float) -> np.ndarray:
    """Steering vectors for many directions at once, shape (N, D)."""
    kappa = direction_cosines(np.ravel(phis), np.ravel(psis))  # D x 2
    return np.exp(1j * (2 * np.pi / wavelength) * (np.asarray(positions, dtype=float) @ kappa.T))


def ula_steering(phi_t: float, M: int) -> np.ndarray:
    """Half-wavelength ULA steering vector."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return np.exp(1j * np.pi * np.arange(M) * np.sin(phi_t))


def path_gain(dist: float, eta: float) -> float:
    if dist <= 0:
        raise ValueError(f"distance must be positive, got {dist}")
    return eta / dist**2


def direction_angles(src, dst) -> tuple[float, float]:
    """Azimuth/elevation of ``dst`` seen from ``src``.

    Azimuth is measured in the horizontal x-y plane from the +y boresight
    towards +x; elevation is the angle of the z offset above that plane.
    """
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = float(np.linalg.norm(delta))
    if dist == 0:
        raise ValueError("coincident node positions")
    phi = float(np.arctan2(delta[0], delta[1]))
    psi = float(np.arcsin(np.clip(delta[2] / dist, -1.0, 1.0)))
    return phi, psi


def draw_users(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """User positions: fixed ones from the config, else uniform in a disc."""
    if config.user_pos is not None:
        return np.asarray(config.user_pos, dtype=float)
    r = config.user_radius * np.sqrt(rng.random(config.K))
    ang = rng.uniform(0, 2 * np.pi, config.K)
    center = np.asarray(config.user_center, dtype=float)
    users = np.tile(center, (config.K, 1))
    users[:, 0] += r * np.cos(ang)
    users[:, 1] += r * np.sin(ang)
    return users


def link_geometry(config: SystemConfig, users) -> LinkGeometry:
    users = np.atleast_2d(np.asarray(users, dtype=float))
    bs = np.asarray(config.bs_pos, dtype=float)
    ris = np.asarray(config.fris_pos, dtype=float)
    phi_r, psi_r = direction_angles(ris, bs)
    phi_t, _ = direction_angles(bs, ris)
    ang = [direction_angles(ris, u) for u in users]
    phi_c = np.array([a[0] for a in ang])
    psi_c = np.array([a[1] for a in ang])
    zeta_G = path_gain(float(np.linalg.norm(ris - bs)), config.eta)
    zeta_users = np.array([path_gain(float(np.linalg.norm(u - ris)), config.eta) for u in users])
    return LinkGeometry(phi_r, psi_r, phi_t, phi_c, psi_c, zeta_G, zeta_users)


def build_channels(config: SystemConfig, positions, geometry: LinkGeometry) -> ChannelSet:
    """BS-to-fRIS matrix G (rank one) and fRIS-to-user matrix H_rc."""
    positions = np.asarray(positions, dtype=float)
    lam = config.wavelength
    a_r = fris_steering(positions, geometry.phi_r, geometry.psi_r, lam)
    a_t = ula_steering(geometry.phi_t, config.M)
    G = np.sqrt(geometry.zeta_G) * np.outer(a_r, a_t.conj())
    A_rc = steering_matrix(positions, geometry.phi_c, geometry.psi_c, lam)
    sigma = np.sqrt(geometry.zeta_users)
    H_rc = A_rc * sigma[None, :]
    return ChannelSet(G, H_rc, A_rc, sigma, geometry.zeta_G, a_r, a_t, geometry)
