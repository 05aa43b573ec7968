import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fris_isac.channel import (
    build_channels,
    direction_angles,
    fris_steering,
    link_geometry,
    path_difference,
    path_gain,
    steering_matrix,
    ula_steering,
)
from fris_isac.position_opt import circle_packing_init

LAM = 0.125
angles = st.floats(-math.pi / 2, math.pi / 2)
coords = st.floats(0, 4 * LAM)


def test_path_difference_examples():
    assert path_difference((0, 0), 0.3, 0.7) == 0
    assert path_difference((LAM, 0), np.pi / 2, 0) == pytest.approx(0.125, abs=1e-15)
    phi, psi = np.deg2rad(30), np.deg2rad(45)
    # independent evaluation with math in long form
    expect = 0.1 * math.sin(math.radians(30)) * math.cos(math.radians(45)) + 0.2 * math.sin(math.radians(45))
    assert path_difference((0.1, 0.2), phi, psi) == pytest.approx(expect, rel=1e-14)


def test_fris_steering_zero_positions_is_ones():
    a = fris_steering(np.zeros((5, 2)), 0.4, -0.2, LAM)
    np.testing.assert_allclose(a, np.ones(5), atol=1e-15)


def test_fris_steering_matches_planar_array_formula():
    # half-wavelength planar lattice, psi = 0: classical UPA phase 2 pi / lambda * x * sin(phi)
    nx, ny = 4, 3
    xs, ys = np.meshgrid(np.arange(nx) * LAM / 2, np.arange(ny) * LAM / 2, indexing="ij")
    P = np.stack([xs.ravel(), ys.ravel()], axis=1)
    phi = np.deg2rad(23.0)
    a = fris_steering(P, phi, 0.0, LAM)
    ref = np.array([np.exp(1j * np.pi * ix * np.sin(phi)) for ix in range(nx) for _ in range(ny)])
    np.testing.assert_allclose(a, ref, atol=1e-12)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=20), angles, angles)
def test_steering_unit_modulus(pts, phi, psi):
    a = fris_steering(np.array(pts), phi, psi, LAM)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert abs(np.vdot(a, a).real - len(pts)) < 1e-10


@given(st.tuples(coords, coords), angles, angles, st.integers(-3, 3))
def test_steering_periodic_along_direction(p, phi, psi, m):
    u = np.array([np.sin(phi) * np.cos(psi), np.sin(psi)])
    nu = np.linalg.norm(u)
    if nu < 1e-3:
        return
    # shifting by m wavelengths of path difference leaves the entry unchanged
    shift = m * LAM * u / nu**2
    a0 = fris_steering(np.array([p]), phi, psi, LAM)
    a1 = fris_steering(np.array([p]) + shift, phi, psi, LAM)
    np.testing.assert_allclose(a0, a1, atol=1e-9)


def test_steering_matrix_columns_match_single_vectors(rng):
    P = rng.uniform(0, 0.5, (7, 2))
    phis, psis = rng.uniform(-1, 1, 4), rng.uniform(-0.3, 0.3, 4)
    S = steering_matrix(P, phis, psis, LAM)
    for d in range(4):
        np.testing.assert_allclose(S[:, d], fris_steering(P, phis[d], psis[d], LAM), atol=1e-14)


def test_ula_steering():
    np.testing.assert_allclose(ula_steering(0.0, 6), np.ones(6))
    np.testing.assert_allclose(ula_steering(np.pi / 2, 2), [1, -1], atol=1e-15)
    phi = np.deg2rad(17)
    ref = [complex(math.cos(math.pi * m * math.sin(phi)), math.sin(math.pi * m * math.sin(phi))) for m in range(8)]
    np.testing.assert_allclose(ula_steering(phi, 8), ref, atol=1e-14)
    with pytest.raises(ValueError):
        ula_steering(0.1, 0)


def test_path_gain():
    assert path_gain(1.0, 0.1) == pytest.approx(0.1)
    assert path_gain(10.0, 0.1) == pytest.approx(1e-3)
    d = math.dist((3, 0, 0), (0, 3, 3))
    assert d == pytest.approx(math.sqrt(27))
    assert path_gain(d, 0.1) == pytest.approx(0.1 / 27, rel=1e-14)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            path_gain(bad, 0.1)


def test_angle_extraction_matches_spherical_oracle(cfg):
    users = np.array([[30.0, 100.0, 0.0], [25.0, 92.0, 0.0]])
    geo = link_geometry(cfg, users)
    ris = np.array(cfg.fris_pos)
    for k, u in enumerate(users):
        d = u - ris
        r = np.linalg.norm(d)
        # elevation = asin(dz / r); azimuth = atan(dx / dy) from the +y boresight
        assert geo.psi_c[k] == pytest.approx(math.asin(d[2] / r), abs=1e-14)
        assert geo.phi_c[k] == pytest.approx(math.atan2(d[0], d[1]), abs=1e-14)
    bs = np.array(cfg.bs_pos)
    assert geo.phi_r == pytest.approx(math.atan2(3, -3))
    assert geo.psi_r == pytest.approx(math.asin(-3 / math.sqrt(27)))
    assert geo.zeta_G == pytest.approx(0.1 / 27)
    assert geo.zeta_users[0] == pytest.approx(0.1 / np.sum((users[0] - ris) ** 2))
    with pytest.raises(ValueError):
        direction_angles(bs, bs)


def test_channel_invariants(cfg, rng):
    P = circle_packing_init(cfg.N, cfg.A, cfg.DeltaD) + rng.uniform(-0.01, 0.01, (cfg.N, 2))
    geo = link_geometry(cfg, np.array([[30, 100, 0], [35, 95, 0], [28, 104, 0], [31, 99, 0]], dtype=float))
    ch = build_channels(cfg, P, geo)
    s = np.linalg.svd(ch.G, compute_uv=False)
    assert s[1] < 1e-9 * s[0]
    np.testing.assert_allclose(np.abs(ch.G), math.sqrt(ch.zeta_G), rtol=1e-12)
    np.testing.assert_array_equal(ch.H_rc, ch.A_rc * ch.Sigma_rc[None, :])
    np.testing.assert_allclose(np.sum(np.abs(ch.H_rc) ** 2, axis=0), cfg.N * geo.zeta_users, rtol=1e-12)


def test_channels_at_origin_have_identical_rows(cfg):
    geo = link_geometry(cfg, np.array([[30, 100, 0]] * 4, dtype=float))
    ch = build_channels(cfg, np.zeros((cfg.N, 2)), geo)
    np.testing.assert_allclose(ch.G, np.tile(ch.G[0], (cfg.N, 1)), atol=1e-15)
    np.testing.assert_allclose(ch.G[0], math.sqrt(ch.zeta_G) * ch.a_t.conj(), atol=1e-15)
