import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfc

from fris_isac.comm import (
    QAM16,
    QPSK,
    cascade,
    comm_mse,
    constellation,
    count_bit_errors,
    generate_symbols,
    optimal_estimator,
    simulate_rx,
)
from conftest import crandn, unit_phases


def qfunc(x):
    return 0.5 * erfc(x / np.sqrt(2))


@pytest.mark.parametrize("name,size,bits", [(QPSK, 4, 2), (QAM16, 16, 4)])
def test_constellation_unit_energy_and_gray(name, size, bits):
    c = constellation(name)
    assert c.points.size == size and c.bits_per_symbol == bits
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert abs(np.mean(c.points)) < 1e-12
    # Gray mapping: nearest neighbours differ in one bit
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = d[d > 0].min()
    for i in range(size):
        for j in np.flatnonzero(np.isclose(d[i], dmin)):
            assert bin(i ^ j).count("1") == 1


def test_constellation_unknown_name():
    with pytest.raises(ValueError):
        constellation("8psk")


@given(st.sampled_from([QPSK, QAM16]), st.integers(0, 2**31))
def test_modulate_demodulate_round_trip(name, seed):
    r = np.random.default_rng(seed)
    blk = generate_symbols(5, name, r, draws=7)
    assert blk.s_c.shape == (7, 5)
    c = constellation(name)
    np.testing.assert_array_equal(c.demodulate(blk.s_c), blk.bits)
    assert count_bit_errors(name, blk.s_c, blk.bits) == 0


def test_symbol_covariance_is_identity():
    blk = generate_symbols(4, QAM16, np.random.default_rng(0), draws=200_000)
    C = blk.s_c.T @ blk.s_c.conj() / 200_000
    np.testing.assert_allclose(C, np.eye(4), atol=0.01)


def test_generate_symbols_rejects_zero_users():
    with pytest.raises(ValueError):
        generate_symbols(0, QPSK, np.random.default_rng(0))


def _link(rng, N=6, M=4, K=3):
    return crandn(rng, N, K), unit_phases(rng, N), crandn(rng, N, M), crandn(rng, M)


def test_noise_variance_and_mse_monte_carlo(rng):
    H, th, G, x = _link(rng)
    s_c = generate_symbols(3, QPSK, rng).s_c
    sigma2, omega = 0.7, 0.3
    y = simulate_rx(H, th, G, x, sigma2, omega, rng, draws=200_000)
    n = y / omega - cascade(H, th, G, x)
    assert np.var(n.real) == pytest.approx(sigma2 / 2, rel=0.02)
    assert np.var(n.imag) == pytest.approx(sigma2 / 2, rel=0.02)
    mc = np.mean(np.sum(np.abs(s_c - y) ** 2, axis=1))
    assert mc == pytest.approx(comm_mse(s_c, omega, H, th, G, x, 3, sigma2), rel=0.01)


@given(st.integers(0, 2**31))
def test_optimal_estimator_is_the_minimizer(seed):
    r = np.random.default_rng(seed)
    H, th, G, x = _link(r)
    s_c = generate_symbols(3, QAM16, r).s_c
    w = optimal_estimator(s_c, H, th, G, x, 3, 0.5)
    f = comm_mse(s_c, w, H, th, G, x, 3, 0.5)
    for d in (-1e-4, 1e-4):
        assert comm_mse(s_c, w + d, H, th, G, x, 3, 0.5) >= f
    assert comm_mse(s_c, 0.0, H, th, G, x, 3, 0.5) == pytest.approx(np.linalg.norm(s_c) ** 2)


def test_optimal_estimator_degenerate():
    with pytest.raises(ZeroDivisionError):
        optimal_estimator(np.ones(2), np.zeros((3, 2)), np.ones(3), np.zeros((3, 2)), np.zeros(2), 2, 0.0)


@pytest.mark.parametrize("snr_db", [0.0, 4.0, 8.0])
def test_qpsk_awgn_ber_matches_q_function(snr_db):
    r = np.random.default_rng(7)
    blk = generate_symbols(1, QPSK, r, draws=200_000)
    es_n0 = 10 ** (snr_db / 10)
    sigma2 = 1 / es_n0
    noisy = blk.s_c + np.sqrt(sigma2 / 2) * (r.standard_normal(blk.s_c.shape) + 1j * r.standard_normal(blk.s_c.shape))
    ber = count_bit_errors(QPSK, noisy, blk.bits) / blk.bits.size
    assert ber == pytest.approx(qfunc(np.sqrt(es_n0)), rel=0.05)


def test_zero_estimator_gives_coin_flip_ber(rng):
    H, th, G, x = _link(rng, K=2)
    blk = generate_symbols(2, QPSK, rng, draws=50_000)
    y = simulate_rx(H, th, G, x, 1.0, 0.0, rng, draws=50_000)
    # an all-zero decision statistic maps to one fixed symbol, so half the bits are wrong
    ber = count_bit_errors(QPSK, y, blk.bits) / blk.bits.size
    assert ber == pytest.approx(0.5, abs=0.01)
