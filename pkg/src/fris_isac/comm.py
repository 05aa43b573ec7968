"""Symbols, received signals, the estimation MSE and bit error rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QPSK = "qpsk"
QAM16 = "16qam"


def _gray_pam(bits_per_axis: int) -> np.ndarray:
    """Gray-coded PAM amplitudes indexed by the integer value of the bits."""
    n = 2**bits_per_axis
    levels = np.arange(-(n - 1), n, 2, dtype=float)
    gray = np.arange(n) ^ (np.arange(n) >> 1)
    out = np.empty(n)
    out[gray] = levels
    return out


@dataclass(frozen=True)
class Constellation:
    name: str
    bits_per_symbol: int
    points: np.ndarray  # indexed by the integer formed from the symbol's bits (MSB first)

    def modulate(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=int)
        idx = bits.reshape(*bits.shape[:-1], -1, self.bits_per_symbol) @ (
            1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        )
        return self.points[idx]

    def demodulate(self, symbols) -> np.ndarray:
        """Minimum-distance decision, returned as bits (last axis)."""
        symbols = np.asarray(symbols)
        idx = np.argmin(np.abs(symbols[..., None] - self.points) ** 2, axis=-1)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        bits = (idx[..., None] >> shifts) & 1
        return bits.reshape(*symbols.shape[:-1], -1)


def constellation(name: str) -> Constellation:
    name = name.lower()
    if name == QPSK:
        pam = _gray_pam(1)
        pts = (pam[:, None] + 1j * pam[None, :]).ravel() / np.sqrt(2)
        return Constellation(QPSK, 2, pts)
    if name in (QAM16, "qam16"):
        pam = _gray_pam(2)
        pts = (pam[:, None] + 1j * pam[None, :]).ravel() / np.sqrt(10)
        return Constellation(QAM16, 4, pts)
    raise ValueError(f"unknown constellation {name!r}")


@dataclass
class SymbolBlock:
    s_c: np.ndarray
    constellation: str
    bits: np.ndarray


def generate_symbols(K: int, name: str, rng: np.random.Generator, draws: int | None = None) -> SymbolBlock:
    """I.i.d. uniform unit-energy symbols for K users (optionally ``draws`` blocks)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    const = constellation(name)
    shape = (K,) if draws is None else (draws, K)
    bits = rng.integers(0, 2, size=(*shape[:-1], K * const.bits_per_symbol))
    return SymbolBlock(const.modulate(bits), const.name, bits)


def cascade(H_rc, theta, G, x) -> np.ndarray:
    """Noiseless received samples H_rc^H Theta^H G x (one per user)."""
    return np.asarray(H_rc).conj().T @ (np.conj(theta) * (np.asarray(G) @ np.asarray(x)))


def complex_noise(shape, sigma0_sq: float, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(sigma0_sq / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_rx(H_rc, theta, G, x, sigma0_sq: float, omega: float, rng: np.random.Generator, draws: int | None = None):
    """Scaled received symbols omega * (h_k^H Theta^H G x + n_k)."""
    y = cascade(H_rc, theta, G, x)
    shape = y.shape if draws is None else (draws, *y.shape)
    return omega * (y + complex_noise(shape, sigma0_sq, rng))


def comm_mse(s_c, omega: float, H_rc, theta, G, x, K: int, sigma0_sq: float) -> float:
    """||s_c - omega H_rc^H Theta^H G x||^2 + K omega^2 sigma0^2."""
    r = np.asarray(s_c) - omega * cascade(H_rc, theta, G, x)
    return float(np.vdot(r, r).real + K * omega**2 * sigma0_sq)


def optimal_estimator(s_c, H_rc, theta, G, x, K: int, sigma0_sq: float) -> float:
    """Closed-form minimizer of :func:`comm_mse` over real omega."""
    y = cascade(H_rc, theta, G, x)
    num = float(np.real(np.vdot(s_c, y)))
    den = float(np.vdot(y, y).real + K * sigma0_sq)
    if den == 0:
        raise ZeroDivisionError("zero cascade with zero noise power")
    return num / den


def count_bit_errors(name: str, s_hat, bits) -> int:
    return int(np.sum(constellation(name).demodulate(s_hat) != np.asarray(bits)))
