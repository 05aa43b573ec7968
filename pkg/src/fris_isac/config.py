"""Scenario constants and unit handling."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_WAVELENGTH = 0.125
PACKING_DENSITY = math.pi / (2.0 * math.sqrt(3.0))


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def watts_to_dbm(value_w: float) -> float:
    return 10.0 * math.log10(value_w) + 30.0


_UNIT_RE = re.compile(r"^\s*([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*(dBm|dBW|dB|W|mW)?\s*$")


def parse_power(key: str, value: Any, *, ratio: bool = False) -> float:
    """Convert a power-like config entry to linear units.

    Plain numbers are taken as already linear (watts, or a dimensionless
    ratio when ``ratio`` is set). Strings may carry a unit suffix:
    ``"10dBm"``, ``"-30dBW"``, ``"-10dB"``, ``"5mW"`` or ``"0.01W"``.
    """
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number or a string with units, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _UNIT_RE.match(value)
        if m is None:
            raise ConfigError(key, f"cannot parse {value!r} as a power value")
        number, unit = float(m.group(1)), m.group(2)
        if unit is None:
            out = number
        elif ratio and unit != "dB":
            raise ConfigError(key, f"expected a ratio ('dB' or plain number), got {value!r}")
        elif unit == "dB":
            out = db_to_linear(number)
        elif unit == "dBm":
            out = dbm_to_watts(number)
        elif unit == "dBW":
            out = db_to_linear(number)
        elif unit == "mW":
            out = number * 1e-3
        else:
            out = number
    else:
        raise ConfigError(key, f"expected a number or a string with units, got {type(value).__name__}")
    if not math.isfinite(out) or out <= 0.0:
        raise ConfigError(key, f"must be strictly positive and finite, got {value!r}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants, in SI units (meters, watts, radians inside).

    Angles are stored in degrees here and converted by the grid and geometry
    helpers. Defaults reproduce the simulation setup: 2.4 GHz carrier, an
    8-antenna BS at (3, 0, 0), a 16-element fRIS at (0, 3, 3) moving inside a
    4-wavelength square, four users around (30, 100, 0) and three targets.
    """

    M: int = 8
    N: int = 16
    K: int = 4
    wavelength: float = DEFAULT_WAVELENGTH
    P_t: float = 0.01
    sigma0_sq: float = 1e-9
    alpha: float = 0.5
    A: float = 4 * DEFAULT_WAVELENGTH
    DeltaD: float = DEFAULT_WAVELENGTH / 2
    eta: float = 0.1
    bs_pos: tuple[float, float, float] = (3.0, 0.0, 0.0)
    fris_pos: tuple[float, float, float] = (0.0, 3.0, 3.0)
    user_center: tuple[float, float, float] = (30.0, 100.0, 0.0)
    user_radius: float = 10.0
    user_pos: tuple[tuple[float, float, float], ...] | None = None
    target_angles_deg: tuple[tuple[float, float], ...] = ((-60.0, 0.0), (10.0, 0.0), (55.0, 0.0))
    mainlobe_width_deg: float = 10.0
    azimuth_range_deg: tuple[float, float] = (-90.0, 90.0)
    I_a: int = 181
    elevation_range_deg: tuple[float, float] = (-90.0, 90.0)
    I_e: int = 19
    am_tol: float = 1e-5
    am_max_iter: int = 200
    alm_tol_rel: float = 1e-5
    alm_gamma0: float = 1.0
    sensing_restarts: int = 4
    dps_spacing: float = DEFAULT_WAVELENGTH / 4
    random_order: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def T(self) -> int:
        return len(self.target_angles_deg)

    @property
    def alm_tol(self) -> float:
        return self.alm_tol_rel * self.P_t

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def validate(self) -> None:
        for key in ("M", "N", "K", "I_a", "I_e", "am_max_iter"):
            v = getattr(self, key)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(key, f"must be an integer >= 1, got {v!r}")
        if self.sensing_restarts < 0:
            raise ConfigError("sensing_restarts", "must be >= 0")
        for key in ("wavelength", "P_t", "sigma0_sq", "A", "DeltaD", "eta", "user_radius",
                    "am_tol", "alm_tol_rel", "alm_gamma0", "dps_spacing"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                raise ConfigError(key, f"must be strictly positive, got {v!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"must lie in [0, 1], got {self.alpha!r}")
        if self.mainlobe_width_deg < 0:
            raise ConfigError("mainlobe_width_deg", "must be >= 0")
        if self.DeltaD > self.A:
            raise ConfigError("DeltaD", f"minimum spacing {self.DeltaD} exceeds region side {self.A}")
        if self.dps_spacing > self.A:
            raise ConfigError("dps_spacing", "grid spacing must lie in (0, A]")
        # Discs of radius DeltaD/2 around every element must fit the region.
        if self.N * math.pi * (self.DeltaD / 2) ** 2 > PACKING_DENSITY * (self.A + self.DeltaD) ** 2:
            raise ConfigError("N", f"{self.N} elements cannot be packed at spacing {self.DeltaD} in A={self.A}")
        if self.user_pos is not None and len(self.user_pos) != self.K:
            raise ConfigError("user_pos", f"expected {self.K} user positions, got {len(self.user_pos)}")
        for key in ("azimuth_range_deg", "elevation_range_deg"):
            lo, hi = getattr(self, key)
            if lo > hi:
                raise ConfigError(key, "range must be increasing")
        for phi, psi in self.target_angles_deg:
            if not (self.azimuth_range_deg[0] <= phi <= self.azimuth_range_deg[1]):
                raise ConfigError("target_angles_deg", f"target azimuth {phi} outside grid range")
            if not (self.elevation_range_deg[0] <= psi <= self.elevation_range_deg[1]):
                raise ConfigError("target_angles_deg", f"target elevation {psi} outside grid range")
        for key in ("bs_pos", "fris_pos", "user_center"):
            if len(getattr(self, key)) != 3:
                raise ConfigError(key, "expected a 3-D coordinate")

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def with_region(self, a_over_lambda: float) -> "SystemConfig":
        """Same scenario with the movable region resized to ``a_over_lambda`` wavelengths."""
        return replace(self, A=a_over_lambda * self.wavelength)

    def to_dict(self) -> dict:
        return asdict(self)
