"""Config files, experiment specs and CSV/manifest emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .comm import QAM16, QPSK
from .config import SPEED_OF_LIGHT, ConfigError, SystemConfig, parse_power, watts_to_dbm
from .numerics import SolverError
from .orchestrator import Scheme, ber_experiment, monte_carlo, run_am
from .sensing import signal_beampattern

KINDS = ("convergence", "n-sweep", "beampattern", "ber", "region-sweep", "table1")

HEADERS = {
    "convergence": ("iteration", "epsilon", "epsilon_r", "epsilon_c", "scheme"),
    "n-sweep": ("N", "scheme", "mean_eps", "std_eps", "mean_time_s"),
    "beampattern": ("azimuth_deg", "gain_db", "variant"),
    "ber": ("noise_dbm", "modulation", "alpha", "mean_ber"),
    "region-sweep": ("A_over_lambda", "scheme", "mean_eps"),
    "table1": ("scheme", "N", "mean_eps", "time_s"),
}

DEFAULT_SWEEPS = {
    "n-sweep": (16, 25, 36, 49, 64),
    "region-sweep": (2.0, 3.0, 4.0, 5.0, 6.0),
    "beampattern": (0.1, 0.5, 0.9),
    "ber": (0.1, 0.5, 0.9),
}

TABLE1_ROWS = (("proposed", 25), ("conven", 64), ("conven", 49))
BEAM_FLOOR_DB = -100.0


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str = "convergence"
    schemes: tuple = ("proposed", "conven", "dps", "rand")
    sweep: tuple = ()
    trials: int = 1
    seed: int = 0
    out: str = "results"
    modulations: tuple = (QPSK, QAM16)
    noise_dbm: tuple = (-40.0, -50.0, -60.0, -70.0, -80.0)
    ber_blocks: int = 50
    ber_draws: int = 20
    table_rows: tuple = TABLE1_ROWS

    def sweep_values(self) -> tuple:
        return self.sweep if self.sweep else DEFAULT_SWEEPS.get(self.kind, ())

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError("experiment.kind", f"expected one of {list(KINDS)}, got {self.kind!r}")
        if not self.schemes:
            raise ConfigError("experiment.schemes", "must not be empty")
        for s in self.schemes:
            try:
                Scheme.parse(s)
            except ValueError as err:
                raise ConfigError("experiment.schemes", str(err)) from None
        if self.trials < 1:
            raise ConfigError("experiment.trials", "must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("experiment.seed", "must be an unsigned 64-bit integer")
        sw = list(self.sweep)
        if sw and sw != sorted(sw):
            raise ConfigError("experiment.sweep", "values must be sorted ascending")
        if self.kind == "n-sweep" and any(int(v) != v or v < 1 for v in sw):
            raise ConfigError("experiment.sweep", "element counts must be positive integers")
        if self.kind in ("beampattern", "ber") and any(not 0 <= v <= 1 for v in sw):
            raise ConfigError("experiment.sweep", "alpha values must lie in [0, 1]")
        if self.kind == "region-sweep" and any(v <= 0 for v in sw):
            raise ConfigError("experiment.sweep", "region sizes must be positive")
        for m in self.modulations:
            if m not in (QPSK, QAM16):
                raise ConfigError("experiment.modulations", f"unknown modulation {m!r}")
        if not self.noise_dbm:
            raise ConfigError("experiment.noise_dbm", "must not be empty")
        if self.ber_blocks < 1 or self.ber_draws < 1:
            raise ConfigError("experiment.ber_blocks", "block and draw counts must be >= 1")


# ---------------------------------------------------------------------------
# parsing

_SYSTEM_INTS = {"M", "N", "K", "I_a", "I_e", "am_max_iter", "sensing_restarts", "seed"}
_SYSTEM_FLOATS = {"alpha", "A", "DeltaD", "user_radius", "mainlobe_width_deg", "am_tol", "alm_tol_rel",
                  "alm_gamma0", "dps_spacing", "wavelength"}
_SYSTEM_POWERS = {"P_t": False, "sigma0_sq": False, "eta": True}
_SYSTEM_VECTORS = {"bs_pos": 3, "fris_pos": 3, "user_center": 3, "azimuth_range_deg": 2, "elevation_range_deg": 2}
_SYSTEM_EXTRA = {"frequency_hz", "A_over_lambda", "DeltaD_over_lambda"}
_EXPERIMENT_KEYS = {f.name for f in fields(ExperimentPlan)}


def _as_int(key, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    return v


def _as_float(key, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return float(v)


def _as_vector(key, v, n) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(key, f"expected a list of {n} numbers, got {v!r}")
    return tuple(_as_float(key, e) for e in v)


def _as_bool(key, v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true/false, got {v!r}")
    return v


def system_from_dict(data: dict) -> SystemConfig:
    """Strictly typed SystemConfig from a JSON object (unknown keys rejected)."""
    if not isinstance(data, dict):
        raise ConfigError("system", "expected an object")
    allowed = _SYSTEM_INTS | _SYSTEM_FLOATS | set(_SYSTEM_POWERS) | set(_SYSTEM_VECTORS) | _SYSTEM_EXTRA | {
        "target_angles_deg", "user_pos", "random_order"}
    for key in data:
        if key not in allowed:
            raise ConfigError(key, "unknown configuration key")
    kw: dict = {}
    lam = SystemConfig.wavelength
    if "frequency_hz" in data and "wavelength" in data:
        raise ConfigError("frequency_hz", "give either frequency_hz or wavelength, not both")
    if "frequency_hz" in data:
        f = _as_float("frequency_hz", data["frequency_hz"])
        if f <= 0:
            raise ConfigError("frequency_hz", "must be positive")
        lam = SPEED_OF_LIGHT / f
    if "wavelength" in data:
        lam = _as_float("wavelength", data["wavelength"])
        if lam <= 0:
            raise ConfigError("wavelength", "must be positive")
    kw["wavelength"] = lam
    kw["A"] = 4 * lam
    kw["DeltaD"] = lam / 2
    kw["dps_spacing"] = lam / 4
    for key, value in data.items():
        if key in ("frequency_hz", "wavelength"):
            continue
        if key in _SYSTEM_INTS:
            kw[key] = _as_int(key, value)
        elif key in _SYSTEM_FLOATS:
            kw[key] = _as_float(key, value)
        elif key in _SYSTEM_POWERS:
            kw[key] = parse_power(key, value, ratio=_SYSTEM_POWERS[key])
        elif key in _SYSTEM_VECTORS:
            kw[key] = _as_vector(key, value, _SYSTEM_VECTORS[key])
        elif key == "A_over_lambda":
            kw["A"] = _as_float(key, value) * lam
        elif key == "DeltaD_over_lambda":
            kw["DeltaD"] = _as_float(key, value) * lam
        elif key == "target_angles_deg":
            if not isinstance(value, list) or not value:
                raise ConfigError(key, "expected a non-empty list of [azimuth, elevation] pairs")
            kw[key] = tuple(_as_vector(key, t, 2) for t in value)
        elif key == "user_pos":
            if not isinstance(value, list):
                raise ConfigError(key, "expected a list of [x, y, z] coordinates")
            kw[key] = tuple(_as_vector(key, u, 3) for u in value)
        elif key == "random_order":
            kw[key] = _as_bool(key, value)
    if "A" in data and "A_over_lambda" in data:
        raise ConfigError("A_over_lambda", "give either A or A_over_lambda, not both")
    if "DeltaD" in data and "DeltaD_over_lambda" in data:
        raise ConfigError("DeltaD_over_lambda", "give either DeltaD or DeltaD_over_lambda, not both")
    return SystemConfig(**kw)


def plan_from_dict(data: dict) -> ExperimentPlan:
    if not isinstance(data, dict):
        raise ConfigError("experiment", "expected an object")
    kw: dict = {}
    for key, value in data.items():
        name = f"experiment.{key}"
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(name, "unknown experiment key")
        if key in ("trials", "seed", "ber_blocks", "ber_draws"):
            kw[key] = _as_int(name, value)
        elif key in ("kind", "out"):
            if not isinstance(value, str):
                raise ConfigError(name, "expected a string")
            kw[key] = value
        elif key in ("schemes", "modulations"):
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ConfigError(name, "expected a list of strings")
            kw[key] = tuple(v.lower() for v in value)
        elif key in ("sweep", "noise_dbm"):
            if not isinstance(value, list) or not value:
                raise ConfigError(name, "expected a non-empty list of numbers")
            kw[key] = tuple(_as_float(name, v) for v in value)
        elif key == "table_rows":
            if not isinstance(value, list) or not value:
                raise ConfigError(name, "expected a list of [scheme, N] pairs")
            rows = []
            for r in value:
                if not isinstance(r, list) or len(r) != 2 or not isinstance(r[0], str):
                    raise ConfigError(name, f"bad row {r!r}")
                rows.append((r[0].lower(), _as_int(name, r[1])))
            kw[key] = tuple(rows)
    plan = ExperimentPlan(**kw)
    plan.validate()
    return plan


def parse_config_data(data) -> tuple[SystemConfig, ExperimentPlan]:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in data:
        if key not in ("system", "experiment"):
            raise ConfigError(key, "unknown top-level key (expected 'system' and/or 'experiment')")
    return system_from_dict(data.get("system", {})), plan_from_dict(data.get("experiment", {}))


def parse_config(path) -> tuple[SystemConfig, ExperimentPlan]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError("<file>", f"cannot read {path}: {err.strerror}") from None
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as err:
        raise ConfigError("<file>", f"invalid JSON at line {err.lineno}: {err.msg}") from None
    return parse_config_data(data)


def config_hash(config: SystemConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# running


def fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


@dataclass
class ExperimentResult:
    rows: list
    failures: int = 0
    notes: dict | None = None


def _mean_traces(traces: list) -> list:
    """Per-iteration mean of (eps, eps_r, eps_c), holding each trial's last value."""
    length = max(len(t) for t in traces)
    padded = np.array([list(t) + [t[-1]] * (length - len(t)) for t in traces], dtype=float)
    return [(i, *padded[:, i, 1:].mean(axis=0)) for i in range(length)]


def run_convergence(config, plan) -> ExperimentResult:
    rows, failures = [], 0
    for s in plan.schemes:
        rep = monte_carlo(config, s, plan.trials, seed=plan.seed)
        failures += rep.failures
        traces = [t.trace for t in rep.trials if t.error is None]
        if not traces:
            continue
        for it, e, er, ec in _mean_traces(traces):
            rows.append((it, e, er, ec, Scheme.parse(s).value))
    return ExperimentResult(rows, failures)


def run_n_sweep(config, plan) -> ExperimentResult:
    rows, failures = [], 0
    for N in plan.sweep_values():
        cfg = config.replace(N=int(N))
        for s in plan.schemes:
            rep = monte_carlo(cfg, s, plan.trials, seed=plan.seed)
            failures += rep.failures
            rows.append((int(N), Scheme.parse(s).value, rep.mean("epsilon"), rep.std("epsilon"), rep.mean("elapsed")))
    return ExperimentResult(rows, failures)


def run_region_sweep(config, plan) -> ExperimentResult:
    rows, failures = [], 0
    for a in plan.sweep_values():
        cfg = config.with_region(a).replace(dps_spacing=min(config.dps_spacing, a * config.wavelength))
        for s in plan.schemes:
            rep = monte_carlo(cfg, s, plan.trials, seed=plan.seed)
            failures += rep.failures
            rows.append((a, Scheme.parse(s).value, rep.mean("epsilon")))
    return ExperimentResult(rows, failures)


def run_table1(config, plan) -> ExperimentResult:
    rows, failures = [], 0
    for s, N in plan.table_rows:
        rep = monte_carlo(config.replace(N=int(N)), s, plan.trials, seed=plan.seed)
        failures += rep.failures
        rows.append((Scheme.parse(s).value, int(N), rep.mean("epsilon"), rep.mean("elapsed")))
    return ExperimentResult(rows, failures)


def to_db(P, floor_db: float = BEAM_FLOOR_DB) -> np.ndarray:
    """10 log10(P / max P), floored so every value stays finite."""
    P = np.asarray(P, dtype=float)
    peak = P.max()
    if peak <= 0:
        return np.full(P.shape, floor_db)
    return np.maximum(10 * np.log10(np.maximum(P / peak, 10 ** (floor_db / 10))), floor_db)


def beampattern_cut(state, signal=None) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth_deg, power) on the elevation row nearest the first target."""
    cfg = state.config
    v = np.conj(state.theta) * (state.channels.G @ state.x) if signal is None else signal
    P = signal_beampattern(v, state.positions, state.grid, cfg.wavelength, steering=state.steering)
    row = int(np.argmin(np.abs(state.grid.elevations - np.deg2rad(cfg.target_angles_deg[0][1]))))
    return np.rad2deg(state.grid.azimuths), P[:, row]


def run_beampattern(config, plan) -> ExperimentResult:
    """Ideal, sensing-only and achieved patterns for one seeded drop."""
    rows = []
    rng_seq = np.random.SeedSequence(plan.seed)
    schemes = [Scheme.parse(s) for s in plan.schemes]
    first = None
    for a in plan.sweep_values():
        for s in schemes:
            if s is not Scheme.PROPOSED and not math.isclose(a, 0.5) and len(plan.sweep_values()) > 1:
                continue
            st = run_am(config.replace(alpha=float(a)), s, np.random.default_rng(rng_seq))
            az, P = beampattern_cut(st)
            tag = f"{s.value}-alpha{a:g}"
            rows += [(z, g, tag) for z, g in zip(az, to_db(P))]
            if first is None:
                first = st
                row = int(np.argmin(np.abs(st.grid.elevations - np.deg2rad(config.target_angles_deg[0][1]))))
                rows = [(z, g, "ideal") for z, g in zip(az, to_db(st.P_d[:, row]))] + \
                       [(z, g, "sensing-only") for z, g in zip(az, to_db(beampattern_cut(st, st.s_r)[1]))] + rows
    return ExperimentResult(rows)


@dataclass
class BerCurves:
    noise_dbm: tuple
    ber: dict  # modulation -> mean BER per noise level
    bits: dict  # modulation -> bits simulated per noise level
    failures: int = 0


def ber_curves(config, scheme, modulations, noise_dbm, trials: int, seed: int, blocks: int,
               draws: int) -> BerCurves:
    """Mean BER over ``trials`` user drops.

    Each drop's stream is split in two: one half drives the design, the
    other the payload and noise. Configurations that share ``seed`` (for
    example two values of alpha) therefore see identical payloads and noise.
    """
    totals = {m: np.zeros(len(noise_dbm)) for m in modulations}
    bits = {m: 0 for m in modulations}
    done = failures = 0
    for seq in np.random.SeedSequence(seed).spawn(trials):
        design_seq, payload_seq = seq.spawn(2)
        try:
            st = run_am(config, Scheme.parse(scheme), np.random.default_rng(design_seq))
        except SolverError:
            failures += 1
            continue
        for m, mseq in zip(modulations, payload_seq.spawn(len(modulations))):
            res = ber_experiment(st, m, noise_dbm, blocks, np.random.default_rng(mseq), draws_per_block=draws)
            totals[m] += res.ber
            bits[m] += res.bits
        done += 1
    ber = {m: totals[m] / done if done else np.full(len(noise_dbm), np.nan) for m in modulations}
    return BerCurves(tuple(noise_dbm), ber, bits, failures)


def run_ber(config, plan) -> ExperimentResult:
    rows, failures = [], 0
    for a in plan.sweep_values():
        curves = ber_curves(config.replace(alpha=float(a)), plan.schemes[0], plan.modulations, plan.noise_dbm,
                            plan.trials, plan.seed, plan.ber_blocks, plan.ber_draws)
        failures += curves.failures
        for m in plan.modulations:
            for nd, b in zip(plan.noise_dbm, curves.ber[m]):
                rows.append((nd, m, a, b))
    return ExperimentResult(rows, failures)


RUNNERS = {
    "convergence": run_convergence,
    "n-sweep": run_n_sweep,
    "beampattern": run_beampattern,
    "ber": run_ber,
    "region-sweep": run_region_sweep,
    "table1": run_table1,
}


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def run_experiment(config: SystemConfig, plan: ExperimentPlan) -> tuple[ExperimentResult, Path]:
    """Run ``plan`` and write ``<kind>.csv`` plus ``<kind>.manifest.json`` under ``plan.out``."""
    plan.validate()
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = RUNNERS[plan.kind](config.replace(seed=plan.seed), plan)
    csv_path = out / f"{plan.kind}.csv"
    write_csv(csv_path, HEADERS[plan.kind], result.rows)
    manifest = {
        "software": "fris_isac",
        "version": __version__,
        "kind": plan.kind,
        "seed": plan.seed,
        "trials": plan.trials,
        "schemes": [Scheme.parse(s).value for s in plan.schemes],
        "config_hash": config_hash(config.replace(seed=plan.seed)),
        "config": config.replace(seed=plan.seed).to_dict(),
        "P_t_dbm": watts_to_dbm(config.P_t),
        "failures": result.failures,
        "rows": len(result.rows),
        "csv": csv_path.name,
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / f"{plan.kind}.manifest.json").write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    return result, csv_path


def override(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    changes = {k: v for k, v in changes.items() if v is not None}
    new = replace(plan, **changes)
    new.validate()
    return new
