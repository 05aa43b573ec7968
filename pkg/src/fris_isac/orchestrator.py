"""Alternating minimization over (s_r, omega, theta, W, positions) and trial aggregation."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import comm
from .beamformer_opt import alm_optimize_w, build_w_quadratic, effective_channel, matched_filter
from .channel import ChannelSet, LinkGeometry, build_channels, draw_users, link_geometry
from .config import SystemConfig
from .numerics import SolverError
from .phase_opt import build_phase_quadratic, optimize_phases
from .position_opt import (
    build_position_context,
    check_positions,
    circle_packing_init,
    f1_values,
    per_element_params,
    random_positions,
    run_position_pass,
)
from .sensing import AngleGrid, design_reference_signal, ideal_beampattern, sensing_mse

MONO_TOL = 1e-8
DRIFT_REL_TOL = 1e-6


class Scheme(str, Enum):
    PROPOSED = "proposed"
    CONVEN = "conven"
    DPS = "dps"
    RAND = "rand"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown scheme {value!r}; expected one of {[s.value for s in cls]}") from None


@dataclass
class IterationRecord:
    iteration: int
    epsilon: float
    epsilon_r: float
    epsilon_c: float
    substeps: list  # (name, epsilon) after each sub-step, starting with the s_r refresh
    drift: float  # change of epsilon caused by the s_r refresh
    omega: float


@dataclass
class SolverState:
    config: SystemConfig
    scheme: Scheme
    geometry: LinkGeometry
    grid: AngleGrid
    P_d: np.ndarray
    s_c: np.ndarray
    positions: np.ndarray
    channels: ChannelSet
    steering: np.ndarray
    W: np.ndarray
    theta: np.ndarray
    omega: float = 0.0
    s_r: np.ndarray | None = None
    sensing_unit: np.ndarray | None = None
    beta: float = 0.0
    epsilon: float = np.inf
    epsilon_r: float = np.inf
    epsilon_c: float = np.inf
    iteration: int = 0
    converged: bool = False
    elapsed: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.W @ self.s_c

    def set_positions(self, positions) -> None:
        self.positions = np.asarray(positions, dtype=float)
        self.channels = build_channels(self.config, self.positions, self.geometry)
        self.steering = self.grid.steering(self.positions, self.config.wavelength)


def evaluate_objective(state: SolverState) -> tuple[float, float, float]:
    """(epsilon, epsilon_r_tilde, epsilon_c) recomputed from the state's variables."""
    cfg = state.config
    ch = build_channels(cfg, state.positions, state.geometry)
    x = state.W @ state.s_c
    e_r = sensing_mse(state.s_r, state.theta, ch.G, x)
    e_c = comm.comm_mse(state.s_c, state.omega, ch.H_rc, state.theta, ch.G, x, cfg.K, cfg.sigma0_sq)
    return cfg.alpha * e_r + (1 - cfg.alpha) * e_c, e_r, e_c


def _fast_objective(state: SolverState) -> tuple[float, float, float]:
    cfg = state.config
    ch = state.channels
    x = state.x
    e_r = sensing_mse(state.s_r, state.theta, ch.G, x)
    e_c = comm.comm_mse(state.s_c, state.omega, ch.H_rc, state.theta, ch.G, x, cfg.K, cfg.sigma0_sq)
    return cfg.alpha * e_r + (1 - cfg.alpha) * e_c, e_r, e_c


def _record(state: SolverState) -> float:
    state.epsilon, state.epsilon_r, state.epsilon_c = _fast_objective(state)
    return state.epsilon


def initial_positions(config: SystemConfig, scheme: Scheme, rng: np.random.Generator) -> np.ndarray:
    if scheme is Scheme.RAND:
        return random_positions(config.N, config.A, config.DeltaD, rng)
    return circle_packing_init(config.N, config.A, config.DeltaD)


def init_state(config: SystemConfig, scheme, rng: np.random.Generator, users=None, s_c=None,
               positions=None) -> SolverState:
    """Users, pilot, positions, all-ones theta and a matched-filter W at full power."""
    scheme = Scheme.parse(scheme)
    users = draw_users(config, rng) if users is None else np.asarray(users, dtype=float)
    geometry = link_geometry(config, users)
    if s_c is None:
        s_c = comm.generate_symbols(config.K, comm.QPSK, rng).s_c
    grid = AngleGrid.from_config(config)
    P_d = ideal_beampattern(np.deg2rad(np.asarray(config.target_angles_deg)), np.deg2rad(config.mainlobe_width_deg), grid)
    if positions is None:
        positions = initial_positions(config, scheme, rng)
    positions = np.asarray(positions, dtype=float)
    channels = build_channels(config, positions, geometry)
    theta = np.ones(config.N, dtype=complex)
    W = matched_filter(effective_channel(channels.H_rc, theta, channels.G), config.P_t)
    return SolverState(
        config, scheme, geometry, grid, P_d, np.asarray(s_c, dtype=complex), positions, channels,
        grid.steering(positions, config.wavelength), W, theta,
    )


def refresh_reference(state: SolverState, rng: np.random.Generator, restarts: int | None = None) -> None:
    """Sensing-only reference for the current (G, x), phase-aligned to Theta^H G x."""
    cfg = state.config
    ch = state.channels
    x = state.x
    v = np.conj(state.theta) * (ch.G @ x)
    ref = design_reference_signal(
        ch.G, x, state.P_d, state.grid, state.positions, cfg.wavelength,
        restarts=cfg.sensing_restarts if restarts is None else restarts,
        rng=rng,
        init=state.sensing_unit,
        align_to=v,
        target_angles=np.deg2rad(np.asarray(cfg.target_angles_deg)),
        steering=state.steering,
    )
    state.s_r = ref.s_r
    state.sensing_unit = ref.unit_signal
    state.beta = ref.beta


def update_omega(state: SolverState) -> None:
    cfg = state.config
    ch = state.channels
    state.omega = comm.optimal_estimator(state.s_c, ch.H_rc, state.theta, ch.G, state.x, cfg.K, cfg.sigma0_sq)


def update_theta(state: SolverState) -> None:
    cfg = state.config
    ch = state.channels
    q = build_phase_quadratic(ch.G, state.x, ch.H_rc, state.s_r, state.s_c, state.omega, cfg.alpha)
    state.theta = optimize_phases(q, state.theta).x


def update_w(state: SolverState) -> None:
    cfg = state.config
    ch = state.channels
    q = build_w_quadratic(ch.G, state.theta, ch.H_rc, state.s_r, state.s_c, state.omega, cfg.alpha, cfg.P_t)
    state.W = alm_optimize_w(q, state.W, cfg.alm_tol, gamma0=cfg.alm_gamma0).W


def _position_context(state: SolverState):
    cfg = state.config
    return build_position_context(state.theta, state.x, state.s_r, state.s_c, state.omega, cfg.alpha,
                                  state.geometry, cfg.M, cfg.wavelength)


def mm_position_pass(state: SolverState, rng: np.random.Generator) -> np.ndarray:
    cfg = state.config
    order = rng.permutation(cfg.N) if cfg.random_order else None
    res = run_position_pass(_position_context(state), state.positions, cfg.A, cfg.DeltaD, cfg.wavelength,
                            order=order, rng=rng)
    return res.positions


def dps_candidates(A: float, spacing: float) -> np.ndarray:
    """Grid points in lexicographic (x, then y) order."""
    g = np.arange(0.0, A + 1e-12, spacing)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def dps_position_pass(state: SolverState, grid_spacing: float | None = None) -> np.ndarray:
    """Greedy element-by-element selection from a discrete grid.

    Each element moves to the feasible candidate (grid points plus its
    current position) with the smallest objective; ties go to the
    lexicographically smallest point.
    """
    cfg = state.config
    spacing = cfg.dps_spacing if grid_spacing is None else grid_spacing
    if not 0 < spacing <= cfg.A:
        raise ValueError("grid spacing must lie in (0, A]")
    cand = dps_candidates(cfg.A, spacing)
    ctx = _position_context(state)
    P = state.positions.copy()
    for n in range(cfg.N):
        others = np.delete(P, n, axis=0)
        pts = np.vstack([cand, P[n]])
        if others.size:
            dmin = np.min(np.linalg.norm(pts[:, None, :] - others[None, :, :], axis=-1), axis=1)
            ok = dmin >= cfg.DeltaD - 1e-12
            ok[-1] = True
        else:
            ok = np.ones(len(pts), dtype=bool)
        pts = pts[ok]
        vals = f1_values(per_element_params(ctx, n, P), pts)
        best = vals.min()
        tie = np.flatnonzero(vals <= best + 1e-15 * max(1.0, abs(best)))
        idx = min(tie, key=lambda i: (pts[i, 0], pts[i, 1]))
        P[n] = pts[idx]
    return P


def run_am(config: SystemConfig, scheme=Scheme.PROPOSED, rng: np.random.Generator | None = None, *,
           state: SolverState | None = None, max_iter: int | None = None) -> SolverState:
    """Alternating minimization until |delta epsilon| < am_tol or the iteration cap.

    Each iteration refreshes s_r, then updates omega, theta, W and (scheme
    permitting) the positions. ``state.trace`` holds one
    :class:`IterationRecord` per iteration, preceded by the initial point.
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if state is None:
        state = init_state(config, scheme, rng)
    scheme = state.scheme
    cap = config.am_max_iter if max_iter is None else max_iter
    try:
        refresh_reference(state, rng)
        update_omega(state)
    except (SolverError, ValueError, ZeroDivisionError) as err:
        raise SolverError(f"{scheme.value} initial design: {err}") from err
    prev = _record(state)
    state.trace = [IterationRecord(0, state.epsilon, state.epsilon_r, state.epsilon_c, [], 0.0, state.omega)]
    state.converged = False
    for it in range(1, cap + 1):
        try:
            refresh_reference(state, rng, restarts=0)
            steps = [("s_r", _record(state))]
            drift = steps[0][1] - prev
            update_omega(state)
            steps.append(("omega", _record(state)))
            update_theta(state)
            steps.append(("theta", _record(state)))
            update_w(state)
            steps.append(("W", _record(state)))
            if scheme is Scheme.PROPOSED:
                state.set_positions(mm_position_pass(state, rng))
                steps.append(("positions", _record(state)))
            elif scheme is Scheme.DPS:
                state.set_positions(dps_position_pass(state))
                steps.append(("positions", _record(state)))
        except (SolverError, ValueError, ZeroDivisionError) as err:
            raise SolverError(f"{scheme.value} iteration {it}: {err}") from err
        state.iteration = it
        state.trace.append(IterationRecord(it, state.epsilon, state.epsilon_r, state.epsilon_c, steps, drift,
                                           state.omega))
        if abs(state.epsilon - prev) < config.am_tol:
            state.converged = True
            break
        prev = state.epsilon
    if not check_positions(state.positions, config.A, config.DeltaD):
        raise SolverError("position constraints violated on exit")
    state.elapsed = time.perf_counter() - t0
    return state


def substep_violations(state: SolverState, tol: float = MONO_TOL) -> list[tuple[int, str, float]]:
    """Sub-steps (after the s_r refresh) that raised epsilon by more than ``tol``."""
    bad = []
    for rec in state.trace[1:]:
        for (_, before), (name, after) in zip(rec.substeps, rec.substeps[1:]):
            if after > before + tol:
                bad.append((rec.iteration, name, after - before))
    return bad


def drift_fraction_within(state: SolverState, rel_tol: float = DRIFT_REL_TOL) -> float:
    """Share of iterations whose s_r-refresh drift stays below rel_tol * epsilon."""
    recs = state.trace[1:]
    if not recs:
        return 1.0
    prev = [r.epsilon for r in state.trace[:-1]]
    ok = [r.drift <= rel_tol * e for r, e in zip(recs, prev)]
    return float(np.mean(ok))


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class TrialResult:
    seed_index: int
    scheme: str
    epsilon: float
    epsilon_r: float
    epsilon_c: float
    iterations: int
    converged: bool
    elapsed: float
    trace: list
    error: str | None = None
    positions: np.ndarray | None = None
    substep_violations: int = 0
    drift_within: int = 0  # iterations whose s_r drift stayed below DRIFT_REL_TOL * epsilon


@dataclass
class MonteCarloReport:
    scheme: str
    trials: list

    def _ok(self):
        return [t for t in self.trials if t.error is None]

    @property
    def failures(self) -> int:
        return sum(t.error is not None for t in self.trials)

    def mean(self, attr: str) -> float:
        vals = [getattr(t, attr) for t in self._ok()]
        return float(np.mean(vals)) if vals else float("nan")

    def std(self, attr: str) -> float:
        vals = [getattr(t, attr) for t in self._ok()]
        return float(np.std(vals)) if vals else float("nan")

    def values(self, attr: str) -> np.ndarray:
        return np.array([getattr(t, attr) for t in self._ok()])


def trial_streams(seed: int, trials: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(trials)


def _run_trial(args) -> TrialResult:
    config, scheme, index, seq = args
    rng = np.random.default_rng(seq)
    try:
        st = run_am(config, scheme, rng)
    except SolverError as err:
        return TrialResult(index, Scheme.parse(scheme).value, np.nan, np.nan, np.nan, 0, False, 0.0, [], str(err))
    trace = [(r.iteration, r.epsilon, r.epsilon_r, r.epsilon_c) for r in st.trace]
    within = int(round(drift_fraction_within(st) * st.iteration))
    return TrialResult(index, st.scheme.value, st.epsilon, st.epsilon_r, st.epsilon_c, st.iteration,
                       st.converged, st.elapsed, trace, None, st.positions.copy(),
                       len(substep_violations(st)), within)


def worker_count(jobs: int) -> int:
    env = os.environ.get("FRIS_ISAC_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"FRIS_ISAC_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, jobs))


def map_trials(fn, jobs: list) -> list:
    workers = worker_count(len(jobs))
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def monte_carlo(config: SystemConfig, scheme, trials: int, seed: int | None = None) -> MonteCarloReport:
    """Independent trials, each with its own users and pilot from a spawned seed.

    Trial i uses the same stream for every scheme, so schemes are compared on
    identical user drops and pilots.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scheme = Scheme.parse(scheme)
    seqs = trial_streams(config.seed if seed is None else seed, trials)
    results = map_trials(_run_trial, [(config, scheme, i, s) for i, s in enumerate(seqs)])
    return MonteCarloReport(scheme.value, results)


# ---------------------------------------------------------------------------
# bit error rate


@dataclass
class BerResult:
    noise_dbm: np.ndarray
    ber: np.ndarray
    bits: int


def redesign_for_block(state: SolverState, s_c, rng: np.random.Generator, iterations: int = 20) -> SolverState:
    """Re-run (s_r, omega, theta, W) for a payload block, positions held at the optimized layout."""
    cfg = state.config
    s_c = np.asarray(s_c, dtype=complex)
    # Start from the rank-one precoder that sends the optimized x with the new symbols; the old W
    # itself can be orthogonal to the block at the surface (a_t^H W s_c = 0 for some QPSK blocks).
    W0 = np.outer(state.x, s_c.conj())
    W0 *= np.sqrt(cfg.P_t) / np.linalg.norm(W0)
    st = SolverState(
        cfg, Scheme.CONVEN, state.geometry, state.grid, state.P_d, s_c,
        state.positions, state.channels, state.steering, W0, state.theta.copy(),
        sensing_unit=state.sensing_unit,
    )
    return run_am(cfg, Scheme.CONVEN, rng, state=st, max_iter=iterations)


def ber_experiment(state: SolverState, constellation: str, noise_dbm, blocks: int, rng: np.random.Generator,
                   draws_per_block: int = 1, iterations: int = 20) -> BerResult:
    """Bit error rate over random payload blocks at several receiver noise powers.

    Each payload block gets its own symbol-level design of (omega, theta, W)
    with the element layout of ``state`` held fixed; the design is then
    reused for ``draws_per_block`` independent noise realizations at every
    noise level, with omega recomputed for that noise power.
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    cfg = state.config
    noise_dbm = np.atleast_1d(np.asarray(noise_dbm, dtype=float))
    errors = np.zeros(noise_dbm.size)
    total = 0
    for _ in range(blocks):
        block = comm.generate_symbols(cfg.K, constellation, rng)
        st = redesign_for_block(state, block.s_c, rng, iterations)
        ch, x = st.channels, st.x
        for j, nd in enumerate(noise_dbm):
            s2 = 10 ** ((nd - 30) / 10)
            omega = comm.optimal_estimator(block.s_c, ch.H_rc, st.theta, ch.G, x, cfg.K, s2)
            est = comm.simulate_rx(ch.H_rc, st.theta, ch.G, x, s2, omega, rng, draws=draws_per_block)
            errors[j] += comm.count_bit_errors(constellation, est, np.broadcast_to(
                block.bits, (draws_per_block, block.bits.size)))
        total += draws_per_block * block.bits.size
    return BerResult(noise_dbm, errors / total, total)
