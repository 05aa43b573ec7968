import numpy as np
import pytest

from fris_isac.comm import QPSK, comm_mse
from fris_isac.config import SystemConfig
from fris_isac.numerics import SolverError
from fris_isac.orchestrator import (
    Scheme,
    ber_experiment,
    dps_candidates,
    dps_position_pass,
    evaluate_objective,
    init_state,
    monte_carlo,
    redesign_for_block,
    run_am,
    substep_violations,
    trial_streams,
    update_omega,
    worker_count,
)
from fris_isac.position_opt import check_positions
from fris_isac.sensing import sensing_mse

SMALL = dict(M=4, N=4, K=2, I_a=61, I_e=1, elevation_range_deg=(0.0, 0.0), am_max_iter=6, sensing_restarts=1)


def small(**kw):
    return SystemConfig(**{**SMALL, **kw})


def test_scheme_parse():
    assert Scheme.parse(" DPS ") is Scheme.DPS
    assert Scheme.parse(Scheme.RAND) is Scheme.RAND
    with pytest.raises(ValueError):
        Scheme.parse("greedy")


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_alpha_endpoints_select_one_error(alpha):
    st = run_am(small(alpha=alpha), "conven", np.random.default_rng(0), max_iter=2)
    cfg, ch = st.config, st.channels
    eps, e_r, e_c = evaluate_objective(st)
    assert e_r == pytest.approx(sensing_mse(st.s_r, st.theta, ch.G, st.x))
    assert e_c == pytest.approx(comm_mse(st.s_c, st.omega, ch.H_rc, st.theta, ch.G, st.x, cfg.K, cfg.sigma0_sq))
    assert eps == pytest.approx(e_r if alpha == 1.0 else e_c)


@pytest.mark.parametrize("scheme", ["proposed", "conven", "dps", "rand"])
def test_run_am_contract(scheme):
    cfg = small()
    st = run_am(cfg, scheme, np.random.default_rng(1))
    assert len(st.trace) == st.iteration + 1 and st.trace[0].iteration == 0
    assert st.epsilon == pytest.approx(evaluate_objective(st)[0], rel=1e-10)
    assert check_positions(st.positions, cfg.A, cfg.DeltaD)
    assert np.allclose(np.abs(st.theta), 1.0)
    assert np.linalg.norm(st.W) ** 2 == pytest.approx(cfg.P_t, rel=1e-9)
    assert not substep_violations(st)
    assert st.elapsed > 0


@pytest.mark.parametrize("scheme", ["conven", "rand"])
def test_fixed_position_schemes_never_move(scheme):
    rng = np.random.default_rng(2)
    st0 = init_state(small(), scheme, np.random.default_rng(2))
    st = run_am(small(), scheme, rng)
    np.testing.assert_array_equal(st.positions, st0.positions)


def test_dps_single_element_brute_force():
    cfg = small(N=1, A=0.125, DeltaD=0.0625, dps_spacing=0.125)
    st = run_am(cfg, "conven", np.random.default_rng(3), max_iter=2)
    chosen = dps_position_pass(st)
    cands = np.vstack([dps_candidates(cfg.A, cfg.dps_spacing), st.positions])
    assert len(cands) == 5
    vals = []
    for p in cands:
        st.set_positions(p[None, :])
        vals.append(evaluate_objective(st)[0])
    st.set_positions(chosen)
    assert evaluate_objective(st)[0] <= min(vals) + 1e-12 * abs(min(vals))


def test_dps_last_element_is_optimal_given_the_rest():
    cfg = small(N=2, A=0.25, DeltaD=0.0625, dps_spacing=0.0625)
    st = run_am(cfg, "conven", np.random.default_rng(4), max_iter=2)
    P = dps_position_pass(st)
    assert check_positions(P, cfg.A, cfg.DeltaD)
    st.set_positions(P)
    best = evaluate_objective(st)[0]
    for p in dps_candidates(cfg.A, cfg.dps_spacing):
        if np.linalg.norm(p - P[0]) < cfg.DeltaD:
            continue
        st.set_positions(np.vstack([P[0], p]))
        assert evaluate_objective(st)[0] >= best - 1e-12 * abs(best)
    with pytest.raises(ValueError):
        dps_position_pass(st, grid_spacing=1.0)


def test_monte_carlo_single_trial_equals_run_am():
    cfg = small()
    rep = monte_carlo(cfg, "proposed", 1, seed=11)
    st = run_am(cfg, "proposed", np.random.default_rng(trial_streams(11, 1)[0]))
    assert rep.trials[0].epsilon == st.epsilon
    assert rep.failures == 0 and rep.mean("epsilon") == st.epsilon


def test_monte_carlo_deterministic_and_prefix_stable():
    cfg = small(am_max_iter=3)
    a = monte_carlo(cfg, "conven", 3, seed=5)
    b = monte_carlo(cfg, "conven", 3, seed=5)
    c = monte_carlo(cfg, "conven", 2, seed=5)
    assert [t.epsilon for t in a.trials] == [t.epsilon for t in b.trials]
    assert [t.epsilon for t in a.trials[:2]] == [t.epsilon for t in c.trials]
    with pytest.raises(ValueError):
        monte_carlo(cfg, "conven", 0)


def test_schemes_share_user_drops():
    cfg = small()
    seq = trial_streams(9, 2)[1]
    u1 = init_state(cfg, "proposed", np.random.default_rng(seq)).geometry
    u2 = init_state(cfg, "dps", np.random.default_rng(seq)).geometry
    assert u1.zeta_G == u2.zeta_G
    np.testing.assert_array_equal(u1.zeta_users, u2.zeta_users)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FRIS_ISAC_THREADS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("FRIS_ISAC_THREADS", "lots")
    with pytest.raises(ValueError):
        worker_count(4)


def test_parallel_matches_serial(monkeypatch):
    cfg = small(am_max_iter=2)
    monkeypatch.setenv("FRIS_ISAC_THREADS", "1")
    serial = monte_carlo(cfg, "conven", 2, seed=3)
    monkeypatch.setenv("FRIS_ISAC_THREADS", "2")
    par = monte_carlo(cfg, "conven", 2, seed=3)
    assert [t.epsilon for t in serial.trials] == [t.epsilon for t in par.trials]


def test_solver_failure_is_reported():
    cfg = small()
    st = init_state(cfg, "conven", np.random.default_rng(0))
    st.W = np.zeros_like(st.W)  # no illumination
    with pytest.raises(SolverError):
        run_am(cfg, "conven", np.random.default_rng(0), state=st)


def test_redesign_keeps_layout_and_ber_bounds():
    cfg = small()
    st = run_am(cfg, "proposed", np.random.default_rng(6))
    s_c = np.array([1 + 1j, -1 - 1j]) / np.sqrt(2)
    re = redesign_for_block(st, s_c, np.random.default_rng(0), iterations=3)
    np.testing.assert_array_equal(re.positions, st.positions)
    np.testing.assert_array_equal(re.s_c, s_c)
    res = ber_experiment(st, QPSK, [-40.0, -90.0], 2, np.random.default_rng(1), draws_per_block=10, iterations=3)
    assert res.bits == 2 * 10 * cfg.K * 2
    assert np.all((res.ber >= 0) & (res.ber <= 1))
    assert res.ber[1] <= res.ber[0]
    with pytest.raises(ValueError):
        ber_experiment(st, QPSK, [-40.0], 0, np.random.default_rng(1))


def test_update_omega_is_closed_form():
    st = init_state(small(), "conven", np.random.default_rng(8))
    update_omega(st)
    base = evaluate_objective
    st.s_r = np.zeros(st.config.N, dtype=complex)
    e0 = base(st)[2]
    w = st.omega
    for d in (-1e-3 * abs(w), 1e-3 * abs(w)):
        st.omega = w + d
        assert base(st)[2] >= e0
