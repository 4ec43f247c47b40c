"""Headline physics checks at fixed seeds, one summary line per check.

The ensemble checks (06, 07) share a single 1000-trajectory run; the
dt-halving check (08f) drives a refined run with the same Brownian path.
Tolerance bands are stated next to each assertion.
"""

import math
import time

import numpy as np
import pytest
from scipy import optimize

from evtrap import engine, sde
from evtrap.ensemble import InitialCondition, default_drop_in, run_ensemble, run_trajectory
from evtrap.fields import adiabatic_potential, characterize_trap
from evtrap.params import default_paper_params, derive


PARAMS = default_paper_params()


def _report(name, detail):
    print(f"ACCEPT {name}: {detail}")


@pytest.fixture(scope="module")
def big_run():
    """1000 noisy trajectories from the drop-in point, horizon 2e4."""
    t0 = time.time()
    stats = run_ensemble(default_drop_in(PARAMS), PARAMS, n_traj=1000,
                         seed=42, dt=5e-3, horizon=2e4)
    stats.__dict__["wall"] = time.time() - t0
    return stats


def test_01_parameter_identities():
    d = derive(PARAMS)
    ratio = d.u0 / PARAMS.kappa
    assert ratio == pytest.approx(0.0125, rel=1e-4)
    # pumped photon numbers within 1% of 8800 / 13700
    assert d.n_empty_r == pytest.approx(8800.0, rel=0.01)
    assert d.n_empty_b == pytest.approx(13700.0, rel=0.01)
    _report("01 parameter identities",
            f"U0/kappa={ratio:.8f}, n_empty=({d.n_empty_r:.1f}, {d.n_empty_b:.1f})")


def test_02_trap_depth():
    prof = characterize_trap(PARAMS)
    assert prof.depth == pytest.approx(8.9, rel=0.10)
    # closed form with photon numbers frozen at their empty-cavity values:
    # U has its minimum at u = n_r/(2 n_b) with value -u0 n_r^2 / (4 n_b)
    d = derive(PARAMS)
    u0 = d.u0 / PARAMS.gamma
    closed = u0 * d.n_empty_r ** 2 / (4.0 * d.n_empty_b)
    assert prof.depth == pytest.approx(closed, rel=0.03)
    _report("02 trap depth",
            f"depth={prof.depth:.4f} hbar*gamma (target 8.9 +- 10%), "
            f"frozen-photon closed form {closed:.4f} ({abs(prof.depth / closed - 1) * 100:.2f}% off)")


def test_03_saturation_bound():
    prof = characterize_trap(PARAMS)
    assert prof.sat_max < 0.10
    _report("03 saturation bound", f"max saturation {prof.sat_max:.4f} < 0.10")


def test_04_noiseless_staircase_and_capture_boundary():
    ic = default_drop_in(PARAMS)
    out = run_trajectory(ic, PARAMS, seed=0, dt=5e-3, horizon=2000.0,
                         noiseless=True, record_stride=0)
    assert out.status == "trapped"
    drops = -np.diff(out.outer_energies)
    assert np.all(drops > 0), "staircase must be strictly decreasing"
    first = float(drops[0])
    assert 0.17 * 0.7 < first < 0.17 * 1.3
    # capture boundary: 7 cm/s is captured, 20 cm/s passes through
    slow = run_trajectory(InitialCondition(kind="fixed", x0=ic.x0, v0=-0.07),
                          PARAMS, seed=0, dt=5e-3, horizon=2000.0,
                          noiseless=True, record_stride=0)
    fast = run_trajectory(InitialCondition(kind="fixed", x0=ic.x0, v0=-0.20),
                          PARAMS, seed=0, dt=5e-3, horizon=2000.0,
                          noiseless=True, record_stride=0)
    assert slow.status == "trapped"
    assert fast.status == "escaped"
    _report("04 noiseless staircase",
            f"first bounce loss {first:.4f} hbar*gamma (target 0.17 +- 30%), "
            f"{len(drops)} bounces monotone; 7 cm/s {slow.status}, 20 cm/s {fast.status}")


def test_05_noiseless_asymptote():
    prof = characterize_trap(PARAMS)
    out = run_trajectory(default_drop_in(PARAMS), PARAMS, seed=0, dt=5e-3,
                         horizon=2e4, noiseless=True, record_stride=0)
    e_end = float(mechanical(out.final_state))
    gap = abs(e_end - (-prof.depth))
    assert gap < 1e-2
    _report("05 noiseless asymptote",
            f"E(2e4) = {e_end:.5f}, -depth = {-prof.depth:.5f}, gap {gap:.2e} < 1e-2")


def mechanical(state):
    d = derive(PARAMS)
    P = engine.pack_params(PARAMS)
    return 0.5 * d.epsilon * state.p ** 2 + engine.potential(state.x, P)


def test_06_capture_plateau(big_run):
    st = big_run
    bt = st.bin_times
    p_half = float(st.p_trapped[int(np.argmin(np.abs(bt - 1e4)))])
    flat = abs(st.p_plateau - p_half)
    assert flat < 0.03, "survival has not plateaued"
    assert 0.40 <= st.p_plateau <= 0.60
    _report("06 capture plateau",
            f"p = {st.p_plateau:.4f} +- {st.p_plateau_err:.4f} in [0.40, 0.60], "
            f"|p(T)-p(T/2)| = {flat:.4f} < 0.03, wall {st.wall:.0f}s")


def test_07_kinetic_energy_asymptote(big_run):
    st = big_run
    assert 0.25 <= st.e_kin_final <= 0.70
    _report("07 kinetic asymptote",
            f"mean E_kin over final 10% = {st.e_kin_final:.4f} hbar*gamma "
            f"in [0.25, 0.70] ({st.n_trapped} trapped)")


def test_08a_force_is_potential_gradient():
    P = engine.pack_params(PARAMS)
    h = 1e-3
    worst = 0.0
    for x in (0.25, 0.4, 0.565, 0.8, 1.5, 3.0):
        u = [engine.potential(x + k * h, P) for k in (-2, -1, 1, 2)]
        du = (u[0] - 8 * u[1] + 8 * u[2] - u[3]) / (12 * h)
        ar, ab = engine.alpha_steady(x, P)
        force = engine.drift(x, 0.0, ar, ab, P)[1]
        rel = abs(force + du) / max(abs(du), 1.0)
        worst = max(worst, rel)
    assert worst < 1e-6
    _report("08a force gradient", f"max rel mismatch {worst:.2e} < 1e-6")


def test_08b_noise_covariance_psd_along_trajectory():
    out = run_trajectory(default_drop_in(PARAMS), PARAMS, seed=5, dt=5e-3,
                         horizon=2000.0, record_stride=50)
    worst = np.inf
    for row in out.record:
        st = sde.SystemState(row[1], row[2], complex(row[3], row[4]),
                             complex(row[5], row[6]))
        ev = np.linalg.eigvalsh(sde.noise_covariance(st, PARAMS).matrix)
        worst = min(worst, float(ev[0]))
    assert worst >= -1e-12
    _report("08b noise PSD", f"min eigenvalue along trajectory {worst:.2e} >= -1e-12")


def test_08c_sampled_covariance_matches_analytic():
    st = sde.steady_state(0.45, 0.0, PARAMS)
    cov = sde.noise_covariance(st, PARAMS)
    m = cov.matrix
    n = 1_000_000
    w = sde.sample_noise(cov, 1.0, np.random.default_rng(13), size=n)
    emp = (w.T @ w) / n
    worst = 0.0
    for i in range(5):
        for j in range(5):
            sigma = math.sqrt((m[i, i] * m[j, j] + m[i, j] ** 2) / n)
            worst = max(worst, abs(emp[i, j] - m[i, j]) / sigma)
    assert worst < 5.0
    _report("08c sampled covariance", f"worst entry deviation {worst:.2f} sigma < 5")


def test_08d_frozen_field_energy_conservation():
    prof = characterize_trap(PARAMS)
    st = sde.steady_state(prof.x_min + 0.3, 0.0, PARAMS)
    e0 = mechanical(st)
    dt = 5e-3
    period = 2.0 * math.pi / (prof.omega_trap / PARAMS.gamma)
    for _ in range(int(period / dt) + 1):
        st = sde.step_deterministic(st, dt, PARAMS, frozen_fields=True)
    drift_e = abs(mechanical(st) - e0)
    assert drift_e < 1e-8
    _report("08d frozen-field conservation",
            f"|dE| over one period = {drift_e:.2e} < 1e-8")


def test_08e_bit_reproducibility_across_workers(big_run):
    ic = default_drop_in(PARAMS)
    runs = [run_ensemble(ic, PARAMS, n_traj=32, seed=9, dt=5e-3,
                         horizon=500.0, workers=w, keep_rows=True)
            for w in (1, 8)]
    assert np.array_equal(runs[0].e_rows, runs[1].e_rows, equal_nan=True)
    assert np.array_equal(runs[0].status, runs[1].status)
    assert np.array_equal(runs[0].t_end, runs[1].t_end)
    # and the big run's index 0 equals the standalone trajectory
    single = run_trajectory(ic, PARAMS, seed=42, dt=5e-3, horizon=2e4,
                            record_stride=0)
    assert engine.STATUS_NAMES[big_run.status[0]] == single.status
    assert big_run.t_end[0] == single.t_end
    _report("08e bit reproducibility",
            "workers 1 vs 8 identical; ensemble index 0 == single trajectory")


def test_08f_dt_halving_plateau_stable():
    ic = default_drop_in(PARAMS)
    n, hz = 800, 3000.0
    coarse = run_ensemble(ic, PARAMS, n_traj=n, seed=42, dt=5e-3, horizon=hz,
                          pair_noise=True)
    fine = run_ensemble(ic, PARAMS, n_traj=n, seed=42, dt=2.5e-3, horizon=hz)
    diff = abs(coarse.p_plateau - fine.p_plateau)
    sigma = coarse.p_plateau_err
    assert diff < sigma
    _report("08f dt-halving",
            f"|p(dt) - p(dt/2)| = {diff:.4f} < 1 sigma = {sigma:.4f} "
            f"(common random numbers, n={n}, horizon={hz:g})")


def test_09_semiclassical_validity():
    d = derive(PARAMS)
    assert d.epsilon == pytest.approx(4.15e-4, rel=0.01)
    assert d.epsilon < 0.1
    _report("09 semiclassical validity",
            f"epsilon = {d.epsilon:.6g} < 0.1")
