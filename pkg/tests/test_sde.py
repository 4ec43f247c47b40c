"""Drift, diffusion and stepper contracts at the single-step level."""

import dataclasses
import math

import numpy as np
import pytest

from evtrap import sde
from evtrap.fields import adiabatic_potential, characterize_trap
from evtrap.params import default_paper_params, derive


@pytest.fixture()
def params():
    return default_paper_params()


def internal(params):
    d = derive(params)
    g = params.gamma
    return {
        "kappa": params.kappa / g,
        "delta_c": params.delta_C / g,
        "u0": d.u0 / g,
        "gamma0": d.gamma0 / g,
        "eta_r": params.eta_r / g,
        "eta_b": params.eta_b / g,
        "eps": d.epsilon,
        "rec_r": (params.k_opt_r / params.k) ** 2 * params.u2_bar,
        "rec_b": (params.k_opt_b / params.k) ** 2 * params.u2_bar,
    }


def test_drift_vanishes_at_equilibrium(params):
    prof = characterize_trap(params)
    st = sde.steady_state(prof.x_min, 0.0, params)
    d = sde.drift(st, params)
    assert d.x == 0.0
    assert abs(d.p) < 1e-6
    assert abs(d.alpha_r) < 1e-9 * abs(st.alpha_r)
    assert abs(d.alpha_b) < 1e-9 * abs(st.alpha_b)


def test_field_drift_from_vacuum(params):
    # with both amplitudes zero the field equations reduce to the pumps
    c = internal(params)
    st = sde.SystemState(x=30.0, p=0.0, alpha_r=0j, alpha_b=0j)
    d = sde.drift(st, params)
    assert d.alpha_r == pytest.approx(c["eta_r"])
    assert d.alpha_b == pytest.approx(c["eta_b"])


def test_field_relaxation_matches_linear_solution(params):
    # far from the surface the field is a driven linear mode; RK4 must track
    # alpha(t) = alpha_ss (1 - exp((i delta_c - kappa) t))
    c = internal(params)
    lam = complex(-c["kappa"], c["delta_c"])
    a_ss = -c["eta_r"] / lam
    st = sde.SystemState(x=30.0, p=0.0, alpha_r=0j, alpha_b=0j)
    dt = 5e-3
    n = 300
    for _ in range(n):
        st = sde.step_deterministic(st, dt, params)
    want = a_ss * (1.0 - np.exp(lam * n * dt))
    assert abs(st.alpha_r - want) < 1e-8 * abs(a_ss)


def test_rk4_fourth_order_convergence(params):
    start = sde.steady_state(1.0, 10.0, params)

    def integrate(n, total=0.4):
        st = start
        h = total / n
        for _ in range(n):
            st = sde.step_deterministic(st, h, params)
        return st.as_array()

    ref = integrate(512)
    e1 = np.max(np.abs(integrate(2) - ref))
    e2 = np.max(np.abs(integrate(4) - ref))
    assert 10.0 < e1 / e2 < 26.0


def test_frozen_fields_conserve_energy(params):
    prof = characterize_trap(params)
    st = sde.steady_state(prof.x_min + 0.3, 0.0, params)
    d = derive(params)
    eps = d.epsilon

    def energy(s):
        return 0.5 * eps * s.p ** 2 + adiabatic_potential(s.x, params)

    e0 = energy(st)
    dt = 5e-3
    period = 2.0 * math.pi / (prof.omega_trap / params.gamma)
    for _ in range(int(period / dt) + 1):
        st = sde.step_deterministic(st, dt, params, frozen_fields=True)
    assert abs(energy(st) - e0) < 1e-8


def test_noise_covariance_matches_hand_formula(params):
    # independent recomputation of every matrix entry
    c = internal(params)
    x = 0.45
    st0 = sde.steady_state(x, 2.0, params)
    st = dataclasses.replace(st0, alpha_r=st0.alpha_r + (9 - 4j),
                             alpha_b=st0.alpha_b + (-6 + 11j))
    scale = 2.0
    m = sde.noise_covariance(st, params, field_noise_scale=scale).matrix
    fr, fb = math.exp(-x), math.exp(-2 * x)
    dfr, dfb = -fr, -2.0 * fb
    g0 = c["gamma0"]
    var_p = 0.0
    for a, f, df, rec in ((st.alpha_r, fr, dfr, c["rec_r"]),
                          (st.alpha_b, fb, dfb, c["rec_b"])):
        n = abs(a) ** 2
        var_p += 2.0 * g0 * max(n - 0.5, 0.0) * (df * df + rec * f * f)
    assert m[0, 0] == pytest.approx(var_p, rel=1e-12)
    assert m[1, 1] == pytest.approx(scale * (c["kappa"] + g0 * fr * fr) / 4.0, rel=1e-12)
    assert m[2, 2] == m[1, 1]
    assert m[3, 3] == pytest.approx(scale * (c["kappa"] + g0 * fb * fb) / 4.0, rel=1e-12)
    assert m[4, 4] == m[3, 3]
    assert m[0, 1] == pytest.approx(-g0 * fr * dfr * st.alpha_r.imag, rel=1e-12)
    assert m[0, 2] == pytest.approx(g0 * fr * dfr * st.alpha_r.real, rel=1e-12)
    assert m[0, 3] == pytest.approx(-g0 * fb * dfb * st.alpha_b.imag, rel=1e-12)
    assert m[0, 4] == pytest.approx(g0 * fb * dfb * st.alpha_b.real, rel=1e-12)
    assert np.array_equal(m, m.T)
    # fields mutually uncorrelated
    assert np.all(m[1:3, 3:5] == 0.0)


def test_noise_covariance_positive_semidefinite(params):
    for x in (0.22, 0.3, 0.45, 0.565, 0.8, 1.5, 3.0):
        for p in (-10.0, 0.0, 10.0):
            m = sde.noise_covariance(sde.steady_state(x, p, params), params).matrix
            ev = np.linalg.eigvalsh(m)
            assert ev.min() >= -1e-12 * max(1.0, ev.max())


def test_sampled_covariance_matches_analytic(params):
    st = sde.steady_state(0.45, 0.0, params)
    cov = sde.noise_covariance(st, params)
    m = cov.matrix
    rng = np.random.default_rng(7)
    n = 1_000_000
    w = sde.sample_noise(cov, 1.0, rng, size=n)
    emp = (w.T @ w) / n
    for i in range(5):
        for j in range(5):
            sigma = math.sqrt((m[i, i] * m[j, j] + m[i, j] ** 2) / n)
            assert abs(emp[i, j] - m[i, j]) < 5 * sigma, (i, j)


def test_sample_noise_scales_with_dt(params):
    st = sde.steady_state(0.6, 0.0, params)
    cov = sde.noise_covariance(st, params)
    rng = np.random.default_rng(3)
    n = 200_000
    v1 = np.var(sde.sample_noise(cov, 1e-2, rng, size=n)[:, 1])
    v2 = np.var(sde.sample_noise(cov, 4e-2, rng, size=n)[:, 1])
    assert v2 / v1 == pytest.approx(4.0, rel=0.05)


def test_cholesky_fallback_counter():
    # an inconsistent matrix (cross term exceeds what the marginals allow)
    # must be sampled from the marginals and counted, not crash
    m = np.zeros((5, 5))
    np.fill_diagonal(m, 1.0)
    m[0, 0] = 1e-20
    m[0, 1] = m[1, 0] = 1.0
    before = sde.DIAGNOSTICS["cholesky_fallbacks"]
    out = sde.sample_noise(sde.NoiseCovariance(matrix=m), 1.0,
                           np.random.default_rng(0), size=1000)
    assert sde.DIAGNOSTICS["cholesky_fallbacks"] == before + 1
    assert np.all(np.isfinite(out))
    assert np.var(out[:, 0]) < 1e-18


def test_step_rejects_large_dt(params):
    st = sde.steady_state(1.0, 0.0, params)
    rng = np.random.default_rng(0)
    with pytest.raises(sde.StepTooLarge):
        sde.step_stochastic(st, 0.25, params, rng)
    sde.step_stochastic(st, 0.19, params, rng)  # at defaults the limit is 0.2


def test_zero_noise_step_degenerates_to_deterministic(params):
    # g = 0 kills scattering, scale 0 kills the vacuum inflow: the stochastic
    # step must then equal the deterministic step bit for bit
    p = dataclasses.replace(params, g=0.0)
    st = sde.SystemState(x=1.3, p=4.0, alpha_r=20 + 3j, alpha_b=11 - 2j)
    dt = 5e-3
    out = sde.step_stochastic(st, dt, p, np.random.default_rng(1),
                              field_noise_scale=0.0)
    det = sde.step_deterministic(st, dt, p)
    assert out.x == det.x
    assert out.p == det.p
    assert out.alpha_r == det.alpha_r
    assert out.alpha_b == det.alpha_b


def test_long_run_stays_finite(params):
    rng = np.random.default_rng(11)
    st = sde.steady_state(3.0, 0.0, params)
    c = internal(params)
    n_cap = 1.2 * (c["eta_r"] / c["kappa"]) ** 2
    for k in range(20_000):
        st = sde.step_stochastic(st, 5e-3, params, rng)
        if k % 500 == 0:
            assert np.all(np.isfinite(st.as_array()))
            assert abs(st.alpha_r) ** 2 < n_cap
            assert abs(st.alpha_b) ** 2 < n_cap
    assert np.all(np.isfinite(st.as_array()))
