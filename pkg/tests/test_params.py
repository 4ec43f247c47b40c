"""Parameter derivation against frozen oracles and validity constraints."""

import math

import numpy as np
import pytest

from evtrap import params as pr
from evtrap.params import ParamsError, PhysicalParams, derive, to_internal_units

# frozen reference values, computed by hand from the defaults:
# gamma = 2e7, kappa = gamma/2, g = 2.5 gamma, delta_A = 1e3 gamma,
# delta_C = -0.8 kappa, eta = (1.2e9, 1.5e9), 1/k = 0.3 um, Rb-85
U0_OVER_KAPPA = 0.0125          # g^2 delta_A / (delta_A^2 + gamma^2) / kappa
GAMMA0_INTERNAL = 6.25e-6       # = U0 * gamma / delta_A
EPSILON = 4.1551e-4             # hbar k^2 / (M gamma)
N_SAT = 80000.08                # (delta_A^2 + gamma^2) / (2 g^2), exact
N_EMPTY_R = 3600.0 / 0.41       # (eta_r/gamma)^2 / ((delta_C/gamma)^2 + (kappa/gamma)^2)
N_EMPTY_B = 5625.0 / 0.41
P_7CMS = 28.08                  # M * 0.07 m/s / (hbar k)
KE_7CMS = 0.1638                # in hbar gamma


def test_default_values():
    p = pr.default_paper_params()
    assert p.gamma == 2e7
    assert p.kappa == p.gamma / 2
    assert p.g == 2.5 * p.gamma
    assert p.delta_A == 1e3 * p.gamma
    assert p.delta_C == -0.8 * p.kappa
    assert p.eta_r == 1.2e9 and p.eta_b == 1.5e9
    assert math.isclose(p.k, 1 / 0.3e-6, rel_tol=1e-12)
    assert math.isclose(p.mass, 1.40999e-25, rel_tol=1e-5)  # Rb-85
    # optical-to-trap wavenumber ratios for the recoil terms
    assert math.isclose(p.k_opt_r / p.k, 2.371, rel_tol=1e-3)
    assert math.isclose(p.k_opt_b / p.k, 2.417, rel_tol=1e-3)


def test_u0_identity():
    p = pr.default_paper_params()
    d = derive(p)
    assert abs(d.u0 / p.kappa - U0_OVER_KAPPA) < 1e-6
    # direct recomputation must agree bit for bit
    assert d.u0 == p.g**2 * p.delta_A / (p.delta_A**2 + p.gamma**2)
    # dispersion-to-absorption ratio is the normalized detuning
    assert math.isclose(d.u0 / d.gamma0, p.delta_A / p.gamma, rel_tol=1e-12)
    assert math.isclose(d.gamma0 / p.gamma, GAMMA0_INTERNAL, rel_tol=1e-5)


def test_epsilon_and_nsat():
    d = derive(pr.default_paper_params())
    assert math.isclose(d.epsilon, EPSILON, rel_tol=1e-4)
    assert d.epsilon < 0.1
    assert math.isclose(d.n_sat, N_SAT, rel_tol=1e-12)


def test_empty_cavity_photon_numbers():
    d = derive(pr.default_paper_params())
    assert math.isclose(d.n_empty_r, N_EMPTY_R, rel_tol=1e-12)
    assert math.isclose(d.n_empty_b, N_EMPTY_B, rel_tol=1e-12)
    # within 1% of the reference operating point 8800 / 13700
    assert abs(d.n_empty_r - 8800) / 8800 < 0.01
    assert abs(d.n_empty_b - 13700) / 13700 < 0.01


def test_empty_photon_number_scales_quadratically():
    import dataclasses
    p = pr.default_paper_params()
    p2 = dataclasses.replace(p, eta_r=2 * p.eta_r)
    # doubling the pump quadruples the empty-cavity photon number exactly
    assert derive(p2).n_empty_r == 4 * derive(p).n_empty_r


def test_decoupled_atom():
    import dataclasses
    p = dataclasses.replace(pr.default_paper_params(), g=0.0)
    d = derive(p)
    assert d.u0 == 0.0 and d.gamma0 == 0.0
    assert math.isinf(d.n_sat)


def test_signs():
    d = derive(pr.default_paper_params())
    assert d.sign_r == -1.0 and d.sign_b == 1.0


@pytest.mark.parametrize("field,value", [
    ("gamma", 0.0), ("gamma", -1.0), ("kappa", 0.0), ("k", 0.0),
    ("mass", -1e-25), ("g", -1.0), ("eta_r", -1.0), ("eta_b", -5.0),
    ("delta_A", -1e9), ("delta_C", 0.0), ("delta_C", 8e6),
    ("c3_vdw", -1e-3), ("u2_bar", 0.0), ("u2_bar", 1.5),
    ("k_opt_r", 0.0), ("gamma", float("nan")), ("eta_r", float("inf")),
])
def test_validation_rejects(field, value):
    import dataclasses
    p = dataclasses.replace(pr.default_paper_params(), **{field: value})
    with pytest.raises(ParamsError):
        derive(p)


def test_epsilon_warning_and_error():
    import dataclasses
    p = pr.default_paper_params()
    heavy = derive(p)
    # 1000x lighter atom: epsilon ~ 0.42, still < 1 but suspect
    light = dataclasses.replace(p, mass=p.mass / 1000)
    with pytest.warns(UserWarning, match="epsilon"):
        d = derive(light)
    assert math.isclose(d.epsilon, heavy.epsilon * 1000, rel_tol=1e-12)
    # 10000x lighter: semiclassical treatment breaks down entirely
    with pytest.raises(ParamsError, match="epsilon"):
        derive(dataclasses.replace(p, mass=p.mass / 10000))


def test_derive_is_pure():
    p = pr.default_paper_params()
    a, b = derive(p), derive(p)
    assert a == b


def test_unit_roundtrips():
    p = pr.default_paper_params()
    u = to_internal_units(p)
    for value in (1.0, 3.7e-5, 123.4):
        assert math.isclose(u.time_to_si(u.time_to_internal(value)), value, rel_tol=1e-12)
        assert math.isclose(u.length_to_si(u.length_to_internal(value)), value, rel_tol=1e-12)
        assert math.isclose(u.energy_to_si(u.energy_to_internal(value)), value, rel_tol=1e-12)
        assert math.isclose(u.rate_to_si(u.rate_to_internal(value)), value, rel_tol=1e-12)
        assert math.isclose(
            u.momentum_to_si_velocity(u.velocity_to_internal(value)), value, rel_tol=1e-12)


def test_unit_values():
    p = pr.default_paper_params()
    u = to_internal_units(p)
    # 1 internal time unit = 50 ns, 1 internal length = 0.3 um
    assert math.isclose(u.time_to_si(1.0), 5e-8, rel_tol=1e-12)
    assert math.isclose(u.length_to_si(1.0), 0.3e-6, rel_tol=1e-12)
    # 7 cm/s in units of hbar k / M, and its kinetic energy in hbar gamma
    p7 = u.velocity_to_internal(0.07)
    assert math.isclose(p7, P_7CMS, rel_tol=1e-3)
    d = derive(p)
    assert math.isclose(0.5 * d.epsilon * p7**2, KE_7CMS, rel_tol=1e-3)
    assert math.isclose(
        0.5 * d.epsilon * p7**2,
        u.energy_to_internal(0.5 * p.mass * 0.07**2), rel_tol=1e-12)


def test_internal_pack():
    from evtrap import engine
    p = pr.default_paper_params()
    P = engine.pack_params(p)
    assert P[engine.IK] == 0.5
    assert P[engine.IDC] == -0.4
    assert P[engine.IER] == 60.0
    assert P[engine.IEB] == 75.0
    assert math.isclose(P[engine.IU0], 6.25e-3, rel_tol=1e-5)
    assert math.isclose(P[engine.IRECR], 2.371**2 * 0.4, rel_tol=1e-3)
    assert math.isclose(P[engine.IRECB], 2.417**2 * 0.4, rel_tol=1e-3)
    assert P[engine.ISR] == -1.0 and P[engine.ISB] == 1.0
    with pytest.raises(ValueError):
        engine.pack_params(p, field_noise_scale=-1.0)
