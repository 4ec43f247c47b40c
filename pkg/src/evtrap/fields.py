"""Mode geometry, steady-state fields and adiabatic trap characterization.

The two evanescent modes share the pump-side geometry but decay at different
rates: f_r(x) = exp(-k x) and f_b(x) = exp(-2 k x) in internal units, so the
repulsive blue wall sits inside the attractive red well.  With the fields
adiabatically eliminated the atom moves on a closed-form potential whose
dipole part is U0 * sum_i s_i (N_i(x) - f_i^2 / 2) with
N_i(x) = eta_i^2 * integral of the photon-number response, evaluated here
through engine.mode_integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from . import engine
from .params import PhysicalParams, derive

# default characterization window, internal units; the lower edge stays
# above the van der Waals divergence, the upper edge is deep in the tail
_SCAN_LO = 0.02
_SCAN_HI = 10.0
_SCAN_STEP = 1e-2
_FD_STEP = 1e-3  # central difference step for the trap curvature


class NoTrapError(RuntimeError):
    """The adiabatic potential has no bound minimum for these parameters."""


@dataclass(frozen=True)
class ModeGeometry:
    """Evanescent decay exponents of the two modes, in units of k."""

    decay_r: float = 1.0
    decay_b: float = 2.0


@dataclass(frozen=True)
class TrapProfile:
    """Characterization of the adiabatic trap.

    Lengths are in 1/k, energies in hbar*gamma; omega_trap is in s^-1 and
    defined through the curvature, omega = gamma * sqrt(epsilon * U''(x_min)).
    """

    x_min: float            # position of the potential minimum
    depth: float            # -U(x_min), positive
    x_barrier: float        # position of the inner barrier maximum
    barrier_height: float   # U(x_barrier)
    omega_trap: float       # small-oscillation angular frequency, s^-1
    sat_max: float          # max over modes and x >= closest_approach of n_i f_i^2 / n_sat
    closest_approach: float  # inner classical turning point at E = 0


def mode_f(x, mode: str, geometry: ModeGeometry = ModeGeometry()):
    """Evanescent mode profile f_i(x) = exp(-decay_i * x), x in units of 1/k.

    mode is "red" or "blue"; x may be a scalar or array and must be >= 0.
    """
    if mode == "red":
        decay = geometry.decay_r
    elif mode == "blue":
        decay = geometry.decay_b
    else:
        raise ValueError(f"mode must be 'red' or 'blue', got {mode!r}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("mode_f requires x >= 0 (outside the surface)")
    out = np.exp(-decay * xa)
    return float(out) if np.isscalar(x) else out


def steady_state_alpha(x, params: PhysicalParams):
    """Steady-state amplitudes (alpha_r, alpha_b) at position(s) x."""
    P = engine.pack_params(params)
    if np.isscalar(x):
        return engine.alpha_steady(float(x), P)
    xa = np.asarray(x, dtype=float)
    ar = np.empty(xa.shape, dtype=complex)
    ab = np.empty(xa.shape, dtype=complex)
    flat_r, flat_b = ar.ravel(), ab.ravel()
    for i, xi in enumerate(xa.ravel()):
        flat_r[i], flat_b[i] = engine.alpha_steady(xi, P)
    return ar, ab


def photon_numbers(x, params: PhysicalParams):
    """Steady-state photon numbers (n_r, n_b) at position(s) x."""
    P = engine.pack_params(params)
    u = np.exp(-2.0 * np.asarray(x, dtype=float))
    nr = params.eta_r / params.gamma
    nb = params.eta_b / params.gamma
    ke_r = P[engine.IK] + P[engine.IG0] * u
    de_r = P[engine.IDC] - P[engine.ISR] * P[engine.IU0] * u
    ke_b = P[engine.IK] + P[engine.IG0] * u * u
    de_b = P[engine.IDC] - P[engine.ISB] * P[engine.IU0] * u * u
    n_r = nr * nr / (ke_r * ke_r + de_r * de_r)
    n_b = nb * nb / (ke_b * ke_b + de_b * de_b)
    if np.isscalar(x):
        return float(n_r), float(n_b)
    return n_r, n_b


def adiabatic_potential(x, params: PhysicalParams):
    """Adiabatic potential U(x) in hbar*gamma, x in 1/k (scalar or array).

    Requires x > 0; the van der Waals term diverges at the surface.
    """
    P = engine.pack_params(params)
    if np.isscalar(x):
        if x <= 0:
            raise ValueError(f"adiabatic_potential requires x > 0, got {x}")
        return engine.potential(float(x), P)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("adiabatic_potential requires x > 0")
    out = np.empty(xa.shape)
    flat = out.ravel()
    for i, xi in enumerate(xa.ravel()):
        flat[i] = engine.potential(xi, P)
    return out


@lru_cache(maxsize=64)
def characterize_trap(params: PhysicalParams) -> TrapProfile:
    """Locate and characterize the trap of the adiabatic potential.

    Scans [0.02, 10] / k on a 0.01 grid, refines the stationary points with
    bracketed scalar minimization, and measures the curvature by central
    differences.  Raises NoTrapError when no interior minimum with U < 0
    exists (for example with the blue pump off, where the potential is purely
    attractive and has no bound well against the surface).
    """
    d = derive(params)
    P = engine.pack_params(params)
    xs = np.arange(_SCAN_LO, _SCAN_HI, _SCAN_STEP)
    us = adiabatic_potential(xs, params)

    interior = np.flatnonzero((us[1:-1] < us[:-2]) & (us[1:-1] < us[2:])
                              & (us[1:-1] < 0)) + 1
    if interior.size == 0:
        raise NoTrapError(
            "adiabatic potential has no bound minimum in the scan window; "
            "check the pump balance (eta_r, eta_b) and detunings")
    i0 = interior[np.argmin(us[interior])]
    res = optimize.minimize_scalar(
        lambda x: engine.potential(x, P),
        bounds=(xs[i0 - 1], xs[i0 + 1]), method="bounded",
        options={"xatol": 1e-10})
    x_min = float(res.x)
    depth = -float(res.fun)
    if not depth > 0:
        raise NoTrapError("potential minimum is not bound (U(x_min) >= 0)")

    # the well is bounded toward the surface by a barrier between the van der
    # Waals divergence and the minimum; U -> -inf at the surface guarantees
    # an interior maximum once a minimum exists
    res_b = optimize.minimize_scalar(
        lambda x: -engine.potential(x, P),
        bounds=(_SCAN_LO / 4, x_min), method="bounded",
        options={"xatol": 1e-10})
    x_barrier = float(res_b.x)
    barrier_height = -float(res_b.fun)

    # curvature at the minimum by central differences; omega in lab units
    h = _FD_STEP
    upp = (engine.potential(x_min + h, P) - 2.0 * engine.potential(x_min, P)
           + engine.potential(x_min - h, P)) / (h * h)
    if upp <= 0:
        raise NoTrapError("potential curvature at the minimum is not positive")
    omega_trap = params.gamma * np.sqrt(d.epsilon * upp)

    # inner classical turning point at E = 0: closest approach of a marginally
    # bound atom.  If the barrier tops out below zero the barrier position
    # itself is the deepest reachable point before loss.
    if barrier_height > 0:
        closest = float(optimize.brentq(
            lambda x: engine.potential(x, P), x_barrier, x_min,
            xtol=1e-12, rtol=1e-14))
    else:
        closest = x_barrier

    # saturation check over the reachable range of a bound atom
    xg = np.arange(closest, 8.0, 1e-3)
    n_r, n_b = photon_numbers(xg, params)
    fr2 = np.exp(-2.0 * xg)
    occ = max(float(np.max(n_r * fr2)), float(np.max(n_b * fr2 * fr2)))
    sat_max = occ / d.n_sat if np.isfinite(d.n_sat) else 0.0

    return TrapProfile(x_min=x_min, depth=depth, x_barrier=x_barrier,
                       barrier_height=barrier_height, omega_trap=float(omega_trap),
                       sat_max=sat_max, closest_approach=closest)


def potential_scan(params: PhysicalParams, grid: np.ndarray) -> dict:
    """Tabulate the potential and photon numbers on a position grid.

    grid must be nonempty, strictly increasing and positive.  Returns a dict
    of equally shaped arrays with keys x, U_total, U_vdw, n_red, n_blue.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    if np.any(g <= 0):
        raise ValueError("grid points must be positive")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    n_r, n_b = photon_numbers(g, params)
    return {
        "x": g,
        "U_total": adiabatic_potential(g, params),
        "U_vdw": -params.c3_vdw / g ** 3,
        "n_red": n_r,
        "n_blue": n_b,
    }
