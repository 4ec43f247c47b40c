"""Compiled numerical core.

Single source of truth for the equations of motion, the noise model and the
trajectory integrators.  The Python-facing modules (fields, sde, ensemble)
wrap the scalar functions defined here, so the interactive API and the
parallel Monte Carlo kernel cannot drift apart.

Everything below works in internal units: time 1/gamma, length 1/k,
momentum hbar*k, energy hbar*gamma.  Parameter sets are packed into a flat
float64 array (see pack_params) because numba kernels want plain numerics.

Randomness: each trajectory owns an independent xoshiro256++ stream seeded
through splitmix64 from a single 64-bit word.  Normals come from an inverse
CDF evaluation (one uniform per normal, no rejection), so a noisy step
consumes exactly five normals.  That fixed draw count is what makes
trajectories bit-reproducible regardless of thread count and lets a coarse
step reuse the draws of two fine steps for common-random-number dt checks.
"""

from __future__ import annotations

import os
from functools import lru_cache

# Allow worker counts beyond the local core count so thread-count
# independence can be exercised on small machines.  Must happen before the
# first numba import in the process; if numba is already loaded this is a
# no-op and set_workers clamps instead.
if "NUMBA_NUM_THREADS" not in os.environ:
    os.environ["NUMBA_NUM_THREADS"] = str(max(os.cpu_count() or 1, 16))

import math

import numpy as np
import numba
from numba import njit, prange

from .params import PhysicalParams, derive, to_internal_units

# -- packed parameter layout -------------------------------------------------

IK = 0       # kappa / gamma
IDC = 1      # delta_C / gamma
IU0 = 2      # u0 / gamma
IG0 = 3      # gamma0 / gamma
IER = 4      # eta_r / gamma
IEB = 5      # eta_b / gamma
IEPS = 6     # recoil parameter epsilon
IC3 = 7      # c3_vdw (already in internal units)
IRECR = 8    # (k_opt_r / k)^2 * u2_bar
IRECB = 9    # (k_opt_b / k)^2 * u2_bar
ISR = 10     # sign of red light shift (-1)
ISB = 11     # sign of blue light shift (+1)
IFNS = 12    # field quadrature noise scale (convention factor, default 1)
NPAR = 13

# trajectory status codes
TRAPPED = 0
ESCAPED = 1
STUCK = 2
ABORTED = 3

STATUS_NAMES = ("trapped", "escaped", "stuck", "aborted")


# Quadrature noise convention factor.  The empty-cavity stationary field
# variance is <|d alpha|^2> = field_noise_scale / 4, so 4.0 treats the
# vacuum input correlator <xi xi*> = 2 kappa as a classical noise strength
# (stationary variance 1), 2.0 is the symmetric-ordering vacuum level 1/2,
# and 1.0 a quarter-strength reading.  The default matters: the trapped
# atom's equilibrium kinetic energy is nearly linear in this factor
# (roughly 0.05 + 0.07 * scale in hbar gamma at reference parameters), and
# only the full input-correlator reading reproduces the expected cavity
# cooling limit near kappa.
FIELD_NOISE_SCALE_DEFAULT = 4.0


@lru_cache(maxsize=128)
def pack_params(phys: PhysicalParams,
                field_noise_scale: float = FIELD_NOISE_SCALE_DEFAULT) -> np.ndarray:
    """Pack a parameter set into the flat internal-unit array used by kernels.

    Cached per parameter set; treat the returned array as read-only.
    """
    if field_noise_scale < 0:
        raise ValueError(f"field_noise_scale must be nonnegative, got {field_noise_scale}")
    d = derive(phys)
    g = phys.gamma
    out = np.empty(NPAR)
    out[IK] = phys.kappa / g
    out[IDC] = phys.delta_C / g
    out[IU0] = d.u0 / g
    out[IG0] = d.gamma0 / g
    out[IER] = phys.eta_r / g
    out[IEB] = phys.eta_b / g
    out[IEPS] = d.epsilon
    out[IC3] = phys.c3_vdw
    out[IRECR] = (phys.k_opt_r / phys.k) ** 2 * phys.u2_bar
    out[IRECB] = (phys.k_opt_b / phys.k) ** 2 * phys.u2_bar
    out[ISR] = d.sign_r
    out[ISB] = d.sign_b
    out[IFNS] = field_noise_scale
    out.setflags(write=False)
    return out


def set_workers(n: int) -> int:
    """Set the kernel thread count, clamped to what the runtime allows."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    avail = numba.config.NUMBA_NUM_THREADS
    actual = min(n, avail)
    numba.set_num_threads(actual)
    return actual


# -- scalar physics ----------------------------------------------------------

@njit(cache=True)
def photon_number(u, eta, s, P):
    """Steady-state photon number as a function of u = f_i(x)^2."""
    ke = P[IK] + P[IG0] * u
    de = P[IDC] - s * P[IU0] * u
    return eta * eta / (ke * ke + de * de)


@njit(cache=True)
def mode_integral(u, s, P):
    """Integral of du' / [(kappa + Gamma0 u')^2 + (delta_C - s U0 u')^2] from 0 to u.

    The denominator is A u'^2 + B u' + C with discriminant
    B^2 - 4AC = -4 (Gamma0 delta_C + s U0 kappa)^2 <= 0, so the antiderivative
    is an arctangent except in two degenerate limits handled explicitly.
    """
    A = P[IG0] * P[IG0] + P[IU0] * P[IU0]
    if A == 0.0:
        # decoupled atom: flat denominator
        return u / (P[IK] * P[IK] + P[IDC] * P[IDC])
    B = 2.0 * (P[IK] * P[IG0] - P[IDC] * s * P[IU0])
    d = P[IG0] * P[IDC] + s * P[IU0] * P[IK]
    if d != 0.0:
        rt = 2.0 * abs(d)
        return (2.0 / rt) * (math.atan((2.0 * A * u + B) / rt) - math.atan(B / rt))
    # repeated root; it lies outside [0, u] because the denominator stays
    # >= kappa^2 > 0 there
    up = -B / (2.0 * A)
    return (1.0 / (up - u) - 1.0 / up) / A


@njit(cache=True)
def potential(x, P):
    """Adiabatic dipole potential plus surface van der Waals term."""
    u = math.exp(-2.0 * x)
    ub = u * u
    nr = P[IER] * P[IER] * mode_integral(u, P[ISR], P)
    nb = P[IEB] * P[IEB] * mode_integral(ub, P[ISB], P)
    return (P[ISR] * P[IU0] * (nr - 0.5 * u)
            + P[ISB] * P[IU0] * (nb - 0.5 * ub)
            - P[IC3] / (x * x * x))


@njit(cache=True)
def alpha_steady(x, P):
    """Steady-state field amplitudes (alpha_r, alpha_b) at fixed position."""
    fr2 = math.exp(-2.0 * x)
    fb2 = fr2 * fr2
    den_r = (P[IK] + P[IG0] * fr2) - 1j * (P[IDC] - P[ISR] * P[IU0] * fr2)
    den_b = (P[IK] + P[IG0] * fb2) - 1j * (P[IDC] - P[ISB] * P[IU0] * fb2)
    return P[IER] / den_r, P[IEB] / den_b


@njit(cache=True)
def drift(x, p, ar, ab, P):
    """Deterministic part of the coupled atom-field equations of motion."""
    fr2 = math.exp(-2.0 * x)
    fb2 = fr2 * fr2
    nr = ar.real * ar.real + ar.imag * ar.imag
    nb = ab.real * ab.real + ab.imag * ab.imag
    x2 = x * x
    dx = P[IEPS] * p
    dp = (2.0 * P[ISR] * P[IU0] * (nr - 0.5) * fr2
          + 4.0 * P[ISB] * P[IU0] * (nb - 0.5) * fb2
          - 3.0 * P[IC3] / (x2 * x2))
    dar = P[IER] + (1j * (P[IDC] - P[ISR] * P[IU0] * fr2) - (P[IK] + P[IG0] * fr2)) * ar
    dab = P[IEB] + (1j * (P[IDC] - P[ISB] * P[IU0] * fb2) - (P[IK] + P[IG0] * fb2)) * ab
    return dx, dp, dar, dab


@njit(cache=True)
def drift_frozen(x, p, P):
    """Drift of (x, p) with the fields pinned to their steady state."""
    u = math.exp(-2.0 * x)
    ub = u * u
    nr = photon_number(u, P[IER], P[ISR], P)
    nb = photon_number(ub, P[IEB], P[ISB], P)
    x2 = x * x
    dx = P[IEPS] * p
    dp = (2.0 * P[ISR] * P[IU0] * (nr - 0.5) * u
          + 4.0 * P[ISB] * P[IU0] * (nb - 0.5) * ub
          - 3.0 * P[IC3] / (x2 * x2))
    return dx, dp


@njit(cache=True)
def noise_entries(x, ar, ab, P):
    """Nonzero entries of the 5x5 diffusion matrix at the current state.

    Returns (var_p, var_qr, var_qb, c_rr, c_ri, c_br, c_bi) where var_q* are
    the per-quadrature field variances and c_* the momentum-quadrature
    covariances (c_rr = cov(xi_p, Re xi_r) and so on).  All are spectral
    densities: the covariance of the increments over dt is entries * dt.
    """
    fr = math.exp(-x)
    fr2 = fr * fr
    fb = fr2
    fb2 = fb * fb
    dfr = -fr
    dfb = -2.0 * fb
    nr = ar.real * ar.real + ar.imag * ar.imag
    nb = ab.real * ab.real + ab.imag * ab.imag
    var_qr = 0.25 * P[IFNS] * (P[IK] + P[IG0] * fr2)
    var_qb = 0.25 * P[IFNS] * (P[IK] + P[IG0] * fb2)
    # recoil diffusion: only the photons above the vacuum level kick the atom
    wr = nr - 0.5
    if wr < 0.0:
        wr = 0.0
    wb = nb - 0.5
    if wb < 0.0:
        wb = 0.0
    var_p = 2.0 * P[IG0] * (wr * (dfr * dfr + P[IRECR] * fr2)
                            + wb * (dfb * dfb + P[IRECB] * fb2))
    c_rr = -P[IG0] * fr * dfr * ar.imag
    c_ri = P[IG0] * fr * dfr * ar.real
    c_br = -P[IG0] * fb * dfb * ab.imag
    c_bi = P[IG0] * fb * dfb * ab.real
    return var_p, var_qr, var_qb, c_rr, c_ri, c_br, c_bi


@njit(cache=True)
def rk4_full(x, p, ar, ab, dt, P):
    """Classic RK4 step of the full deterministic system."""
    h = 0.5 * dt
    k1x, k1p, k1r, k1b = drift(x, p, ar, ab, P)
    k2x, k2p, k2r, k2b = drift(x + h * k1x, p + h * k1p, ar + h * k1r, ab + h * k1b, P)
    k3x, k3p, k3r, k3b = drift(x + h * k2x, p + h * k2p, ar + h * k2r, ab + h * k2b, P)
    k4x, k4p, k4r, k4b = drift(x + dt * k3x, p + dt * k3p, ar + dt * k3r, ab + dt * k3b, P)
    w = dt / 6.0
    return (x + w * (k1x + 2.0 * (k2x + k3x) + k4x),
            p + w * (k1p + 2.0 * (k2p + k3p) + k4p),
            ar + w * (k1r + 2.0 * (k2r + k3r) + k4r),
            ab + w * (k1b + 2.0 * (k2b + k3b) + k4b))


@njit(cache=True)
def rk4_frozen(x, p, dt, P):
    """RK4 step of (x, p) on the adiabatic potential (fields at steady state)."""
    h = 0.5 * dt
    k1x, k1p = drift_frozen(x, p, P)
    k2x, k2p = drift_frozen(x + h * k1x, p + h * k1p, P)
    k3x, k3p = drift_frozen(x + h * k2x, p + h * k2p, P)
    k4x, k4p = drift_frozen(x + dt * k3x, p + dt * k3p, P)
    w = dt / 6.0
    return (x + w * (k1x + 2.0 * (k2x + k3x) + k4x),
            p + w * (k1p + 2.0 * (k2p + k3p) + k4p))


# -- per-trajectory RNG ------------------------------------------------------

_U64 = np.uint64
_SM_GAMMA = _U64(0x9E3779B97F4A7C15)
_SM_M1 = _U64(0xBF58476D1CE4E5B9)
_SM_M2 = _U64(0x94D049BB133111EB)
_S30 = _U64(30)
_S27 = _U64(27)
_S31 = _U64(31)
_S17 = _U64(17)
_S23 = _U64(23)
_S41 = _U64(41)
_S45 = _U64(45)
_S19 = _U64(19)
_S11 = _U64(11)
_TWO_M53 = 2.0 ** -53


@njit(cache=True)
def _splitmix64(z):
    z = z + _SM_GAMMA
    w = z
    w = (w ^ (w >> _S30)) * _SM_M1
    w = (w ^ (w >> _S27)) * _SM_M2
    return z, w ^ (w >> _S31)


@njit(cache=True)
def seed_state(word):
    """Expand one 64-bit word into a full xoshiro256++ state."""
    z = word
    z, s0 = _splitmix64(z)
    z, s1 = _splitmix64(z)
    z, s2 = _splitmix64(z)
    z, s3 = _splitmix64(z)
    if s0 | s1 | s2 | s3 == _U64(0):
        s0 = _SM_GAMMA
    return s0, s1, s2, s3


@njit(cache=True)
def xoshiro_next(s0, s1, s2, s3):
    t1 = s0 + s3
    res = ((t1 << _S23) | (t1 >> _S41)) + s0
    t = s1 << _S17
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = (s3 << _S45) | (s3 >> _S19)
    return res, s0, s1, s2, s3


# Rational approximation of the normal quantile function (max absolute error
# ~1.15e-9, verified in the tests against scipy).  Chosen over Box-Muller so
# each normal costs exactly one uniform: fixed draw counts keep parallel
# streams reproducible and dt-refined paths pairable.
_PA1 = -3.969683028665376e+01
_PA2 = 2.209460984245205e+02
_PA3 = -2.759285104469687e+02
_PA4 = 1.383577518672690e+02
_PA5 = -3.066479806614716e+01
_PA6 = 2.506628277459239e+00
_PB1 = -5.447609879822406e+01
_PB2 = 1.615858368580409e+02
_PB3 = -1.556989798598866e+02
_PB4 = 6.680131188771972e+01
_PB5 = -1.328068155288572e+01
_PC1 = -7.784894002430293e-03
_PC2 = -3.223964580411365e-01
_PC3 = -2.400758277161838e+00
_PC4 = -2.549732539343734e+00
_PC5 = 4.374664141464968e+00
_PC6 = 2.938163982698783e+00
_PD1 = 7.784695709041462e-03
_PD2 = 3.224671290700398e-01
_PD3 = 2.445134137142996e+00
_PD4 = 3.754408661907416e+00
_P_LOW = 0.02425


@njit(cache=True)
def norm_ppf(u):
    """Inverse standard normal CDF for u in (0, 1)."""
    if u < _P_LOW:
        q = math.sqrt(-2.0 * math.log(u))
        return ((((((_PC1 * q + _PC2) * q + _PC3) * q + _PC4) * q + _PC5) * q + _PC6)
                / ((((_PD1 * q + _PD2) * q + _PD3) * q + _PD4) * q + 1.0))
    if u > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - u))
        return -((((((_PC1 * q + _PC2) * q + _PC3) * q + _PC4) * q + _PC5) * q + _PC6)
                 / ((((_PD1 * q + _PD2) * q + _PD3) * q + _PD4) * q + 1.0))
    q = u - 0.5
    r = q * q
    return ((((((_PA1 * r + _PA2) * r + _PA3) * r + _PA4) * r + _PA5) * r + _PA6) * q
            / (((((_PB1 * r + _PB2) * r + _PB3) * r + _PB4) * r + _PB5) * r + 1.0))


@njit(cache=True)
def next_normal(s0, s1, s2, s3):
    r, s0, s1, s2, s3 = xoshiro_next(s0, s1, s2, s3)
    # map to bin centers of (0, 1): never exactly 0 or 1
    u = (np.float64(r >> _S11) + 0.5) * _TWO_M53
    return norm_ppf(u), s0, s1, s2, s3


@njit(cache=True)
def normals_from_word(word, n):
    """First n normals of the stream seeded by word (test and analysis aid)."""
    out = np.empty(n)
    s0, s1, s2, s3 = seed_state(word)
    for i in range(n):
        out[i], s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
    return out


# -- trajectory kernel -------------------------------------------------------

MODE_NOISY = 0
MODE_DETERMINISTIC = 1
MODE_FROZEN = 2


@njit(cache=True)
def integrate(P, x, p, ar, ab, seed_word, dt, n_steps, mode, pair,
              x_escape, x_stick, guard_steps, bin_stride, e_row, ekin_row,
              rec_stride, rec, outer_e, outer_t):
    """Integrate one trajectory.

    mode selects the stochastic stepper (0), deterministic RK4 (1) or RK4 on
    the adiabatic potential with fields pinned to steady state (2).  The
    stochastic step is an Ito split step: the covariance is evaluated at the
    step start, the deterministic flow advances with RK4, and the Gaussian
    increments are added on top.  With pair set, a noisy step consumes the
    normals of two half-steps and sums them, so a dt run and a pair 2*dt
    run share one Brownian path.

    Rows of the optional output buffers are written at fixed strides of the
    step index; rows never reached (early termination) are left untouched.
    Returns (status, steps_done, bounces, n_outer, n_fallback, x, p, ar, ab).
    """
    s0, s1, s2, s3 = seed_state(seed_word)
    status = TRAPPED
    steps_done = n_steps
    bounces = 0
    n_outer = 0
    n_fallback = 0
    last_inner = -guard_steps - 1
    last_outer = -guard_steps - 1
    sqdt = math.sqrt(dt)
    for k in range(n_steps + 1):
        if bin_stride > 0 and k % bin_stride == 0:
            j = k // bin_stride
            if j < e_row.shape[0]:
                ek = 0.5 * P[IEPS] * p * p
                e_row[j] = ek + potential(x, P)
                ekin_row[j] = ek
        if rec_stride > 0 and k % rec_stride == 0:
            i = k // rec_stride
            if i < rec.shape[0]:
                rec[i, 0] = k * dt
                rec[i, 1] = x
                rec[i, 2] = p
                rec[i, 3] = ar.real
                rec[i, 4] = ar.imag
                rec[i, 5] = ab.real
                rec[i, 6] = ab.imag
                rec[i, 7] = 0.5 * P[IEPS] * p * p + potential(x, P)
        if k == n_steps:
            break
        p_prev = p
        if mode == MODE_NOISY:
            # covariance at the step start (Ito, non-anticipating)
            var_p, var_qr, var_qb, c_rr, c_ri, c_br, c_bi = noise_entries(x, ar, ab, P)
            sig_r = math.sqrt(var_qr)
            sig_b = math.sqrt(var_qb)
            if sig_r > 0.0:
                l1 = c_rr / sig_r
                l2 = c_ri / sig_r
            else:
                l1 = 0.0
                l2 = 0.0
            if sig_b > 0.0:
                l3 = c_br / sig_b
                l4 = c_bi / sig_b
            else:
                l3 = 0.0
                l4 = 0.0
            resid = var_p - (l1 * l1 + l2 * l2 + l3 * l3 + l4 * l4)
            if resid >= 0.0:
                lp = math.sqrt(resid)
            else:
                # numerically indefinite arrowhead: drop the cross terms,
                # keep the exact marginals
                l1 = 0.0
                l2 = 0.0
                l3 = 0.0
                l4 = 0.0
                lp = math.sqrt(var_p)
                n_fallback += 1
            z1, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
            z2, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
            z3, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
            z4, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
            z5, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
            if pair:
                w1, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                w2, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                w3, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                w4, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                w5, s0, s1, s2, s3 = next_normal(s0, s1, s2, s3)
                inv = 1.0 / math.sqrt(2.0)
                z1 = (z1 + w1) * inv
                z2 = (z2 + w2) * inv
                z3 = (z3 + w3) * inv
                z4 = (z4 + w4) * inv
                z5 = (z5 + w5) * inv
            # split step: fourth-order deterministic flow, then the additive
            # Gaussian increments.  A first-order drift would eat a quarter
            # of the lag-induced cooling per bounce at the default dt.
            x, p, ar, ab = rk4_full(x, p, ar, ab, dt, P)
            p = p + sqdt * (l1 * z1 + l2 * z2 + l3 * z3 + l4 * z4 + lp * z5)
            ar = ar + sqdt * sig_r * (z1 + 1j * z2)
            ab = ab + sqdt * sig_b * (z3 + 1j * z4)
        elif mode == MODE_DETERMINISTIC:
            x, p, ar, ab = rk4_full(x, p, ar, ab, dt, P)
        else:
            x, p = rk4_frozen(x, p, dt, P)
            ar, ab = alpha_steady(x, P)
        if (x != x or p != p or ar.real != ar.real or ar.imag != ar.imag
                or ab.real != ab.real or ab.imag != ab.imag):
            status = ABORTED
            steps_done = k + 1
            break
        if x <= x_stick:
            status = STUCK
            steps_done = k + 1
            break
        if x >= x_escape and p > 0.0:
            status = ESCAPED
            steps_done = k + 1
            break
        if p_prev > 0.0 and p < 0.0:
            # outer turning point; guard suppresses recrossings from chatter
            if k + 1 - last_outer > guard_steps:
                if n_outer < outer_e.shape[0]:
                    outer_e[n_outer] = 0.5 * P[IEPS] * p * p + potential(x, P)
                    outer_t[n_outer] = (k + 1) * dt
                n_outer += 1
                last_outer = k + 1
        elif p_prev < 0.0 and p > 0.0:
            if k + 1 - last_inner > guard_steps:
                bounces += 1
                last_inner = k + 1
    return status, steps_done, bounces, n_outer, n_fallback, x, p, ar, ab


@njit(cache=True, parallel=True)
def ensemble_kernel(P, dt, n_steps, words, x0s, p0s, ar0s, ab0s, mode, pair,
                    x_escape, x_stick, guard_steps, bin_stride,
                    e_rows, ekin_rows, status, steps_done, bounces,
                    n_fallback, final_x, final_p):
    """Integrate one trajectory per row of the input arrays.

    Every output is indexed by trajectory, so the result is independent of
    the thread count and of the scheduling order.
    """
    n = words.shape[0]
    rec0 = np.empty((0, 8))
    oe0 = np.empty(0)
    ot0 = np.empty(0)
    for i in prange(n):
        st, sd, bc, no_, nf, xf, pf, arf, abf = integrate(
            P, x0s[i], p0s[i], ar0s[i], ab0s[i], words[i], dt, n_steps, mode,
            pair, x_escape, x_stick, guard_steps, bin_stride,
            e_rows[i], ekin_rows[i], 0, rec0, oe0, ot0)
        status[i] = st
        steps_done[i] = sd
        bounces[i] = bc
        n_fallback[i] = nf
        final_x[i] = xf
        final_p[i] = pf
