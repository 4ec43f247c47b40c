"""Stochastic equations of motion for the coupled atom-field system.

State is (x, p, alpha_r, alpha_b) in internal units.  The deterministic part
couples the atomic center of mass to the two cavity amplitudes; the noise is
a five-dimensional correlated Gaussian over
(xi_p, Re xi_r, Im xi_r, Re xi_b, Im xi_b): photon-recoil momentum diffusion,
vacuum plus scattering fluctuations of each quadrature, and the
momentum-quadrature cross terms that encode where in the mode the photons
are scattered.

The covariance matrix is an arrowhead (fields mutually uncorrelated, each
correlated with p), so its Cholesky factor is analytic with the momentum
ordered last.  When roundoff drives the Schur complement of the momentum
variance negative, sampling falls back to the exact marginals without cross
correlations and counts the event in DIAGNOSTICS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import engine, fields
from .params import PhysicalParams

# process-wide counters; reset by tests that assert on them
DIAGNOSTICS = {"cholesky_fallbacks": 0}


class StepTooLarge(ValueError):
    """dt violates the stability precondition of the stochastic stepper."""


@dataclass(frozen=True)
class SystemState:
    """Phase-space point: position, momentum and the two field amplitudes."""

    x: float
    p: float
    alpha_r: complex
    alpha_b: complex

    def as_array(self) -> np.ndarray:
        """Flatten to (x, p, Re a_r, Im a_r, Re a_b, Im a_b)."""
        return np.array([self.x, self.p,
                         self.alpha_r.real, self.alpha_r.imag,
                         self.alpha_b.real, self.alpha_b.imag])


@dataclass(frozen=True)
class NoiseCovariance:
    """5x5 covariance over (xi_p, Re xi_r, Im xi_r, Re xi_b, Im xi_b).

    matrix holds spectral densities: increments over dt have covariance
    matrix * dt.
    """

    matrix: np.ndarray


def steady_state(x: float, p: float, params: PhysicalParams) -> SystemState:
    """State at (x, p) with both fields at their local steady state."""
    ar, ab = engine.alpha_steady(float(x), engine.pack_params(params))
    return SystemState(x=float(x), p=float(p), alpha_r=ar, alpha_b=ab)


def drift(state: SystemState, params: PhysicalParams) -> SystemState:
    """Deterministic time derivative, returned as a state-shaped object."""
    P = engine.pack_params(params)
    dx, dp, dar, dab = engine.drift(state.x, state.p, state.alpha_r,
                                    state.alpha_b, P)
    return SystemState(x=dx, p=dp, alpha_r=dar, alpha_b=dab)


def noise_covariance(state: SystemState, params: PhysicalParams,
                     field_noise_scale: float = engine.FIELD_NOISE_SCALE_DEFAULT,
                     ) -> NoiseCovariance:
    """Analytic diffusion matrix at the current state.

    field_noise_scale multiplies the quadrature variances only; the default
    4.0 sets the empty-cavity field variance to the vacuum input-correlator
    level <|d alpha|^2> = 1 (2.0 would be the symmetric-ordering 1/2).
    """
    P = engine.pack_params(params, field_noise_scale)
    var_p, var_qr, var_qb, c_rr, c_ri, c_br, c_bi = engine.noise_entries(
        state.x, state.alpha_r, state.alpha_b, P)
    m = np.zeros((5, 5))
    m[0, 0] = var_p
    m[1, 1] = m[2, 2] = var_qr
    m[3, 3] = m[4, 4] = var_qb
    m[0, 1] = m[1, 0] = c_rr
    m[0, 2] = m[2, 0] = c_ri
    m[0, 3] = m[3, 0] = c_br
    m[0, 4] = m[4, 0] = c_bi
    return NoiseCovariance(matrix=m)


def sample_noise(cov: NoiseCovariance, dt: float, rng: np.random.Generator,
                 size: int | None = None) -> np.ndarray:
    """Draw increments over dt from the arrowhead covariance.

    Returns shape (5,) for size None, else (size, 5), ordered like the
    covariance.  Uses the analytic Cholesky factor with the momentum as the
    arrow hub; on numerical indefiniteness drops the cross correlations
    (exact marginals) and increments DIAGNOSTICS["cholesky_fallbacks"].
    """
    m = cov.matrix
    if m.shape != (5, 5):
        raise ValueError(f"covariance must be 5x5, got {m.shape}")
    sig = np.sqrt(np.diag(m)[1:])
    with np.errstate(invalid="ignore"):
        l = np.where(sig > 0, m[0, 1:] / sig, 0.0)
    resid = m[0, 0] - float(l @ l)
    if resid < 0:
        l = np.zeros(4)
        resid = m[0, 0]
        DIAGNOSTICS["cholesky_fallbacks"] += 1
    lp = math.sqrt(resid)
    n = 1 if size is None else size
    z = rng.standard_normal((n, 5))
    out = np.empty((n, 5))
    out[:, 1:] = z[:, :4] * sig
    out[:, 0] = z[:, :4] @ l + lp * z[:, 4]
    out *= math.sqrt(dt)
    return out[0] if size is None else out


@lru_cache(maxsize=64)
def _dt_limit(params: PhysicalParams) -> float:
    """Stability bound 0.1 / max(kappa, |delta_C|, omega_trap) in 1/gamma."""
    scales = [params.kappa / params.gamma, abs(params.delta_C) / params.gamma]
    try:
        scales.append(fields.characterize_trap(params).omega_trap / params.gamma)
    except fields.NoTrapError:
        pass
    return 0.1 / max(scales)


def step_deterministic(state: SystemState, dt: float, params: PhysicalParams,
                       frozen_fields: bool = False) -> SystemState:
    """One RK4 step of the noiseless dynamics.

    With frozen_fields the amplitudes are pinned to their position-dependent
    steady state and only (x, p) evolve; this motion conserves mechanical
    energy on the adiabatic potential and serves as an integrator oracle.
    """
    P = engine.pack_params(params)
    if frozen_fields:
        x, p = engine.rk4_frozen(state.x, state.p, dt, P)
        ar, ab = engine.alpha_steady(x, P)
        return SystemState(x=x, p=p, alpha_r=ar, alpha_b=ab)
    x, p, ar, ab = engine.rk4_full(state.x, state.p, state.alpha_r,
                                   state.alpha_b, dt, P)
    return SystemState(x=x, p=p, alpha_r=ar, alpha_b=ab)


def step_stochastic(state: SystemState, dt: float, params: PhysicalParams,
                    rng: np.random.Generator,
                    field_noise_scale: float = engine.FIELD_NOISE_SCALE_DEFAULT,
                    ) -> SystemState:
    """One Ito split step: RK4 deterministic flow plus Gaussian increments.

    The noise covariance is evaluated at the step start (non-anticipating),
    so the scheme keeps Ito semantics while resolving the deterministic
    field lag to fourth order; a first-order drift loses a quarter of the
    per-bounce cooling at the default dt.  Raises StepTooLarge when dt
    exceeds 0.1 over the fastest system rate (field decay, detuning or trap
    oscillation).
    """
    limit = _dt_limit(params)
    if dt > limit:
        raise StepTooLarge(
            f"dt = {dt:.3g} exceeds the stability limit {limit:.3g} "
            "(0.1 / fastest rate in units of 1/gamma)")
    P = engine.pack_params(params, field_noise_scale)
    cov = noise_covariance(state, params, field_noise_scale)
    w = sample_noise(cov, dt, rng)
    x, p, ar, ab = engine.rk4_full(state.x, state.p, state.alpha_r,
                                   state.alpha_b, dt, P)
    return SystemState(
        x=x,
        p=p + w[0],
        alpha_r=ar + complex(w[1], w[2]),
        alpha_b=ab + complex(w[3], w[4]),
    )
