"""Physical parameters of the bichromatic evanescent-wave cavity trap.

Laboratory-frame inputs (SI angular frequencies), the derived dispersive
quantities obtained by adiabatic elimination of the atomic excited state,
and the scaling into internal simulation units: time 1/gamma, length 1/k,
momentum hbar*k, energy hbar*gamma.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy import constants as const

HBAR = const.hbar

# Rb-85 ground-state atom; red mode near the D1 line (795 nm), blue mode
# near the D2 line (780 nm).  The red evanescent decay length 1/k = 0.3 um
# sets the length unit; the blue mode decays twice as fast by geometry.
RB85_MASS = 84.911789738 * const.atomic_mass
LAMBDA_RED = 795e-9
LAMBDA_BLUE = 780e-9

# Pump detuning signs: red mode pumped below atomic resonance (attractive),
# blue mode pumped above (repulsive).
SIGN_RED = -1.0
SIGN_BLUE = +1.0


class ParamsError(ValueError):
    """Parameter set violates a validity constraint."""


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory-frame parameters.  All rates are angular frequencies in s^-1.

    Defaults correspond to a realistic Rb-85 microtoroid setup: gamma/2pi
    ~ 3 MHz, strong dispersive coupling (g = 2.5 gamma at large atom-pump
    detuning), a good cavity (kappa = gamma/2) pumped slightly below both
    mode resonances.
    """

    gamma: float = 2e7           # atomic dipole decay rate
    kappa: float = 1e7           # cavity field decay rate (both modes)
    g: float = 5e7               # atom-cavity coupling at the surface
    delta_A: float = 2e10        # magnitude of the atom-pump detuning
    delta_C: float = -8e6        # pump-cavity detuning, negative (below resonance)
    eta_r: float = 1.2e9         # red pump amplitude
    eta_b: float = 1.5e9         # blue pump amplitude
    k: float = 1.0 / 0.3e-6      # red evanescent decay constant, m^-1
    mass: float = RB85_MASS      # atomic mass, kg
    c3_vdw: float = 5e-3         # surface van der Waals coefficient, hbar*gamma / (k*x)^3
    u2_bar: float = 0.4          # angular average of cos^2 over the dipole emission pattern
    k_opt_r: float = 2 * math.pi / LAMBDA_RED   # optical wavenumber, red mode, m^-1
    k_opt_b: float = 2 * math.pi / LAMBDA_BLUE  # optical wavenumber, blue mode, m^-1


@dataclass(frozen=True)
class DerivedParams:
    """Quantities obtained from adiabatic elimination of the atomic excited state."""

    u0: float          # light shift per photon, s^-1
    gamma0: float      # photon scattering rate per photon, s^-1
    epsilon: float     # recoil parameter hbar k^2 / (M gamma), dimensionless
    n_sat: float       # photon number scale where the two-level atom saturates
    n_empty_r: float   # red intracavity photon number without the atom
    n_empty_b: float   # blue intracavity photon number without the atom
    sign_r: float = SIGN_RED
    sign_b: float = SIGN_BLUE


def default_paper_params() -> PhysicalParams:
    """Reference parameter set used throughout (the dataclass defaults)."""
    return PhysicalParams()


def validate(p: PhysicalParams) -> None:
    """Raise ParamsError if any constraint is violated."""
    if not (p.gamma > 0):
        raise ParamsError(f"gamma must be positive, got {p.gamma}")
    if not (p.kappa > 0):
        raise ParamsError(f"kappa must be positive, got {p.kappa}")
    if not (p.k > 0):
        raise ParamsError(f"k must be positive, got {p.k}")
    if not (p.mass > 0):
        raise ParamsError(f"mass must be positive, got {p.mass}")
    # g = 0 or a single switched-off pump are legitimate test configurations
    # (empty cavity, single-mode trap), so couplings are only required
    # nonnegative.
    if p.g < 0:
        raise ParamsError(f"g must be nonnegative, got {p.g}")
    if p.eta_r < 0 or p.eta_b < 0:
        raise ParamsError(f"pump amplitudes must be nonnegative, got eta_r={p.eta_r}, eta_b={p.eta_b}")
    if p.delta_A < 0:
        raise ParamsError(f"delta_A is a detuning magnitude and must be nonnegative, got {p.delta_A}")
    if not (p.delta_C < 0):
        raise ParamsError(f"delta_C must be negative (pump below cavity resonance), got {p.delta_C}")
    if p.c3_vdw < 0:
        raise ParamsError(f"c3_vdw must be nonnegative, got {p.c3_vdw}")
    if not (0 < p.u2_bar <= 1):
        raise ParamsError(f"u2_bar must lie in (0, 1], got {p.u2_bar}")
    if not (p.k_opt_r > 0 and p.k_opt_b > 0):
        raise ParamsError("optical wavenumbers must be positive")
    for name in ("gamma", "kappa", "g", "delta_A", "delta_C", "eta_r", "eta_b",
                 "k", "mass", "c3_vdw", "u2_bar", "k_opt_r", "k_opt_b"):
        if not math.isfinite(getattr(p, name)):
            raise ParamsError(f"{name} must be finite")


def derive(p: PhysicalParams) -> DerivedParams:
    """Compute the adiabatically eliminated quantities.

    Pure function of the inputs: equal inputs give bit-equal outputs.

    Raises
    ------
    ParamsError
        If the inputs are invalid, or if the recoil parameter epsilon >= 1
        (the semiclassical timescale separation is gone).

    Warns
    -----
    UserWarning
        If epsilon >= 0.1: marginal timescale separation, results are
        quantitatively suspect.
    """
    validate(p)
    d2 = p.delta_A * p.delta_A + p.gamma * p.gamma
    u0 = p.g * p.g * p.delta_A / d2
    gamma0 = p.g * p.g * p.gamma / d2
    # saturation photon number of the eliminated transition; infinite when
    # the atom is decoupled
    n_sat = d2 / (2 * p.g * p.g) if p.g > 0 else math.inf
    epsilon = HBAR * p.k * p.k / (p.mass * p.gamma)
    if epsilon >= 1:
        raise ParamsError(
            f"recoil parameter epsilon = {epsilon:.3g} >= 1: "
            "semiclassical description invalid")
    if epsilon >= 0.1:
        warnings.warn(
            f"recoil parameter epsilon = {epsilon:.3g} >= 0.1: "
            "timescale separation is marginal", stacklevel=2)
    dc2 = p.delta_C * p.delta_C + p.kappa * p.kappa
    return DerivedParams(
        u0=u0,
        gamma0=gamma0,
        epsilon=epsilon,
        n_sat=n_sat,
        n_empty_r=p.eta_r * p.eta_r / dc2,
        n_empty_b=p.eta_b * p.eta_b / dc2,
    )


@dataclass(frozen=True)
class UnitSystem:
    """Conversion between SI and internal units.

    Internal units: time in 1/gamma, length in 1/k, momentum in hbar*k,
    energy in hbar*gamma, rates in gamma.
    """

    gamma: float
    k: float
    mass: float

    # -- SI -> internal -------------------------------------------------
    def time_to_internal(self, t: float) -> float:
        return t * self.gamma

    def length_to_internal(self, x: float) -> float:
        return x * self.k

    def velocity_to_internal(self, v: float) -> float:
        """SI velocity to internal momentum p = M v / (hbar k)."""
        return self.mass * v / (HBAR * self.k)

    def energy_to_internal(self, e: float) -> float:
        return e / (HBAR * self.gamma)

    def rate_to_internal(self, r: float) -> float:
        return r / self.gamma

    # -- internal -> SI -------------------------------------------------
    def time_to_si(self, t: float) -> float:
        return t / self.gamma

    def length_to_si(self, x: float) -> float:
        return x / self.k

    def momentum_to_si_velocity(self, p: float) -> float:
        return p * HBAR * self.k / self.mass

    def energy_to_si(self, e: float) -> float:
        return e * HBAR * self.gamma

    def rate_to_si(self, r: float) -> float:
        return r * self.gamma


def to_internal_units(p: PhysicalParams) -> UnitSystem:
    """Unit system scaled by the given parameter set."""
    validate(p)
    return UnitSystem(gamma=p.gamma, k=p.k, mass=p.mass)
