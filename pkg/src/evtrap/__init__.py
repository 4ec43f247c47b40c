"""Semiclassical simulator for capture and cavity cooling of a single atom
in a bichromatic evanescent-wave cavity trap."""

from .params import (PhysicalParams, DerivedParams, UnitSystem, ParamsError,
                     derive, to_internal_units, default_paper_params)
from .fields import (ModeGeometry, TrapProfile, NoTrapError, mode_f,
                     steady_state_alpha, adiabatic_potential,
                     characterize_trap, potential_scan)
from .sde import (SystemState, NoiseCovariance, StepTooLarge, drift,
                  noise_covariance, sample_noise, step_deterministic,
                  step_stochastic)
from .ensemble import (InitialCondition, TrajectoryOutcome, EnsembleStats,
                       Boundaries, classify_boundary, mechanical_energy,
                       default_drop_in, run_trajectory, run_ensemble)

__version__ = "0.1.0"

__all__ = [
    "PhysicalParams", "DerivedParams", "UnitSystem", "ParamsError",
    "derive", "to_internal_units", "default_paper_params",
    "ModeGeometry", "TrapProfile", "NoTrapError", "mode_f",
    "steady_state_alpha", "adiabatic_potential", "characterize_trap",
    "potential_scan",
    "SystemState", "NoiseCovariance", "StepTooLarge", "drift",
    "noise_covariance", "sample_noise", "step_deterministic",
    "step_stochastic",
    "InitialCondition", "TrajectoryOutcome", "EnsembleStats", "Boundaries",
    "classify_boundary", "mechanical_energy", "default_drop_in",
    "run_trajectory", "run_ensemble",
    "__version__",
]
