"""Trajectory ensembles: initial conditions, outcomes and capture statistics.

Reproducibility contract: a master seed is expanded through a SeedSequence
into one 64-bit word per trajectory index, and every trajectory integrates
its own counter-seeded stream.  Initial conditions are sampled in index
order before the kernel runs.  All kernel outputs are indexed by trajectory,
so the results are bit-identical for any worker count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import engine, fields
from .params import PhysicalParams, derive, to_internal_units
from .sde import SystemState, _dt_limit, StepTooLarge

# fraction of the trap depth at which the drop-in atom starts on the outer
# potential branch
_DROP_IN_LEVEL = 0.01
_OUTER_CAP = 4096  # staircase buffer size per trajectory


@dataclass(frozen=True)
class Boundaries:
    """Termination thresholds and the bounce-counting guard, internal units."""

    x_escape: float = 8.0     # beyond the trap tail, outward motion = escaped
    x_stick: float = 0.1      # inside the barrier, surface loss = stuck
    bounce_guard: float = 10.0  # minimum spacing between counted bounces


@dataclass(frozen=True)
class InitialCondition:
    """Initial phase-space distribution of the atom.

    kind is "fixed", "uniform" or "gaussian".  x0 is in units of 1/k; v0 is
    a laboratory velocity in m/s (converted to internal momentum through the
    unit system).  For "uniform" the widths are half-widths of a symmetric
    interval, for "gaussian" standard deviations.  Fields start at their
    local steady state alpha_ss(x0) unless alpha0 overrides them.
    """

    kind: str = "fixed"
    x0: float = 3.0
    v0: float = 0.0
    x0_width: float = 0.0
    v0_width: float = 0.0
    alpha0: tuple[complex, complex] | None = None

    def sample(self, n: int, params: PhysicalParams,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw n (x0, p0) pairs in index order; returns internal units."""
        units = to_internal_units(params)
        p0 = units.velocity_to_internal(self.v0)
        if self.kind == "fixed":
            xs = np.full(n, self.x0)
            ps = np.full(n, p0)
        elif self.kind == "uniform":
            xs = self.x0 + self.x0_width * (2.0 * rng.random(n) - 1.0)
            ps = p0 + units.velocity_to_internal(self.v0_width) * (2.0 * rng.random(n) - 1.0)
        elif self.kind == "gaussian":
            xs = self.x0 + self.x0_width * rng.standard_normal(n)
            ps = p0 + units.velocity_to_internal(self.v0_width) * rng.standard_normal(n)
        else:
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if np.any(xs <= 0):
            raise ValueError("initial condition places the atom inside the surface (x0 <= 0)")
        return xs, ps


@dataclass(frozen=True)
class TrajectoryOutcome:
    """Result of a single trajectory."""

    status: str               # "trapped" | "escaped" | "stuck" | "aborted"
    t_end: float              # time reached, internal units
    bounces: int              # counted inner turning points
    final_state: SystemState
    record: np.ndarray | None  # (n, 8): t, x, p, Re a_r, Im a_r, Re a_b, Im a_b, E
    outer_energies: np.ndarray  # mechanical energy at outer turning points
    outer_times: np.ndarray
    n_fallback: int           # Cholesky fallback count inside the kernel
    seed: int


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregated capture statistics of an ensemble run."""

    n_traj: int
    seed: int
    dt: float
    horizon: float
    bin_times: np.ndarray     # (n_bins+1,) edge times
    p_trapped: np.ndarray     # survival probability at each edge
    p_err: np.ndarray         # binomial standard error
    e_mech: np.ndarray        # mean mechanical energy over still-trapped subset
    e_kin: np.ndarray         # mean kinetic energy over still-trapped subset
    n_alive: np.ndarray       # still-trapped count per edge
    status: np.ndarray        # per-trajectory status codes (engine constants)
    t_end: np.ndarray
    bounces: np.ndarray
    n_escaped: int
    n_stuck: int
    n_trapped: int
    n_aborted: int
    p_plateau: float          # survival at the horizon
    p_plateau_err: float
    e_kin_final: float        # mean e_kin over the final 10% of edges
    fallback_total: int
    e_rows: np.ndarray | None = field(default=None, repr=False)
    ekin_rows: np.ndarray | None = field(default=None, repr=False)


def classify_boundary(state: SystemState, bounds: Boundaries = Boundaries()) -> str | None:
    """Classify a state against the termination thresholds.

    Returns "stuck", "escaped" or None (still inside the integration region).
    Escape requires outward motion: an incoming atom beyond x_escape is not
    escaping, it has not entered yet.
    """
    if state.x <= bounds.x_stick:
        return "stuck"
    if state.x >= bounds.x_escape and state.p > 0:
        return "escaped"
    return None


def mechanical_energy(state: SystemState, params: PhysicalParams) -> float:
    """Kinetic plus adiabatic potential energy, in hbar*gamma."""
    d = derive(params)
    P = engine.pack_params(params)
    return 0.5 * d.epsilon * state.p ** 2 + engine.potential(state.x, P)


def default_drop_in(params: PhysicalParams) -> InitialCondition:
    """Atom at rest on the outer branch where U(x0) = -1% of the trap depth.

    Mimics an atom arriving from free space with just enough energy removed
    to probe the capture dynamics from the well edge.
    """
    prof = fields.characterize_trap(params)
    P = engine.pack_params(params)
    target = -_DROP_IN_LEVEL * prof.depth
    x0 = float(optimize.brentq(
        lambda x: engine.potential(x, P) - target, prof.x_min, 12.0,
        xtol=1e-12, rtol=1e-14))
    return InitialCondition(kind="fixed", x0=x0, v0=0.0)


def _streams(seed: int, n: int) -> tuple[np.random.Generator, np.ndarray]:
    """Initial-condition generator and per-trajectory seed words for a master seed."""
    ss = np.random.SeedSequence(seed)
    ic_ss, traj_ss = ss.spawn(2)
    rng = np.random.Generator(np.random.PCG64(ic_ss))
    words = traj_ss.generate_state(n, dtype=np.uint64)
    return rng, words


def _check_dt(dt: float, horizon: float, params: PhysicalParams) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    limit = _dt_limit(params)
    if dt > limit:
        raise StepTooLarge(
            f"dt = {dt:.3g} exceeds the stability limit {limit:.3g} "
            "(0.1 / fastest rate in units of 1/gamma)")
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ValueError("horizon shorter than one step")
    return n_steps


def _initial_fields(ic: InitialCondition, xs: np.ndarray,
                    params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    if ic.alpha0 is not None:
        ar = np.full(xs.shape, complex(ic.alpha0[0]))
        ab = np.full(xs.shape, complex(ic.alpha0[1]))
        return ar, ab
    P = engine.pack_params(params)
    ar = np.empty(xs.shape, dtype=complex)
    ab = np.empty(xs.shape, dtype=complex)
    for i, xi in enumerate(xs):
        ar[i], ab[i] = engine.alpha_steady(xi, P)
    return ar, ab


def run_trajectory(ic: InitialCondition, params: PhysicalParams, *,
                   seed: int = 0, dt: float = 5e-3, horizon: float = 2e4,
                   noiseless: bool = False, frozen_fields: bool = False,
                   record_stride: int = 50, bounds: Boundaries = Boundaries(),
                   field_noise_scale: float = engine.FIELD_NOISE_SCALE_DEFAULT,
                   pair_noise: bool = False) -> TrajectoryOutcome:
    """Integrate a single trajectory (index 0 of the ensemble streams).

    record_stride > 0 stores every record_stride-th step in the outcome
    record; 0 disables recording.  frozen_fields implies noiseless dynamics
    on the adiabatic potential.  pair_noise makes each step consume the
    normals of two half-steps (for common-random-number dt comparisons).
    """
    n_steps = _check_dt(dt, horizon, params)
    rng, words = _streams(seed, 1)
    xs, ps = ic.sample(1, params, rng)
    ars, abs_ = _initial_fields(ic, xs, params)
    P = engine.pack_params(params, field_noise_scale)
    mode = (engine.MODE_FROZEN if frozen_fields
            else engine.MODE_DETERMINISTIC if noiseless
            else engine.MODE_NOISY)
    guard_steps = int(round(bounds.bounce_guard / dt))
    if record_stride > 0:
        rec = np.full((n_steps // record_stride + 1, 8), np.nan)
    else:
        rec = np.empty((0, 8))
    outer_e = np.empty(_OUTER_CAP)
    outer_t = np.empty(_OUTER_CAP)
    e_row = np.empty(0)
    ekin_row = np.empty(0)
    st, steps_done, bounces, n_outer, n_fb, xf, pf, arf, abf = engine.integrate(
        P, xs[0], ps[0], ars[0], abs_[0], words[0], dt, n_steps, mode,
        pair_noise, bounds.x_escape, bounds.x_stick, guard_steps,
        0, e_row, ekin_row, record_stride, rec, outer_e, outer_t)
    n_outer_kept = min(n_outer, _OUTER_CAP)
    if record_stride > 0:
        rec = rec[~np.isnan(rec[:, 0])]
    else:
        rec = None
    oe = outer_e[:n_outer_kept].copy()
    ot = outer_t[:n_outer_kept].copy()
    if ps[0] == 0.0:
        # an atom released at rest starts at an outer turning point
        e0 = mechanical_energy(SystemState(xs[0], 0.0, ars[0], abs_[0]), params)
        oe = np.concatenate(([e0], oe))
        ot = np.concatenate(([0.0], ot))
    return TrajectoryOutcome(
        status=engine.STATUS_NAMES[st],
        t_end=steps_done * dt,
        bounces=int(bounces),
        final_state=SystemState(xf, pf, arf, abf),
        record=rec,
        outer_energies=oe,
        outer_times=ot,
        n_fallback=int(n_fb),
        seed=seed,
    )


def run_ensemble(ic: InitialCondition, params: PhysicalParams, *,
                 n_traj: int = 1000, seed: int = 0, dt: float = 5e-3,
                 horizon: float = 2e4, noiseless: bool = False,
                 workers: int | None = None, bin_width: float = 50.0,
                 bounds: Boundaries = Boundaries(),
                 field_noise_scale: float = engine.FIELD_NOISE_SCALE_DEFAULT,
                 pair_noise: bool = False,
                 keep_rows: bool = False) -> EnsembleStats:
    """Integrate an ensemble and aggregate capture statistics.

    Survival and energy curves are tabulated at bin edges spaced bin_width
    apart.  Energies average over the still-trapped subpopulation at each
    edge.  workers selects the kernel thread count (None leaves it alone);
    the results are bit-identical for any choice.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    n_steps = _check_dt(dt, horizon, params)
    bin_stride = max(1, int(round(bin_width / dt)))
    n_bins = n_steps // bin_stride + 1
    rng, words = _streams(seed, n_traj)
    xs, ps = ic.sample(n_traj, params, rng)
    ars, abs_ = _initial_fields(ic, xs, params)
    P = engine.pack_params(params, field_noise_scale)
    mode = engine.MODE_DETERMINISTIC if noiseless else engine.MODE_NOISY
    guard_steps = int(round(bounds.bounce_guard / dt))
    if workers is not None:
        engine.set_workers(workers)
    e_rows = np.full((n_traj, n_bins), np.nan)
    ekin_rows = np.full((n_traj, n_bins), np.nan)
    status = np.empty(n_traj, dtype=np.int64)
    steps_done = np.empty(n_traj, dtype=np.int64)
    bounces = np.empty(n_traj, dtype=np.int64)
    n_fb = np.empty(n_traj, dtype=np.int64)
    final_x = np.empty(n_traj)
    final_p = np.empty(n_traj)
    engine.ensemble_kernel(P, dt, n_steps, words, xs, ps, ars, abs_, mode,
                           pair_noise, bounds.x_escape, bounds.x_stick,
                           guard_steps, bin_stride, e_rows, ekin_rows,
                           status, steps_done, bounces, n_fb, final_x, final_p)

    edges = np.arange(n_bins) * bin_stride
    bin_times = edges * dt
    # survivors carry status TRAPPED and count at every edge including the
    # last; early terminations count while strictly before their exit step
    alive = (status[:, None] == engine.TRAPPED) | (steps_done[:, None] > edges[None, :])
    p_trapped = alive.mean(axis=0)
    p_err = np.sqrt(p_trapped * (1.0 - p_trapped) / n_traj)
    n_alive = alive.sum(axis=0)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        # edges where nobody is alive legitimately average an empty slice
        warnings.simplefilter("ignore", RuntimeWarning)
        e_mech = np.where(n_alive > 0, np.nanmean(np.where(alive, e_rows, np.nan), axis=0), np.nan)
        e_kin = np.where(n_alive > 0, np.nanmean(np.where(alive, ekin_rows, np.nan), axis=0), np.nan)
    tail = bin_times >= 0.9 * horizon
    tail_vals = e_kin[tail]
    has_tail = bool(np.any(~np.isnan(tail_vals)))
    e_kin_final = float(np.nanmean(tail_vals)) if has_tail else float("nan")
    p_plateau = float(p_trapped[-1])
    return EnsembleStats(
        n_traj=n_traj, seed=seed, dt=dt, horizon=horizon,
        bin_times=bin_times, p_trapped=p_trapped, p_err=p_err,
        e_mech=e_mech, e_kin=e_kin, n_alive=n_alive,
        status=status, t_end=steps_done * dt, bounces=bounces,
        n_escaped=int(np.sum(status == engine.ESCAPED)),
        n_stuck=int(np.sum(status == engine.STUCK)),
        n_trapped=int(np.sum(status == engine.TRAPPED)),
        n_aborted=int(np.sum(status == engine.ABORTED)),
        p_plateau=p_plateau,
        p_plateau_err=float(np.sqrt(p_plateau * (1.0 - p_plateau) / n_traj)),
        e_kin_final=e_kin_final,
        fallback_total=int(n_fb.sum()),
        e_rows=e_rows if keep_rows else None,
        ekin_rows=ekin_rows if keep_rows else None,
    )
