"""Command line interface.

Subcommands: characterize (derived parameters and trap profile), potential
(scan of the adiabatic landscape), trajectory (single stochastic or
noiseless trajectory), ensemble (capture statistics).  All settings come
from a flat key = value config file plus overrides; every run directory
receives a resolved_config.cfg that reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration or parameter error, 3 no trap for
these parameters, 4 output I/O failure, 5 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, fields, report
from .config import ConfigError, RunConfig, dump_config, load_config, parse_assignments
from .ensemble import (Boundaries, InitialCondition, default_drop_in,
                       run_ensemble, run_trajectory)
from .params import ParamsError, derive, to_internal_units
from .sde import StepTooLarge

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_TRAP = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key = value configuration file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="assignments", help="override a single config key (repeatable)")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--dt", type=float, help="time step in 1/gamma")
    common.add_argument("--horizon", type=float, help="integration time in 1/gamma")
    common.add_argument("--n-traj", type=int, help="ensemble size")
    common.add_argument("--workers", type=int, help="kernel thread count")
    common.add_argument("--no-noise", action="store_true",
                        help="disable the stochastic terms (deterministic RK4)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    ap = argparse.ArgumentParser(
        prog="evtrap",
        description="Semiclassical capture and cavity cooling of a single atom "
                    "in a bichromatic evanescent-wave trap.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("characterize", parents=[common],
                   help="print derived parameters and trap profile")
    sub.add_parser("potential", parents=[common],
                   help="tabulate the adiabatic potential and photon numbers")
    sub.add_parser("trajectory", parents=[common],
                   help="integrate a single trajectory")
    sub.add_parser("ensemble", parents=[common],
                   help="run a trajectory ensemble and aggregate capture statistics")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then config file, then --set pairs, then named flags."""
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    pairs = []
    for item in args.assignments:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        pairs.append((key.strip(), raw))
    cfg = parse_assignments(pairs, base=cfg, origin="--set")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dt is not None:
        cfg.dt = args.dt
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if args.n_traj is not None:
        cfg.n_traj = args.n_traj
    if args.workers is not None:
        cfg.workers = args.workers
    if args.no_noise:
        cfg.noiseless = True
    if args.out is not None:
        cfg.out_dir = args.out
    if args.no_plots:
        cfg.plots = False
    return cfg


def _build_ic(cfg: RunConfig) -> InitialCondition:
    phys = cfg.physical()
    if cfg.ic_kind not in ("fixed", "uniform", "gaussian"):
        raise ConfigError(f"ic_kind must be fixed, uniform or gaussian, got {cfg.ic_kind!r}")
    if cfg.ic_x0 == "auto":
        x0 = default_drop_in(phys).x0
    else:
        try:
            x0 = float(cfg.ic_x0)
        except ValueError:
            raise ConfigError(f"ic_x0 must be a number or 'auto', got {cfg.ic_x0!r}") from None
    return InitialCondition(kind=cfg.ic_kind, x0=x0, v0=cfg.ic_v0,
                            x0_width=cfg.ic_x0_width, v0_width=cfg.ic_v0_width)


def _bounds(cfg: RunConfig) -> Boundaries:
    return Boundaries(x_escape=cfg.x_escape, x_stick=cfg.x_stick,
                      bounce_guard=cfg.bounce_guard)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.cfg").write_text(dump_config(cfg))
    return out


def cmd_characterize(cfg: RunConfig) -> int:
    phys = cfg.physical()
    d = derive(phys)
    units = to_internal_units(phys)
    prof = fields.characterize_trap(phys)
    g = phys.gamma
    lines = [
        "# derived parameters (internal units: rates in gamma, lengths in 1/k,"
        " energies in hbar*gamma)",
        f"u0_internal = {d.u0 / g:.6g}",
        f"gamma0_internal = {d.gamma0 / g:.6g}",
        f"u0_over_kappa = {d.u0 / phys.kappa:.6g}",
        f"epsilon = {d.epsilon:.6g}",
        f"n_sat = {d.n_sat:.6g}",
        f"n_empty_r = {d.n_empty_r:.6g}",
        f"n_empty_b = {d.n_empty_b:.6g}",
        "# derived parameters (SI)",
        f"u0_si = {d.u0:.6g}",
        f"gamma0_si = {d.gamma0:.6g}",
        "# trap profile (internal)",
        f"x_min = {prof.x_min:.6g}",
        f"depth = {prof.depth:.6g}",
        f"x_barrier = {prof.x_barrier:.6g}",
        f"barrier_height = {prof.barrier_height:.6g}",
        f"omega_trap_internal = {prof.omega_trap / g:.6g}",
        f"sat_max = {prof.sat_max:.6g}",
        f"closest_approach = {prof.closest_approach:.6g}",
        "# trap profile (SI)",
        f"x_min_nm = {units.length_to_si(prof.x_min) * 1e9:.6g}",
        f"depth_J = {units.energy_to_si(prof.depth):.6g}",
        f"omega_trap_si = {prof.omega_trap:.6g}",
        f"closest_approach_nm = {units.length_to_si(prof.closest_approach) * 1e9:.6g}",
    ]
    text = "\n".join(lines)
    print(text)
    out = _out_dir(cfg)
    (out / "characterize.txt").write_text(
        report.header(cfg, "characterization") + text + "\n")
    return EXIT_OK


def cmd_potential(cfg: RunConfig) -> int:
    phys = cfg.physical()
    if not (0 < cfg.grid_min < cfg.grid_max and cfg.grid_step > 0):
        raise ConfigError(
            f"bad scan grid: grid_min={cfg.grid_min}, grid_max={cfg.grid_max}, "
            f"grid_step={cfg.grid_step}")
    grid = np.arange(cfg.grid_min, cfg.grid_max, cfg.grid_step)
    scan = fields.potential_scan(phys, grid)
    out = _out_dir(cfg)
    report.write_table(out / "potential_scan.csv", cfg, "potential scan",
                       {"x": scan["x"], "U_total": scan["U_total"],
                        "U_vdw": scan["U_vdw"], "n_red": scan["n_red"],
                        "n_blue": scan["n_blue"]})
    prof = fields.characterize_trap(phys)  # raises NoTrapError -> exit 3
    if cfg.plots:
        report.render_potential(out / "potential.png", scan, prof)
    print(f"depth = {prof.depth:.6g}")
    print(f"x_min = {prof.x_min:.6g}")
    print(f"wrote {out / 'potential_scan.csv'}")
    return EXIT_OK


def cmd_trajectory(cfg: RunConfig) -> int:
    phys = cfg.physical()
    outcome = run_trajectory(
        _build_ic(cfg), phys, seed=cfg.seed, dt=cfg.dt, horizon=cfg.horizon,
        noiseless=cfg.noiseless, record_stride=cfg.record_stride,
        bounds=_bounds(cfg), field_noise_scale=cfg.field_noise_scale)
    out = _out_dir(cfg)
    rec = outcome.record
    if rec is not None:
        report.write_table(out / "trajectory.csv", cfg, "trajectory",
                           {"t": rec[:, 0], "x": rec[:, 1], "p": rec[:, 2],
                            "re_alpha_r": rec[:, 3], "im_alpha_r": rec[:, 4],
                            "re_alpha_b": rec[:, 5], "im_alpha_b": rec[:, 6],
                            "e_mech": rec[:, 7]})
    fs = outcome.final_state
    report.write_summary(out / "trajectory_summary.txt", cfg, "trajectory summary", [
        ("status", outcome.status),
        ("t_end", outcome.t_end),
        ("bounces", outcome.bounces),
        ("final_x", fs.x),
        ("final_p", fs.p),
        ("final_n_r", abs(fs.alpha_r) ** 2),
        ("final_n_b", abs(fs.alpha_b) ** 2),
        ("cholesky_fallbacks", outcome.n_fallback),
        ("seed", outcome.seed),
    ])
    if cfg.plots and rec is not None:
        report.render_trajectory(out / "trajectory.png", outcome)
    print(f"status = {outcome.status}")
    print(f"t_end = {outcome.t_end:.6g}")
    print(f"bounces = {outcome.bounces}")
    if outcome.status == "aborted":
        print("numerical abort: state left the representable domain", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_ensemble(cfg: RunConfig) -> int:
    phys = cfg.physical()
    stats = run_ensemble(
        _build_ic(cfg), phys, n_traj=cfg.n_traj, seed=cfg.seed, dt=cfg.dt,
        horizon=cfg.horizon, noiseless=cfg.noiseless,
        workers=cfg.workers if cfg.workers > 0 else None,
        bin_width=cfg.bin_width, bounds=_bounds(cfg),
        field_noise_scale=cfg.field_noise_scale)
    out = _out_dir(cfg)
    report.write_table(out / "ensemble_timeseries.csv", cfg, "ensemble time series",
                       {"t": stats.bin_times, "p_trapped": stats.p_trapped,
                        "p_err": stats.p_err, "e_mech": stats.e_mech,
                        "e_kin": stats.e_kin, "n_alive": stats.n_alive})
    report.write_summary(out / "ensemble_summary.txt", cfg, "ensemble summary", [
        ("n_traj", stats.n_traj),
        ("p_plateau", stats.p_plateau),
        ("p_plateau_err", stats.p_plateau_err),
        ("e_kin_final", stats.e_kin_final),
        ("e_mech_final", float(stats.e_mech[-1])),
        ("n_trapped", stats.n_trapped),
        ("n_escaped", stats.n_escaped),
        ("n_stuck", stats.n_stuck),
        ("n_aborted", stats.n_aborted),
        ("cholesky_fallbacks", stats.fallback_total),
        ("seed", stats.seed),
    ])
    if cfg.plots:
        report.render_ensemble(out / "ensemble.png", stats)
    print(f"p_plateau = {stats.p_plateau:.6g} +- {stats.p_plateau_err:.6g}")
    print(f"e_kin_final = {stats.e_kin_final:.6g}")
    print(f"counts: trapped={stats.n_trapped} escaped={stats.n_escaped} "
          f"stuck={stats.n_stuck} aborted={stats.n_aborted}")
    if stats.n_aborted == stats.n_traj:
        print("numerical abort: every trajectory left the representable domain",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


_COMMANDS = {
    "characterize": cmd_characterize,
    "potential": cmd_potential,
    "trajectory": cmd_trajectory,
    "ensemble": cmd_ensemble,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, ParamsError, StepTooLarge, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except fields.NoTrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_TRAP
    except OSError as exc:
        print(f"error writing output: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
