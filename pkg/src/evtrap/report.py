"""Output rendering: provenance-stamped CSV tables, summaries and figures.

Every file starts with comment lines carrying the fully resolved
configuration, so any result can be traced to and reproduced from the exact
settings that made it.  Formatting is fixed ('%.12g', '\n' newlines) so
identical runs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import RunConfig, provenance_lines
from .ensemble import EnsembleStats, TrajectoryOutcome
from .fields import TrapProfile

_FMT = "%.12g"


def header(cfg: RunConfig, title: str) -> str:
    lines = [f"# evtrap {title}"]
    lines += [f"# {line}" for line in provenance_lines(cfg)]
    lines.append("#")
    return "\n".join(lines) + "\n"


def write_table(path: str | Path, cfg: RunConfig, title: str,
                columns: dict[str, np.ndarray]) -> None:
    """Write named columns as a comma-delimited table with provenance header."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    with open(path, "w", newline="\n") as fh:
        fh.write(header(cfg, title))
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(_FMT % v for v in row) + "\n")


def write_summary(path: str | Path, cfg: RunConfig, title: str,
                  entries: list[tuple[str, object]]) -> None:
    """Write a key = value summary document with provenance header."""
    with open(path, "w", newline="\n") as fh:
        fh.write(header(cfg, title))
        for key, value in entries:
            if isinstance(value, float):
                fh.write(f"{key} = {_FMT % value}\n")
            else:
                fh.write(f"{key} = {value}\n")


# -- figures -----------------------------------------------------------------

def render_potential(path: str | Path, scan: dict, profile: TrapProfile | None) -> None:
    """Potential landscape and photon numbers along the trap axis."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.8))
    x = scan["x"]
    ax1.plot(x, scan["U_total"], "C0-", label="U total")
    ax1.plot(x, scan["U_vdw"], "C3--", lw=1, label="van der Waals")
    ax1.axhline(0.0, color="0.6", lw=0.6)
    if profile is not None:
        ax1.plot([profile.x_min], [-profile.depth], "C0o", ms=4)
        ax1.annotate(f"depth {profile.depth:.2f}", (profile.x_min, -profile.depth),
                     textcoords="offset points", xytext=(6, -10), fontsize=8)
    lo = min(-1.0, (-(profile.depth) * 1.4) if profile else np.nanmin(scan["U_total"]))
    ax1.set_ylim(lo, max(4.0, (profile.barrier_height * 1.2) if profile else 4.0))
    ax1.set_xlabel("x (1/k)")
    ax1.set_ylabel(r"U ($\hbar\gamma$)")
    ax1.legend(fontsize=8)
    ax2.plot(x, scan["n_red"], "C3-", label=r"$n_r$")
    ax2.plot(x, scan["n_blue"], "C0-", label=r"$n_b$")
    ax2.set_xlabel("x (1/k)")
    ax2.set_ylabel("photon number")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_trajectory(path: str | Path, outcome: TrajectoryOutcome) -> None:
    """Position/energy and photon-number time series of one trajectory."""
    rec = outcome.record
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9.6, 5.4), sharex=True)
    t = rec[:, 0]
    ax1.plot(t, rec[:, 1], "C0-", lw=0.7)
    ax1.set_ylabel("x (1/k)", color="C0")
    ax1b = ax1.twinx()
    ax1b.plot(t, rec[:, 7], "C1-", lw=0.7)
    ax1b.set_ylabel(r"E$_{mech}$ ($\hbar\gamma$)", color="C1")
    ax1.set_title(f"outcome: {outcome.status} after {outcome.bounces} bounces",
                  fontsize=9)
    n_r = rec[:, 3] ** 2 + rec[:, 4] ** 2
    n_b = rec[:, 5] ** 2 + rec[:, 6] ** 2
    ax2.plot(t, n_r, "C3-", lw=0.7, label=r"$n_r$")
    ax2.plot(t, n_b, "C0-", lw=0.7, label=r"$n_b$")
    ax2.set_xlabel(r"t ($1/\gamma$)")
    ax2.set_ylabel("photon number")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_ensemble(path: str | Path, stats: EnsembleStats) -> None:
    """Survival probability and energy relaxation of the trapped subset."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 3.8))
    t = stats.bin_times
    ax1.plot(t, stats.p_trapped, "C0-")
    ax1.fill_between(t, stats.p_trapped - stats.p_err,
                     stats.p_trapped + stats.p_err, color="C0", alpha=0.25, lw=0)
    ax1.axhline(stats.p_plateau, color="0.6", lw=0.6, ls="--")
    ax1.set_xlabel(r"t ($1/\gamma$)")
    ax1.set_ylabel("trapped fraction")
    ax1.set_ylim(0, 1.02)
    ax1.set_title(f"plateau {stats.p_plateau:.3f} $\\pm$ {stats.p_plateau_err:.3f}",
                  fontsize=9)
    ax2.plot(t, stats.e_mech, "C1-", label=r"$\langle E_{mech}\rangle$")
    ax2.plot(t, stats.e_kin, "C2-", label=r"$\langle E_{kin}\rangle$")
    ax2.set_xlabel(r"t ($1/\gamma$)")
    ax2.set_ylabel(r"energy ($\hbar\gamma$)")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
