"""Flat key = value run configuration.

One namespace, no sections.  Files contain `key = value` lines, blank lines
and `#` comments.  Unknown keys are a hard error naming the key: silently
ignored typos in physics parameters are how wrong results get published.
The resolved configuration can be emitted back as a file that reproduces
the run byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

from .params import PhysicalParams


class ConfigError(ValueError):
    """Malformed configuration file, unknown key or bad value."""


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class RunConfig:
    """Fully resolved settings of one simulator invocation.

    Physical parameters are SI (rates in s^-1, lengths in m, velocities in
    m/s); run controls are internal units (time 1/gamma, length 1/k).
    """

    # -- physical parameters (see params.PhysicalParams) --
    gamma: float = PhysicalParams.gamma
    kappa: float = PhysicalParams.kappa
    g: float = PhysicalParams.g
    delta_A: float = PhysicalParams.delta_A
    delta_C: float = PhysicalParams.delta_C
    eta_r: float = PhysicalParams.eta_r
    eta_b: float = PhysicalParams.eta_b
    k: float = PhysicalParams.k
    mass: float = PhysicalParams.mass
    c3_vdw: float = PhysicalParams.c3_vdw
    u2_bar: float = PhysicalParams.u2_bar
    k_opt_r: float = PhysicalParams.k_opt_r
    k_opt_b: float = PhysicalParams.k_opt_b
    # quadrature noise convention factor: empty-cavity <|d alpha|^2> is
    # field_noise_scale / 4, so 4.0 = vacuum input-correlator reading,
    # 2.0 = symmetric-ordering vacuum level
    field_noise_scale: float = 4.0

    # -- integration and ensemble controls --
    seed: int = 12345
    dt: float = 5e-3               # step, 1/gamma
    horizon: float = 2e4           # total time, 1/gamma
    n_traj: int = 1000
    workers: int = 0               # kernel threads; 0 leaves the runtime default
    noiseless: bool = False
    record_stride: int = 50        # trajectory output every this many steps
    bin_width: float = 50.0        # ensemble statistics bin, 1/gamma
    x_escape: float = 8.0
    x_stick: float = 0.1
    bounce_guard: float = 10.0

    # -- initial condition --
    ic_kind: str = "fixed"         # fixed | uniform | gaussian
    ic_x0: str = "auto"            # position in 1/k, or "auto" for the drop-in point
    ic_v0: float = 0.0             # velocity toward/away from surface, m/s
    ic_x0_width: float = 0.0       # half-width (uniform) or sigma (gaussian), 1/k
    ic_v0_width: float = 0.0       # same for velocity, m/s

    # -- potential scan grid, 1/k --
    grid_min: float = 0.05
    grid_max: float = 5.0
    grid_step: float = 0.005

    # -- output --
    out_dir: str = "out"
    plots: bool = True

    def physical(self) -> PhysicalParams:
        return PhysicalParams(
            gamma=self.gamma, kappa=self.kappa, g=self.g,
            delta_A=self.delta_A, delta_C=self.delta_C,
            eta_r=self.eta_r, eta_b=self.eta_b, k=self.k, mass=self.mass,
            c3_vdw=self.c3_vdw, u2_bar=self.u2_bar,
            k_opt_r=self.k_opt_r, k_opt_b=self.k_opt_b)

    def items(self) -> list[tuple[str, object]]:
        """(key, value) pairs in declaration order."""
        return [(f.name, getattr(self, f.name)) for f in dc_fields(self)]


# keys that route or parallelize the run without affecting any result;
# excluded from provenance so an emitted config reruns byte-identically
# anywhere (thread-count independence is part of the kernel contract)
PROVENANCE_EXCLUDE = frozenset({"out_dir", "plots", "workers"})


def _format_value(v: object) -> str:
    # repr round-trips floats exactly, so an emitted config reruns bit-identically
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {}
for _f in dc_fields(RunConfig):
    if _f.type == "bool":
        _PARSERS[_f.name] = _parse_bool
    elif _f.type == "int":
        _PARSERS[_f.name] = int
    elif _f.type == "float":
        _PARSERS[_f.name] = float
    else:
        _PARSERS[_f.name] = str


def parse_assignments(pairs: list[tuple[str, str]],
                      base: RunConfig | None = None,
                      origin: str = "setting") -> RunConfig:
    """Apply raw (key, value-string) assignments on top of a base config."""
    cfg = base if base is not None else RunConfig()
    for key, raw in pairs:
        if key not in _PARSERS:
            raise ConfigError(f"unknown {origin} key {key!r}")
        try:
            value = _PARSERS[key](raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {origin} key {key!r}: {exc}") from None
        setattr(cfg, key, value)
    return cfg


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Parse a key = value file on top of the defaults (or a base config)."""
    pairs = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = body.split("=", 1)
        pairs.append((key.strip(), raw))
    try:
        return parse_assignments(pairs, base=base, origin="config")
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    """Render the resolved configuration as a reloadable file."""
    lines = ["# resolved evtrap configuration; rerunning with this file"]
    lines.append("# reproduces the outputs byte for byte")
    for key, value in cfg.items():
        if key not in PROVENANCE_EXCLUDE:
            lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def provenance_lines(cfg: RunConfig) -> list[str]:
    """Resolved configuration as comment lines for embedding in outputs."""
    return [f"{key} = {_format_value(value)}" for key, value in cfg.items()
            if key not in PROVENANCE_EXCLUDE]
