"""Simulation configuration: TOML-subset parsing, validation and rendering.

A config file has a top-level ``seed`` and the sections ``[grid]``,
``[model]``, ``[numerics]``, ``[motion]``, ``[initial]`` and ``[time]``.
Every key is optional except ``grid.N`` and ``time.T``; defaults are those
of the corresponding dataclasses.  Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import tomli

from .core import (ConfigurationError, Grid, ModelParams, NumericsParams, make_grid,
                   validate_numerics, validate_params)
from .geometry import DomainMotion


@dataclass
class GridSpec:
    d: int = 2
    L: float = 1.0
    N: int = 64


@dataclass
class InitialData:
    """Ball-shaped initial tumor with uniform phase fractions.

    ``P_0 = alpha_P rho_f`` (likewise Q and D) on every cell the tumor mask
    leaves free, ``C_0 = c0 chi`` and ``W_0 = w0 chi`` with ``chi`` the
    smoothed indicator of the ball.
    """

    center: tuple = (0.5, 0.5)
    radius: float = 0.25
    alpha_P: float = 0.3
    alpha_Q: float = 0.2
    alpha_D: float = 0.5
    c0: float = 0.8
    w0: float = 0.5


@dataclass
class TimeSpec:
    T: float = 0.5
    snapshot_dt: float = 0.0  # 0 keeps only the initial and final states


@dataclass
class SimulationConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    model: ModelParams = field(default_factory=ModelParams)
    numerics: NumericsParams = field(default_factory=NumericsParams)
    motion: DomainMotion = field(default_factory=DomainMotion)
    initial: InitialData = field(default_factory=InitialData)
    time: TimeSpec = field(default_factory=TimeSpec)
    seed: int = 0

    def make_grid(self) -> Grid:
        return make_grid(self.grid.d, self.grid.L, self.grid.N)

    def params_hash(self) -> int:
        """Stable 64-bit digest of the canonical rendering."""
        digest = hashlib.blake2b(render_config(self).encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")


_SECTIONS = {
    "grid": GridSpec,
    "model": ModelParams,
    "numerics": NumericsParams,
    "motion": DomainMotion,
    "initial": InitialData,
    "time": TimeSpec,
}
_REQUIRED = {("grid", "N"), ("time", "T")}


def _coerce(section, name, default, value, problems):
    where = f"[{section}] {name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return value
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(x, (int, float)) for x in value):
            problems.append(f"{where}: expected a list of numbers, got {value!r}")
            return value
        return tuple(float(x) for x in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string, got {value!r}")
        return value
    return value


def parse_config(text: str) -> SimulationConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None
    problems = []
    parts = {}
    seed = raw.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append(f"seed: expected a nonnegative integer, got {seed!r}")
    for key, val in raw.items():
        if key not in _SECTIONS:
            problems.append(f"unknown top-level key or section {key!r}")
        elif not isinstance(val, dict):
            problems.append(f"{key!r} must be a [section]")
    for section, cls in _SECTIONS.items():
        table = raw.get(section, {})
        if not isinstance(table, dict):
            continue
        fields = {f.name: f for f in dataclasses.fields(cls) if not f.name.startswith("_")}
        kwargs = {}
        for name, value in table.items():
            if name not in fields:
                problems.append(f"[{section}] unknown key {name!r}")
                continue
            f = fields[name]
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            kwargs[name] = _coerce(section, name, default, value, problems)
        for sec, name in _REQUIRED:
            if sec == section and name not in table:
                problems.append(f"[{section}] missing required key {name!r}")
        parts[section] = kwargs
    if problems:
        raise ConfigurationError(problems)
    try:
        cfg = SimulationConfig(
            grid=GridSpec(**parts["grid"]),
            model=ModelParams(**parts["model"]),
            numerics=NumericsParams(**parts["numerics"]),
            motion=DomainMotion(**parts["motion"]),
            initial=InitialData(**parts["initial"]),
            time=TimeSpec(**parts["time"]),
            seed=seed,
        )
    except ConfigurationError as exc:
        raise ConfigurationError([f"[motion] {p}" for p in exc.problems]) from None
    return validate_config(cfg)


def validate_config(cfg: SimulationConfig) -> SimulationConfig:
    problems = []
    for label, check in (("grid", lambda: make_grid(cfg.grid.d, cfg.grid.L, cfg.grid.N)),
                         ("model", lambda: validate_params(cfg.model)),
                         ("numerics", lambda: validate_numerics(cfg.numerics))):
        try:
            check()
        except ConfigurationError as exc:
            problems += [f"[{label}] {p}" for p in exc.problems]
    ini = cfg.initial
    fr = (ini.alpha_P, ini.alpha_Q, ini.alpha_D)
    if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-12:
        problems.append(
            f"[initial] phase fractions must be nonnegative with alpha_P + alpha_Q + alpha_D = 1, "
            f"got sum {sum(fr):.6g}")
    if not 0 <= ini.c0 <= cfg.model.C_bar:
        problems.append(f"[initial] c0 = {ini.c0} violates C_0 <= C_bar = {cfg.model.C_bar}")
    if ini.w0 < 0:
        problems.append(f"[initial] w0 must be nonnegative, got {ini.w0}")
    if not ini.radius > 0:
        problems.append(f"[initial] radius must be positive, got {ini.radius}")
    if len(ini.center) != cfg.grid.d:
        problems.append(f"[initial] center needs {cfg.grid.d} coordinates, got {len(ini.center)}")
    elif not problems:
        margin = 3 * cfg.grid.L / cfg.grid.N
        lo = min(ini.center) - ini.radius
        hi = max(ini.center) + ini.radius
        if lo < margin or hi > cfg.grid.L - margin:
            problems.append("[initial] the initial ball must lie at least 3h inside the box")
    if len(cfg.motion.center) not in (2, cfg.grid.d):
        problems.append(f"[motion] center needs 2 or {cfg.grid.d} coordinates")
    if not (cfg.time.T > 0 and math.isfinite(cfg.time.T)):
        problems.append(f"[time] T must be positive, got {cfg.time.T}")
    if cfg.time.snapshot_dt < 0:
        problems.append(f"[time] snapshot_dt must be nonnegative, got {cfg.time.snapshot_dt}")
    if problems:
        raise ConfigurationError(problems)
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(float(x)) for x in value) + "]"
    raise TypeError(f"cannot render {value!r}")


def render_config(cfg: SimulationConfig) -> str:
    """Canonical text form; ``parse_config(render_config(c)) == c``."""
    lines = [f"seed = {cfg.seed}"]
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        lines.append("")
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            if f.name.startswith("_"):
                continue
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ------------------------------------------------------------- scenarios

def default_config(N: int = 64) -> SimulationConfig:
    """Static disk, swirled about its own center, closed kinetics.

    The motion is tangential on the boundary, so the domain stays put while
    the surrounding box material rotates.  With ``K_B = K_R = 0`` the mass
    production vanishes pointwise and the mixture constraint can be held
    to solver accuracy.
    """
    return SimulationConfig(
        grid=GridSpec(2, 1.0, N),
        motion=DomainMotion("rigid_rotation", (0.5, 0.5), 1.0, 0.0, 0.35, 0.45),
        initial=InitialData((0.5, 0.5), 0.25),
        time=TimeSpec(0.5, 0.03125),
    )


def orbit_config(N: int = 64, mu: float = 0.01, eps: float = 1e-3) -> SimulationConfig:
    """Disk carried around the box center: the boundary has a normal velocity."""
    return SimulationConfig(
        grid=GridSpec(2, 1.0, N),
        model=ModelParams(mu=mu),
        numerics=NumericsParams(eps=eps),
        motion=DomainMotion("rigid_rotation", (0.5, 0.5), 1.0, 0.0, 0.4, 0.48),
        initial=InitialData((0.5, 0.6), 0.25),
        time=TimeSpec(0.5, 0.03125),
    )


def growth_config(N: int = 64, mu: float = 0.01) -> SimulationConfig:
    """Births and clearance switched on: the mass production has nonzero mean."""
    return SimulationConfig(
        grid=GridSpec(2, 1.0, N),
        model=ModelParams(K_B=1.0, K_R=0.3, mu=mu),
        motion=DomainMotion("rigid_rotation", (0.5, 0.5), 1.0, 0.0, 0.35, 0.45),
        initial=InitialData((0.5, 0.5), 0.25, c0=0.5),
        time=TimeSpec(0.5, 0.03125),
    )


SCENARIOS = {"default": default_config, "orbit": orbit_config, "growth": growth_config}
