"""Experiment configuration: INI files, overrides, bundled presets.

A run is described by an INI file with the sections below; unknown
sections or keys are rejected so typos fail loudly.  A few keys accept
the sentinel ``auto`` and are resolved by the runner (recorded in the
manifest): ``mass = auto`` picks the double-well mass by matching the
computed tunneling doublet, ``x0/beta/span = auto`` derive packet
parameters from the potential, and ``beta = coherent`` selects the
stationary-width packet m*omega of a harmonic well.

Sections and defaults::

    [experiment] name, engine (mwls|classical|dvr|analytic|compare)
    [system]     potential (harmonic|doublewell|zero|polynomial),
                 mass, omega or tau (harmonic), center, a, b (doublewell),
                 coeffs (polynomial), x0, beta, n_particles, span
    [integration] dt0, tol, t_end, dt_min, dt_max, shrink, grow
    [mwls]       order, n_neighbors, basis (hermite|monomial)
    [dvr]        n_points, box_min, box_max, dt_out, dt_int, rho_floor
    [output]     sample_stride, snapshot_count
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "list_presets",
    "preset_text",
]

_REQUIRED = object()

_ENGINES = ("mwls", "classical", "dvr", "analytic", "compare")
_POTENTIALS = ("harmonic", "doublewell", "zero", "polynomial")
_BASES = ("hermite", "monomial")

_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "experiment": {
        "name": ("str", "run"),
        "engine": ("choice:" + "|".join(_ENGINES), "mwls"),
    },
    "system": {
        "potential": ("choice:" + "|".join(_POTENTIALS), _REQUIRED),
        "mass": ("float_or_auto", _REQUIRED),
        "omega": ("float", None),
        "tau": ("float", None),
        "center": ("float", 0.0),
        "a": ("float", 0.007),
        "b": ("float", 0.01),
        "coeffs": ("floats", None),
        "x0": ("float_or_auto", "auto"),
        "beta": ("float_auto_coherent", "auto"),
        "n_particles": ("int", 100),
        "span": ("float_or_auto", "auto"),
    },
    "integration": {
        "dt0": ("float", 0.1),
        "tol": ("float", 1e-6),
        "t_end": ("float", _REQUIRED),
        "dt_min": ("float", 1e-4),
        "dt_max": ("float", 5.0),
        "shrink": ("float", 0.75),
        "grow": ("float", 2.0),
    },
    "mwls": {
        "order": ("int", 4),
        "n_neighbors": ("int_or_auto", "auto"),
        "basis": ("choice:" + "|".join(_BASES), "hermite"),
    },
    "dvr": {
        "n_points": ("int", 200),
        "box_min": ("float", -2.5),
        "box_max": ("float", 2.5),
        "dt_out": ("float", 5.0),
        "dt_int": ("float", 1.0),
        "rho_floor": ("float", 1e-12),
    },
    "output": {
        "sample_stride": ("int", 1),
        "snapshot_count": ("int", 8),
    },
}


class ConfigError(ValueError):
    """Invalid, missing, or contradictory configuration input."""


def _convert(kind: str, raw: str, where: str):
    try:
        if kind == "str":
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.split())
        if kind == "float_or_auto":
            return "auto" if raw == "auto" else float(raw)
        if kind == "int_or_auto":
            return "auto" if raw == "auto" else int(raw)
        if kind == "float_auto_coherent":
            if raw in ("auto", "coherent"):
                return raw
            return float(raw)
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split("|")
            if raw not in options:
                raise ValueError(f"must be one of {', '.join(options)}")
            return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {raw!r} ({exc})") from None
    raise AssertionError(f"unknown schema kind {kind}")


@dataclass
class ExperimentConfig:
    """Typed, validated run description (auto sentinels unresolved)."""

    name: str
    engine: str
    potential: str
    mass: float | str
    omega: float | None
    tau: float | None
    center: float
    a: float
    b: float
    coeffs: tuple | None
    x0: float | str
    beta: float | str
    n_particles: int
    span: float | str
    dt0: float
    tol: float
    t_end: float
    dt_min: float
    dt_max: float
    shrink: float
    grow: float
    order: int
    n_neighbors: int | str
    basis: str
    dvr_n_points: int
    box_min: float
    box_max: float
    dt_out: float
    dt_int: float
    rho_floor: float
    sample_stride: int
    snapshot_count: int
    source: str = ""

    @property
    def resolved_omega(self) -> float | None:
        """omega, derived from tau when given that way."""
        if self.omega is not None:
            return self.omega
        if self.tau is not None:
            return 2.0 * math.pi / self.tau
        return None

    @property
    def resolved_neighbors(self) -> int:
        if self.n_neighbors == "auto":
            return min(2 * self.order + 2, self.n_particles - 1)
        return self.n_neighbors


_FIELD_MAP = {
    ("experiment", "name"): "name",
    ("experiment", "engine"): "engine",
    ("system", "potential"): "potential",
    ("system", "mass"): "mass",
    ("system", "omega"): "omega",
    ("system", "tau"): "tau",
    ("system", "center"): "center",
    ("system", "a"): "a",
    ("system", "b"): "b",
    ("system", "coeffs"): "coeffs",
    ("system", "x0"): "x0",
    ("system", "beta"): "beta",
    ("system", "n_particles"): "n_particles",
    ("system", "span"): "span",
    ("integration", "dt0"): "dt0",
    ("integration", "tol"): "tol",
    ("integration", "t_end"): "t_end",
    ("integration", "dt_min"): "dt_min",
    ("integration", "dt_max"): "dt_max",
    ("integration", "shrink"): "shrink",
    ("integration", "grow"): "grow",
    ("mwls", "order"): "order",
    ("mwls", "n_neighbors"): "n_neighbors",
    ("mwls", "basis"): "basis",
    ("dvr", "n_points"): "dvr_n_points",
    ("dvr", "box_min"): "box_min",
    ("dvr", "box_max"): "box_max",
    ("dvr", "dt_out"): "dt_out",
    ("dvr", "dt_int"): "dt_int",
    ("dvr", "rho_floor"): "rho_floor",
    ("output", "sample_stride"): "sample_stride",
    ("output", "snapshot_count"): "snapshot_count",
}


def _validate(cfg: ExperimentConfig) -> None:
    def fail(msg: str):
        raise ConfigError(msg)

    if cfg.potential == "harmonic":
        if (cfg.omega is None) == (cfg.tau is None):
            fail("system: harmonic potential needs exactly one of omega or tau")
        if cfg.resolved_omega is not None and not cfg.resolved_omega > 0.0:
            fail("system: omega must be positive")
        if cfg.x0 == "auto":
            fail("system: x0 = auto is only defined for the double well")
    else:
        if cfg.omega is not None or cfg.tau is not None:
            fail("system: omega/tau only apply to the harmonic potential")
        if cfg.beta == "coherent":
            fail("system: beta = coherent needs the harmonic potential")
    if cfg.potential == "doublewell":
        if not (cfg.a > 0.0 and cfg.b > 0.0):
            fail("system: double well needs a > 0 and b > 0")
    if cfg.potential == "polynomial" and not cfg.coeffs:
        fail("system: polynomial potential needs coeffs")
    if cfg.mass == "auto" and cfg.potential != "doublewell":
        fail("system: mass = auto is only defined for the double well")
    if isinstance(cfg.mass, float) and not cfg.mass > 0.0:
        fail("system: mass must be positive")
    if isinstance(cfg.beta, float) and not cfg.beta > 0.0:
        fail("system: beta must be positive")
    if cfg.beta == "auto" and cfg.potential not in ("doublewell", "harmonic"):
        fail("system: beta = auto needs a well to derive the width from")
    if isinstance(cfg.span, float) and not cfg.span > 0.0:
        fail("system: span must be positive")
    if cfg.n_particles < 2:
        fail("system: n_particles must be >= 2")
    if cfg.engine == "analytic":
        if cfg.potential != "harmonic" or cfg.beta != "coherent":
            fail(
                "experiment: the analytic engine covers only the harmonic "
                "potential with beta = coherent"
            )
    if not cfg.t_end > 0.0:
        fail("integration: t_end must be positive")
    if not 0.0 < cfg.dt_min <= cfg.dt0 <= cfg.dt_max:
        fail("integration: need 0 < dt_min <= dt0 <= dt_max")
    if not cfg.tol > 0.0:
        fail("integration: tol must be positive")
    if not 0.0 < cfg.shrink < 1.0 < cfg.grow:
        fail("integration: need 0 < shrink < 1 < grow")
    if cfg.order < 2:
        fail("mwls: order must be >= 2")
    if cfg.engine in ("mwls", "compare") and cfg.order < 3:
        fail("mwls: quantum propagation needs order >= 3")
    if cfg.n_neighbors != "auto":
        if cfg.n_neighbors < cfg.order + 2:
            fail("mwls: n_neighbors must be at least order + 2")
        if cfg.n_neighbors > cfg.n_particles - 1:
            fail("mwls: n_neighbors must be below n_particles")
    elif (
        cfg.engine in ("mwls", "classical", "compare")
        and cfg.resolved_neighbors < cfg.order + 2
    ):
        fail("mwls: n_particles is too small for the stencil at this order")
    if cfg.dvr_n_points < 2:
        fail("dvr: n_points must be >= 2")
    if not cfg.box_min < cfg.box_max:
        fail("dvr: box_min must be below box_max")
    if not (cfg.dt_out > 0.0 and cfg.dt_int > 0.0):
        fail("dvr: dt_out and dt_int must be positive")
    if not 0.0 < cfg.rho_floor < 1.0:
        fail("dvr: rho_floor must lie in (0, 1)")
    if cfg.sample_stride < 1:
        fail("output: sample_stride must be >= 1")
    if cfg.snapshot_count < 1:
        fail("output: snapshot_count must be >= 1")


def _build(parser: configparser.ConfigParser, source: str) -> ExperimentConfig:
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    values: dict[str, object] = {"source": source}
    for section, keys in _SCHEMA.items():
        for key, (kind, default) in keys.items():
            target = _FIELD_MAP[(section, key)]
            if parser.has_option(section, key):
                raw = parser.get(section, key).strip()
                values[target] = _convert(kind, raw, f"{section}.{key}")
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key {section}.{key}")
            else:
                values[target] = default
    cfg = ExperimentConfig(**values)  # type: ignore[arg-type]
    _validate(cfg)
    return cfg


def _new_parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )


def _apply_overrides(parser: configparser.ConfigParser, overrides) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, key = dotted.strip().rsplit(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA.get(section, {}):
            raise ConfigError(f"override targets unknown key {section}.{key}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())


def parse_config_text(text: str, overrides=(), source: str = "<text>") -> ExperimentConfig:
    """Parse an INI document given as a string."""
    parser = _new_parser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    _apply_overrides(parser, overrides)
    return _build(parser, source)


def parse_config(path, overrides=()) -> ExperimentConfig:
    """Parse an INI file, apply overrides, validate, and type the result."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), overrides, source=str(path))


def list_presets() -> list[str]:
    """Names of the bundled experiment presets."""
    root = resources.files("qtraj") / "presets"
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    """INI text of a bundled preset."""
    entry = resources.files("qtraj") / "presets" / f"{name}.cfg"
    if not entry.is_file():
        known = ", ".join(list_presets())
        raise ConfigError(f"unknown preset {name!r} (known: {known})")
    return entry.read_text()
