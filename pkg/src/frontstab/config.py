"""Run configuration: flat INI-style sections with typed values, strict
unknown-key rejection, deterministic serialization and hashing.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import io
import json

import numpy as np

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config",
           "config_hash", "DEFAULTS"]


class ConfigError(ValueError):
    """Unparseable or invalid configuration."""


# schema: section -> key -> (type tag, default)
DEFAULTS = {
    "system": {
        "name": ("str", "bistable"),
        "kind": ("str", "builtin"),
        "c": ("float", 1.0),
        "components": ("str", ""),       # polynomial monomials, literal list
        "u_minus": ("floats", [1.0]),
        "u_plus": ("floats", [0.0]),
    },
    "profile": {
        "x_max": ("float", 30.0),
        "n_points": ("int", 3001),
        "tol": ("float", 1e-10),
        "anchor": ("bool", True),
    },
    "spectral": {
        "tol": ("float", 1e-6),
        "eta0_factor": ("float", 0.9),
    },
    "contour": {
        "kappa": ("float", 1.0),
        "nodes_per_panel": ("int", 16),
    },
    "green": {
        "t_values": ("floats", [0.5, 1.0, 2.0, 3.5, 5.0]),
        "x_half_width": ("float", 24.0),
        "x_stride": ("int", 40),
        "y_values": ("floats", [-6.0, -3.0, 0.0, 3.0, 6.0]),
        "bound_t_values": ("floats", [0.1, 0.2, 0.4, 0.8, 1.5, 2.5, 4.0, 6.0, 8.0]),
    },
    "experiment": {
        "family": ("str", "sech"),
        "e0": ("float", 0.01),
        "m": ("float", 8.0),
        "t_end": ("float", 40.0),
        "dt": ("float", 0.01),
        "snapshot_dt": ("float", 0.1),
        "run_field": ("bool", False),
        "field_t_end": ("float", 20.0),
        "custom_csv": ("str", ""),
    },
    "run": {
        "seed": ("int", 0),
    },
}

_POSITIVE = {("profile", "x_max"), ("profile", "tol"), ("spectral", "tol"),
             ("contour", "kappa"), ("experiment", "t_end"), ("experiment", "dt"),
             ("experiment", "snapshot_dt"), ("experiment", "m"),
             ("experiment", "field_t_end")}


def _coerce(section, key, kind, raw):
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return [float(v) for v in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind}") from exc
    raise ConfigError(f"unknown type tag {kind}")


class RunConfig(dict):
    """Validated configuration: mapping section -> key -> typed value."""

    def section(self, name):
        return self[name]

    def build_system(self):
        from .systems import bistable, linear_decay, polynomial_system

        sec = self["system"]
        if sec["kind"] == "builtin":
            if sec["name"] == "bistable":
                return bistable()
            if sec["name"].startswith("linear"):
                return linear_decay(sec["c"])
            raise ConfigError(f"unknown builtin system {sec['name']!r}")
        if sec["kind"] == "polynomial":
            try:
                comps = ast.literal_eval(sec["components"])
            except (ValueError, SyntaxError) as exc:
                raise ConfigError(f"[system] components: {exc}") from exc
            return polynomial_system(sec["name"], comps, sec["u_minus"], sec["u_plus"])
        raise ConfigError(f"unknown system kind {sec['kind']!r}")

    def build_grid(self):
        from .numerics import Grid1D

        sec = self["profile"]
        return Grid1D(-sec["x_max"], sec["x_max"], sec["n_points"])


def parse_config(text) -> RunConfig:
    """Parse and validate; unknown sections/keys are errors, omitted keys
    take their defaults (empty text yields the all-defaults config)."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc

    cfg = RunConfig({sec: {k: default for k, (_, default) in keys.items()}
                     for sec, keys in DEFAULTS.items()})
    for sec in parser.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            cfg[sec][key] = _coerce(sec, key, DEFAULTS[sec][key][0], raw)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    for sec, key in _POSITIVE:
        if not cfg[sec][key] > 0:
            raise ConfigError(f"[{sec}] {key} must be positive")
    if not 0.0 < cfg["spectral"]["eta0_factor"] < 1.0:
        raise ConfigError("[spectral] eta0_factor must lie strictly inside (0, 1) "
                          "so that 0 < eta0 < min(eta/4, eta')")
    if cfg["profile"]["n_points"] < 3:
        raise ConfigError("[profile] n_points must be at least 3")
    if not cfg["green"]["t_values"]:
        raise ConfigError("[green] t_values must be nonempty")
    if cfg["experiment"]["family"] not in ("sech", "gaussian", "translate",
                                           "derivative", "custom"):
        raise ConfigError(f"unknown experiment family {cfg['experiment']['family']!r}")
    if cfg["experiment"]["snapshot_dt"] < cfg["experiment"]["dt"]:
        raise ConfigError("[experiment] snapshot_dt must be >= dt")


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    out = io.StringIO()
    for sec in DEFAULTS:
        out.write(f"[{sec}]\n")
        for key in DEFAULTS[sec]:
            val = cfg[sec][key]
            if isinstance(val, list):
                val = ", ".join(repr(v) for v in val)
            out.write(f"{key} = {val}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: RunConfig, sections=None) -> str:
    """sha256 of the canonical JSON of the chosen sections (all by default)."""
    payload = {sec: cfg[sec] for sec in (sections or sorted(DEFAULTS))}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
