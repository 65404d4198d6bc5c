"""Experiment configuration files (YAML) with line-numbered validation errors.

A config has a ``schema_version`` and the sections ``scene``, ``radar``,
``phase_error``, ``noise``, ``sampling``, ``patch``, ``solver``, ``bench``,
``input``, ``export`` and ``output``; all sections are optional and unknown
keys are rejected.  Missing values take the defaults in :data:`SCHEMA`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import yaml

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``file:line:``."""


# key -> (type check name, default)
SCHEMA = {
    "scene": {
        "side": ("posint", 128),
        "n_targets": ("nonnegint", 4),
        "target_amp": ("posnum", 10.0),
        "background": (("smooth", "none"), "smooth"),
        "rank": ("posint", 2),
    },
    "radar": {
        "fc": ("posnum", 10e9),
        "bandwidth": ("posnum", 500e6),
        "prf": ("posnum", 50.0),
        "n_azimuth": ("posint_or_null", None),
        "n_range": ("posint_or_null", None),
    },
    "phase_error": {
        "kind": (("quadratic", "random_walk", "sinusoidal", "none"), "quadratic"),
        "peak": ("num", math.pi / 2),
    },
    "noise": {"snr_db": ("num_or_null", 10.0)},
    "sampling": {
        "azimuth_ratio": ("ratio", 1.0),
        "range_ratio": ("ratio", 1.0),
        "mode": (("uniform_random", "decimate"), "uniform_random"),
    },
    "patch": {"window": ("posint", 32), "step": ("posint", 16)},
    "solver": {
        "mode": (("SAR_LRSD", "ISAR_SPARSE"), "SAR_LRSD"),
        "autofocus": ("bool", True),
        "lambda_L": ("nonnegnum_or_null", None),
        "lambda_S": ("nonnegnum_or_null", None),
        "delta1": ("posnum_or_null", None),
        "delta2": ("posnum_or_null", None),
        "rho1": ("posnum", 1.0),
        "rho2": ("posnum", 1.0),
        "lambda_phi": ("num", 0.25),
        "alpha_x": ("ratio", 1e-3),
        "inner_tol": ("posnum", 1e-4),
        "max_outer": ("posint", 50),
        "max_inner": ("posint", 10),
        "noise_multiple": ("posnum", 3.0),
        "peak_fraction": ("nonnegnum_or_null", None),
        "cell_threshold": ("ratio", 0.1),
    },
    "bench": {
        "sizes": ("posint_list", [64, 128]),
        "snrs": ("num_list", [10.0]),
        "methods": ("method_list", ["fast", "conventional"]),
        "repeats": ("posint", 5),
        "iterations": ("posint", 10),
    },
    "input": {
        "phase_history": ("str_or_null", None),
        "meta": ("str_or_null", None),
    },
    "export": {
        "source": ("str_or_null", None),
        "format": (("pgm", "csv"), "pgm"),
    },
    "output": {"dir": ("str", "out")},
}
TOP_LEVEL = {"schema_version", "seed", *SCHEMA}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(kind, v):
    """Return an error string, or None when ``v`` satisfies ``kind``."""
    if isinstance(kind, tuple):
        return None if v in kind else f"must be one of {list(kind)}, got {v!r}"
    nullable = kind.endswith("_or_null")
    if nullable:
        if v is None:
            return None
        kind = kind[: -len("_or_null")]
    if kind == "bool":
        return None if isinstance(v, bool) else f"must be true or false, got {v!r}"
    if kind == "str":
        return None if isinstance(v, str) and v else f"must be a non-empty string, got {v!r}"
    if kind.endswith("int"):
        if not (isinstance(v, int) and not isinstance(v, bool)):
            return f"must be an integer, got {v!r}"
        if kind == "posint" and v < 1:
            return f"must be >= 1, got {v}"
        if kind == "nonnegint" and v < 0:
            return f"must be >= 0, got {v}"
        return None
    if kind.endswith("_list"):
        item = {"posint_list": "posint", "num_list": "num", "method_list": ("fast", "conventional")}[kind]
        if not isinstance(v, list) or not v:
            return f"must be a non-empty list, got {v!r}"
        for x in v:
            err = _check(item, x)
            if err:
                return f"list entry {err}"
        return None
    if not _is_num(v) or not math.isfinite(v):
        return f"must be a finite number, got {v!r}"
    if kind == "posnum" and not v > 0:
        return f"must be > 0, got {v}"
    if kind == "nonnegnum" and v < 0:
        return f"must be >= 0, got {v}"
    if kind == "ratio" and not 0 < v <= 1:
        return f"must lie in (0, 1], got {v}"
    return None


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that remembers the source line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    mapping = {}
    lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise ConfigError(f"{key_node.start_mark.line + 1}: duplicate key {key!r}")
        mapping[key] = loader.construct_object(value_node, deep=deep)
        lines[key] = key_node.start_mark.line + 1
    mapping["__lines__"] = lines
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass
class Config:
    sections: dict
    seed: int
    path: Path

    def __getitem__(self, name) -> dict:
        return self.sections[name]


def _strip(obj):
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in obj.items() if k not in ("__lines__", "__line__")}
    if isinstance(obj, list):
        return [_strip(v) for v in obj]
    return obj


def parse_config(text: str, name: str = "<config>") -> Config:
    try:
        raw = yaml.load(text, Loader=_LineLoader)  # noqa: S506 - SafeLoader subclass
    except ConfigError as exc:
        raise ConfigError(f"{name}:{exc}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{name}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if raw is None:
        raw = {"__lines__": {}, "__line__": 1}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}:1: top level must be a mapping")
    lines = raw["__lines__"]

    def fail(line, msg):
        raise ConfigError(f"{name}:{line}: {msg}")

    for key in lines:
        if key not in TOP_LEVEL:
            fail(lines[key], f"unknown top-level key {key!r}")
    if "schema_version" not in raw:
        fail(1, f"missing schema_version (expected {SCHEMA_VERSION})")
    if raw["schema_version"] != SCHEMA_VERSION:
        fail(lines["schema_version"], f"unsupported schema_version {raw['schema_version']!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        fail(lines.get("seed", 1), f"seed must be a non-negative integer, got {seed!r}")

    sections = {}
    for sec, fields in SCHEMA.items():
        given = raw.get(sec, None)
        if given is None:
            given = {"__lines__": {}, "__line__": lines.get(sec, 1)}
        if not isinstance(given, dict):
            fail(lines[sec], f"section {sec!r} must be a mapping")
        out = {}
        for key, line in given["__lines__"].items():
            if key not in fields:
                fail(line, f"{sec}.{key}: unknown key (allowed: {', '.join(fields)})")
            err = _check(fields[key][0], _strip(given[key]))
            if err:
                fail(line, f"{sec}.{key} {err}")
            out[key] = _strip(given[key])
        for key, (_, default) in fields.items():
            out.setdefault(key, default)
        sections[sec] = out

    p = sections["patch"]
    side = sections["scene"]["side"]
    if sections["solver"]["mode"] == "SAR_LRSD":
        line = lines.get("patch", lines.get("scene", 1))
        if not p["step"] <= p["window"] <= side or (side - p["window"]) % p["step"]:
            fail(line, f"patch window {p['window']} / step {p['step']} do not tile a {side}-pixel scene")
    return Config(sections, seed, Path(name))


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    cfg = parse_config(text, str(path))
    cfg.path = path
    return cfg
