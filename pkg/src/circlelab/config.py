"""Scenario configuration: YAML loading, schema validation and defaults."""
from __future__ import annotations

import copy
from pathlib import Path

import jsonschema
import yaml

from . import fixtures
from .circle_maps import Alphabet, Arc, GroupWord, PrimitiveMap
from .errors import ConfigError, InvariantError
from .metrics import DEFAULT_TOLERANCES, Tolerances

SCENARIOS = ("cascade", "distortion", "expansion", "flow", "walk", "spikes")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_UNIT_OPEN = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_INT_POS = {"type": "integer", "minimum": 1}
_WORD = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
}
_ARC = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

_PRIMITIVE = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["rotation", "trig", "moebius", "dilation"]},
        "theta": _NUM,
        "offset": _NUM,
        "amplitude": _NUM,
        "lam": _POS,
        "matrix": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                   "minItems": 2, "maxItems": 2},
        "normalize": {"type": "boolean"},
        # hyperbolic Moebius map with repelling point at center and multiplier s^2
        "s": _POS,
        "center": _NUM,
    },
}

_FIXTURE = {
    "type": "object",
    "required": ["fixture"],
    "additionalProperties": False,
    "properties": {
        "fixture": {"enum": ["two_hyperbolic", "commuting_rotations", "rotation", "moebius_trig"]},
        "args": {"type": "object", "additionalProperties": _NUM},
    },
}

_ALPHABET = {"oneOf": [{"type": "array", "items": _PRIMITIVE, "minItems": 1}, _FIXTURE]}


def _obj(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


PARAM_SCHEMAS = {
    "cascade": _obj({
        "fixture": {"enum": ["linear_chart", "words"]},
        "lam": _UNIT_OPEN,
        "a": _POS,
        "eps0": _POS,
        "delta": _POS,
        "C": _POS,
        "calibration_pairs": _INT_POS,
        "k_max": {"type": "integer", "minimum": 1, "maximum": 8},
        "prune_cap": _INT_POS,
        "eps_scale": _POS,
        "fraction": _UNIT_OPEN,
        "orders": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 3}, "minItems": 1},
        "s0": {"type": "array", "items": _WORD, "minItems": 1},
        "F": _WORD,
        "n": _INT_POS,
    }),
    "distortion": _obj({
        "ks": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 8}, "minItems": 1},
        "s0": {"type": "array", "items": _WORD, "minItems": 1},
        "F": _WORD,
        "n": _INT_POS,
        "J": _ARC,
        "prune_cap": _INT_POS,
        "C": _POS,
    }),
    "expansion": _obj({
        "cap": {"type": "integer", "minimum": 1, "maximum": 8},
        "overlap": _POS,
        "sources": _INT_POS,
        "min_fraction": _UNIT_OPEN,
    }),
    "flow": _obj({
        "g": _WORD,
        "F": _WORD,
        "arc": _ARC,
        "chart_domain": _ARC,
        "j_max": _INT_POS,
        "field_words": {"type": "array", "items": _WORD, "minItems": 3},
        "field_arc": _ARC,
        "m": {"type": "integer", "minimum": 1, "maximum": 3},
        "x0": _NUM,
        "t_max": _POS,
        "steps": {"type": "array", "items": _INT_POS, "minItems": 1},
    }),
    "walk": _obj({
        "measure": {"oneOf": [
            {"enum": ["symmetric_letters"]},
            {"type": "array", "minItems": 1, "items": _obj({"word": _WORD, "p": _POS})},
        ]},
        "length": {"type": "integer", "minimum": 1, "maximum": 10_000_000},
        "x0": _NUM,
        "cells": {"type": "integer", "minimum": 32},
        "residual_max": _POS,
        "ks_max": _POS,
        "contraction_paths": {"type": "integer", "minimum": 0},
        "contraction_horizon": _INT_POS,
        "contraction_max": _POS,
    }),
    "spikes": _obj({
        "family": {"enum": ["poisson", "cosine"]},
        "K": _INT_POS,
        "s": _POS,
        "r": _POS,
        "amplitude": _UNIT_OPEN,
        "Q": {"type": "number", "minimum": 0},
        "theta": {"type": "number", "minimum": 1},
        "C": {"type": "number", "exclusiveMinimum": 1},
        "subset": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "tol": _POS,
        "samples": _INT_POS,
        "cells": {"type": "integer", "minimum": 32},
        "residual_max": _POS,
    }),
}

SCHEMA = {
    "type": "object",
    "required": ["scenario"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "grid": {"type": "integer", "minimum": 64},
        "out": {"type": "string"},
        "alphabet": _ALPHABET,
        "tolerances": _obj({k: _NUM for k in DEFAULT_TOLERANCES.as_dict()}),
        "params": {"type": "object"},
    },
}

DEFAULTS = {
    "cascade": {"fixture": "linear_chart", "lam": 0.5, "a": 0.2, "delta": 0.1, "calibration_pairs": 100,
                "k_max": 8, "prune_cap": 16, "eps_scale": 1.0, "fraction": 0.5, "orders": [0, 1, 2]},
    "distortion": {"ks": [2, 3, 4, 5, 6], "s0": [[[0, 1]], [[1, 1]]], "F": [[0, -1]], "n": 3,
                   "J": [-0.2, 0.2], "prune_cap": 2},
    "expansion": {"cap": 6, "overlap": 0.01, "sources": 100, "min_fraction": 1e-4},
    # g = R^-1 T R has g'(0) = 1; F^j R F^-j is the translation by lam^j theta in the dilation chart
    "flow": {"g": [[3, -1], [0, 1], [3, 1]], "F": [[1, 1]], "arc": [-0.4, 0.4], "j_max": 20, "m": 1, "x0": 0.0,
             "field_words": [[[1, j], [2, 1], [1, -j]] for j in range(1, 7)], "field_arc": [-0.4, 0.4],
             "t_max": 0.2, "steps": [50, 100, 200, 400]},
    "walk": {"measure": "symmetric_letters", "length": 1_000_000, "x0": 0.1, "cells": 64,
             "residual_max": 3.0, "contraction_paths": 200, "contraction_horizon": 60},
    "spikes": {"family": "poisson", "K": 8, "s": 1.2, "r": 0.2, "amplitude": 0.2, "Q": 0.0, "theta": 1.0,
               "C": 4.0, "tol": 1e-3, "samples": 1_000_000, "cells": 64, "residual_max": 3.0},
}

DEFAULT_ALPHABET = {
    "cascade": None,
    "distortion": {"fixture": "two_hyperbolic"},
    "expansion": {"fixture": "two_hyperbolic"},
    "flow": [{"kind": "trig", "offset": 0.05, "amplitude": 0.1}, {"kind": "dilation", "lam": 0.5},
             {"kind": "rotation", "theta": 0.01}, {"kind": "rotation", "theta": 0.25}],
    "walk": {"fixture": "two_hyperbolic"},
    "spikes": None,
}


def _fmt_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate(raw: dict) -> dict:
    """Schema-check a raw config and fill defaults; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"schema violation at {_fmt_error(err)}") from None
    scenario = raw["scenario"]
    params = raw.get("params", {})
    try:
        jsonschema.validate(params, PARAM_SCHEMAS[scenario])
    except jsonschema.ValidationError as err:
        raise ConfigError(f"schema violation at params/{_fmt_error(err)}") from None
    cfg = copy.deepcopy(raw)
    cfg["params"] = {**DEFAULTS[scenario], **params}
    cfg.setdefault("seed", 0)
    cfg.setdefault("grid", 512)
    if cfg.get("alphabet") is None and DEFAULT_ALPHABET[scenario] is not None:
        cfg["alphabet"] = copy.deepcopy(DEFAULT_ALPHABET[scenario])
    tol = {**DEFAULT_TOLERANCES.as_dict(), **cfg.get("tolerances", {})}
    cfg["tolerances"] = tol
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: dict):
    p = cfg["params"]
    if cfg["scenario"] == "cascade" and p["fixture"] == "words":
        if "s0" not in p or cfg.get("alphabet") is None:
            raise ConfigError("cascade fixture 'words' needs an alphabet and s0")
    for key in ("arc", "J", "field_arc", "chart_domain"):
        if key in p and not p[key][0] < p[key][1]:
            raise ConfigError(f"params/{key}: lower end must be below upper end")
    if cfg.get("alphabet") is not None:
        try:
            alphabet(cfg)
        except (InvariantError, KeyError, TypeError) as err:
            raise ConfigError(f"alphabet: {err}") from None


def load(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return validate(raw)


def tolerances(cfg: dict) -> Tolerances:
    return Tolerances(**cfg["tolerances"])


def _primitive(spec: dict) -> PrimitiveMap:
    if spec["kind"] == "moebius" and "s" in spec:
        from .circle_maps import hyperbolic_matrix
        return PrimitiveMap.moebius(hyperbolic_matrix(spec["s"], spec.get("center", 0.0)))
    return PrimitiveMap.from_dict(spec)


def alphabet(cfg: dict) -> Alphabet:
    spec = cfg["alphabet"]
    if isinstance(spec, dict):
        args = spec.get("args", {})
        name = spec["fixture"]
        if name == "rotation":
            return fixtures.rotation_pair(**args)
        return getattr(fixtures, name)(**args)
    return Alphabet(tuple(_primitive(s) for s in spec))


def word(alph: Alphabet, letters) -> GroupWord:
    for idx, _ in letters:
        if not 0 <= idx < len(alph):
            raise ConfigError(f"letter index {idx} outside the alphabet of size {len(alph)}")
    return alph.word([tuple(l) for l in letters])


def arc(pair) -> Arc:
    return Arc(float(pair[0]), float(pair[1]))
