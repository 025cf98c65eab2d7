"""Experiment configuration: JSON schema, defaults and object builders.

A configuration is a plain nested dict.  Files are validated against
:data:`SCHEMA`, merged over :data:`DEFAULTS`, then command-line flags are
applied on top.  The fully resolved dict is what gets written next to every
run's outputs.
"""
from __future__ import annotations

import copy
import json
from dataclasses import replace

import jsonschema

from .errors import ConfigError
from .evaluation import EvalConfig
from .losses import LossWeights
from .photometric import PhotometricParams
from .synth import default_scene_spec, plane_scene_spec
from .varopt import AdamConfig

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int_pos = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["default", "plane"]},
                "width": {"type": "integer", "minimum": 16},
                "height": {"type": "integer", "minimum": 16},
                "seed": {"type": ["integer", "null"], "minimum": 0},
                "depth": _pos,
                "gt_coverage": {"enum": ["full", "bottom_half", "top_half", "none"]},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **{f"lambda{i}": _nonneg for i in range(1, 5)},
                **{f"alpha{i}": _nonneg for i in range(1, 4)},
                "census_softness": _pos,
            },
        },
        "adam": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr0": _pos,
                "total_steps": _int_pos,
                "plateau_steps": {"type": ["integer", "null"], "minimum": 0},
                "halve_every": {"type": ["integer", "null"], "minimum": 1},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "epsilon": _pos,
                "start_fractions": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                    "minItems": 4,
                    "maxItems": 4,
                },
                "init": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depth_cap": _pos,
                "depth_floor": _pos,
                "crop": {"enum": ["garg", "none"]},
            },
        },
        "lidar": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": "integer", "minimum": 3},
                "rel_tol": _nonneg,
                # null means "use the rig's lidar_offset"
                "offset": {"type": ["array", "null"], "items": _num, "minItems": 3, "maxItems": 3},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "scene": {"preset": "default", "width": 128, "height": 64, "seed": None, "depth": 10.0, "gt_coverage": "full"},
    "weights": {
        "lambda1": 1.0,
        "lambda2": 1.0,
        "lambda3": 150.0,
        "lambda4": 0.1,
        "alpha1": 0.85,
        "alpha2": 0.15,
        "alpha3": 0.08,
        "census_softness": PhotometricParams().census_softness,
    },
    "adam": {
        "lr0": 0.02,
        "total_steps": 3000,
        "plateau_steps": None,
        "halve_every": None,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "start_fractions": [0.3, 0.2, 0.1, 0.0],
        "init": 0.1,
    },
    "eval": {"depth_cap": 80.0, "depth_floor": 1e-3, "crop": "garg"},
    "lidar": {"window": 7, "rel_tol": 0.05, "offset": None},
}


def validate(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    return cfg


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides`` (same nesting; ``None`` values skipped)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        cfg = _merge(cfg, validate(user))
    if overrides:
        cfg = _merge(cfg, _drop_none(overrides))
    validate(cfg)
    build_eval(cfg)
    build_adam(cfg)
    return cfg


def _drop_none(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            v = _drop_none(v)
            if v:
                out[k] = v
        elif v is not None:
            out[k] = v
    return out


def build_weights(cfg):
    w = cfg["weights"]
    p = PhotometricParams(alpha1=w["alpha1"], alpha2=w["alpha2"], alpha3=w["alpha3"], census_softness=w["census_softness"])
    return LossWeights(w["lambda1"], w["lambda2"], w["lambda3"], w["lambda4"], p)


def build_adam(cfg):
    a = cfg["adam"]
    extra = dict(beta1=a["beta1"], beta2=a["beta2"], epsilon=a["epsilon"], start_fractions=tuple(a["start_fractions"]))
    try:
        adam = AdamConfig.scaled(a["total_steps"], a["lr0"], **extra)
        if a["plateau_steps"] is not None or a["halve_every"] is not None:
            d = adam.to_dict()
            if a["plateau_steps"] is not None:
                d["plateau_steps"] = a["plateau_steps"]
            if a["halve_every"] is not None:
                d["halve_every"] = a["halve_every"]
            adam = AdamConfig.from_dict(d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return adam


def build_eval(cfg):
    e = cfg["eval"]
    try:
        return EvalConfig(depth_cap=e["depth_cap"], depth_floor=e["depth_floor"], crop=e["crop"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_scene_spec(cfg):
    s = cfg["scene"]
    seed = cfg["seed"] if s["seed"] is None else s["seed"]
    if s["preset"] == "plane":
        spec = plane_scene_spec(s["depth"], width=s["width"], height=s["height"], seed=seed)
        return replace(spec, gt_coverage=s["gt_coverage"]).validate()
    return default_scene_spec(s["width"], s["height"], seed=seed, gt_coverage=s["gt_coverage"])
