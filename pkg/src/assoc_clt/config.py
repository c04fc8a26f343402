"""JSON schemas for experiment configs and the reports that embed them."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1

_index = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_grid = {"type": "array", "items": _index, "minItems": 1}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_pos = {"type": "number", "exclusiveMinimum": 0}
_reals = {"type": "array", "items": {"type": "number"}, "minItems": 1}

MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "dimension", "entries"],
    "properties": {
        "kind": {"enum": ["finite", "radial"]},
        "dimension": {"type": "integer", "minimum": 1},
        "entries": {
            "oneOf": [
                {"type": "array", "minItems": 1,
                 "items": {"type": "array", "items": {"type": "number"}, "minItems": 2}},
                {"type": "object", "additionalProperties": False, "required": ["profile", "alpha"],
                 "properties": {"profile": {"enum": ["power", "product_power"]},
                                "alpha": {"type": "number", "minimum": 0},
                                "scale": _pos}},
            ]
        },
    },
}

SAMPLER = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["iid", "ma", "gaussian", "constant"]}},
    "oneOf": [
        {"additionalProperties": False, "required": ["kind", "dimension"],
         "properties": {"kind": {"const": "iid"}, "dimension": {"type": "integer", "minimum": 1},
                        "variance": _pos, "law": {"enum": ["normal", "uniform"]}, "seed": _seed}},
        {"additionalProperties": False, "required": ["kind", "dimension", "kernel"],
         "properties": {"kind": {"const": "ma"}, "dimension": {"type": "integer", "minimum": 1},
                        "kernel": {"type": "array", "minItems": 1,
                                   "items": {"type": "array", "items": {"type": "number"}, "minItems": 2}},
                        "noise_variance": _pos, "seed": _seed}},
        {"additionalProperties": False, "required": ["kind", "model", "torus"],
         "properties": {"kind": {"const": "gaussian"}, "model": MODEL, "torus": _index,
                        "mean": {"type": "number"}, "seed": _seed}},
        {"additionalProperties": False, "required": ["kind", "dimension"],
         "properties": {"kind": {"const": "constant"}, "dimension": {"type": "integer", "minimum": 1},
                        "seed": _seed}},
    ],
}

SLOW_FUNCTION = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["log_product", "constant", "power", "kx"]},
        "dimension": {"type": "integer", "minimum": 1},
        "beta": {"type": "number"},
        "model": MODEL,
    },
}

THRESHOLDS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"ks_scale": _pos, "ks_slack": {"type": "number", "minimum": 0}, "cf": _pos,
                   "ui_tail": _pos, "ui_flat": _pos},
}

SCHEDULE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"R_seq": _grid, "cap": {"type": "integer", "minimum": 2}},
}

CERTIFICATE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"t": {"type": "number"}, "eps": _pos, "p": _index, "q": _index,
                   "schedule": SCHEDULE},
}

_common = {"schema_version": {"const": SCHEMA_VERSION}, "seed": _seed, "description": {"type": "string"}}


def _obj(required, **props):
    return {"type": "object", "additionalProperties": False, "required": list(required),
            "properties": {**_common, **props}}


SCHEMAS = {
    "variance": _obj(["model", "n_grid"], model=MODEL, n_grid=_grid),
    "kfun": _obj(["model", "r_grid"], model=MODEL,
                 r_grid={"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}),
    "svcheck": _obj(["function", "a"], function=SLOW_FUNCTION, a={**_reals, "items": {"type": "number", "minimum": 1}},
                    schedule={"type": "array", "minItems": 1,
                              "items": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
                    tolerance=_pos),
    "blocking": _obj(["n"], n=_index, p=_index, q=_index, model=MODEL, schedule=SCHEDULE),
    "simulate": _obj(["sampler", "n"], sampler=SAMPLER, n=_index,
                     replicates={"type": "integer", "minimum": 1}),
    "clt": _obj(["sampler", "n_grid", "replicates"], sampler=SAMPLER, n_grid=_grid,
                normalization={"enum": ["exact-variance", "k-normalization"]},
                replicates={"type": "integer", "minimum": 2}, thresholds=THRESHOLDS,
                c_grid={**_reals, "items": {"type": "number", "minimum": 0}}, t_grid=_reals,
                certificate=CERTIFICATE, dump_samples={"type": "boolean"}),
    "certify": _obj(["sampler", "n_grid"], sampler=SAMPLER, n_grid=_grid, t={"type": "number"},
                    eps=_pos, replicates={"type": "integer", "minimum": 1}, schedule=SCHEDULE,
                    p=_index, q=_index),
}

REPORT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "command", "timestamp", "config", "result"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": sorted(SCHEMAS)},
        "timestamp": {"type": "string"},
        "config": {"type": "object"},
        "result": {"type": "object"},
        "exit_code": {"type": "integer"},
    },
}


class ConfigError(ValueError):
    pass


def _where(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(command: str, config: dict) -> dict:
    """Validate ``config`` for ``command``; raises :class:`ConfigError` naming the field."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(config), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        if err.validator == "required":
            missing = err.message.split("'")[1] if "'" in err.message else err.message
            where = _where(err)
            field = missing if where == "<root>" else f"{where}/{missing}"
            raise ConfigError(f"missing required field '{field}'")
        if err.validator == "additionalProperties":
            raise ConfigError(f"{_where(err)}: {err.message}")
        raise ConfigError(f"invalid field '{_where(err)}': {err.message}")
    return config


def validate_report(report: dict) -> dict:
    """Check a report envelope and re-validate its embedded config."""
    jsonschema.validate(report, REPORT)
    if report["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {report['schema_version']}")
    validate(report["command"], report["config"])
    return report


def load(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data
