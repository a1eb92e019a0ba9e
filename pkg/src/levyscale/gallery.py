"""Model configuration files and the built-in model gallery.

A model file is YAML (JSON is accepted too) of the form::

    family: piecewise_exp
    name: optional label
    params: {lam: 0.5, scale: 0.1, delta: 1.5}
    tolerances: {hjb_rel: 5.0e-4}

and is validated against :data:`MODEL_SCHEMA` before any numerics run.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import yaml

from .errors import ModelError
from .levy_model import (
    AtomicJumps,
    LevyModel,
    NoJumps,
    PiecewiseExponentialDensity,
    PiecewisePowerDensity,
)

__all__ = [
    "MODEL_SCHEMA",
    "GALLERY",
    "FAMILIES",
    "build_model",
    "load_model_file",
    "gallery_model",
    "gallery_configs",
    "read_density_table",
]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

FAMILY_PARAMS = {
    "brownian": {
        "properties": {"sigma": _POS, "gamma": _NUM},
        "required": [],
    },
    "cramer_lundberg_exp": {
        "properties": {"c": _POS, "lambda": _POS, "mu": _POS},
        "required": ["c", "lambda", "mu"],
    },
    "piecewise_power": {
        "properties": {"lam1": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                       "lam2": _POS, "scale": _POS, "gamma": _NUM, "sigma": _NONNEG},
        "required": ["lam1", "lam2"],
    },
    "piecewise_exp": {
        "properties": {"lam": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                       "scale": _POS, "delta": _POS},
        "required": ["lam", "delta"],
    },
    "custom_density_table": {
        "properties": {"table": {"type": "string"}, "delta": _POS, "gamma": _NUM, "sigma": _NONNEG},
        "required": ["table"],
    },
    "atomic_claims": {
        "properties": {"delta": _POS,
                       "atoms": {"type": "array", "minItems": 1,
                                 "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                           "items": _POS}}},
        "required": ["delta", "atoms"],
    },
}

FAMILIES = tuple(FAMILY_PARAMS)

MODEL_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "additionalProperties": False,
    "properties": {
        "family": {"enum": list(FAMILIES)},
        "name": {"type": "string"},
        "params": {"type": "object"},
        "tolerances": {"type": "object", "additionalProperties": _POS},
    },
    "allOf": [
        {"if": {"properties": {"family": {"const": fam}}},
         "then": {"properties": {"params": {"type": "object", "additionalProperties": False, **spec}},
                  **({"required": ["params"]} if spec["required"] else {})}}
        for fam, spec in FAMILY_PARAMS.items()
    ],
}


def read_density_table(path) -> PiecewiseExponentialDensity:
    """Two-column CSV ``x, pi(x)`` (header optional), interpolated log-linearly."""
    xs, ps = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, p = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if xs:
                    raise ModelError(f"bad row in density table: {row!r}")
                continue
            xs.append(x)
            ps.append(p)
    if len(xs) < 2:
        raise ModelError("density table needs at least two rows")
    return PiecewiseExponentialDensity.from_table(xs, ps)


def build_model(cfg: dict, *, base_dir: Path | None = None) -> LevyModel:
    """Validate a configuration mapping and construct the model."""
    try:
        jsonschema.validate(cfg, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ModelError(f"invalid model config: {exc.message}", stage="parse") from None
    fam = cfg["family"]
    p = dict(cfg.get("params", {}))
    name = cfg.get("name", fam)
    meta = {"family": fam, **p}
    if fam == "brownian":
        return LevyModel(p.get("gamma", 0.0), p.get("sigma", 1.0), NoJumps(), name=name, params=meta)
    if fam == "cramer_lundberg_exp":
        jumps = PiecewiseExponentialDensity.exponential(p["lambda"], p["mu"])
        return LevyModel.from_bv_drift(p["c"], jumps, name=name, params=meta)
    if fam == "piecewise_power":
        if not p["lam2"] < p["lam1"]:
            raise ModelError("piecewise_power needs lam2 < lam1", stage="parse")
        jumps = PiecewisePowerDensity(p["lam1"], p["lam2"], p.get("scale", 1.0))
        return LevyModel(p.get("gamma", 0.0), p.get("sigma", 0.0), jumps, name=name, params=meta)
    if fam == "piecewise_exp":
        lam, scale = p["lam"], p.get("scale", 1.0)
        knot = 1.0 / (1.0 - lam)
        # e^{2-x} on (0, knot), e^{1-lam x} beyond; continuous at the knot
        jumps = PiecewiseExponentialDensity([0.0, knot], [scale * math.e ** 2, scale * math.exp(1 - lam * knot)],
                                            [1.0, lam])
        return LevyModel.from_bv_drift(p["delta"], jumps, name=name, params=meta)
    if fam == "custom_density_table":
        path = Path(p["table"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ModelError(f"density table {path} not found", stage="parse")
        jumps = read_density_table(path)
        if "delta" in p:
            return LevyModel.from_bv_drift(p["delta"], jumps, name=name, params=meta)
        return LevyModel(p.get("gamma", 0.0), p.get("sigma", 0.0), jumps, name=name, params=meta)
    if fam == "atomic_claims":
        loc, mass = zip(*p["atoms"])
        return LevyModel.from_bv_drift(p["delta"], AtomicJumps(loc, mass), name=name, params=meta)
    raise ModelError(f"unknown family {fam!r}", stage="parse")


def load_model_file(path) -> tuple[LevyModel, dict]:
    """Read, validate and build a model file; returns ``(model, config)``."""
    path = Path(path)
    if not path.is_file():
        raise ModelError(f"model file {path} not found", stage="parse")
    text = path.read_text()
    try:
        cfg = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot parse {path}: {exc}", stage="parse") from None
    if not isinstance(cfg, dict):
        raise ModelError(f"{path} does not hold a mapping", stage="parse")
    return build_model(cfg, base_dir=path.parent), cfg


GALLERY = {
    "brownian": {"family": "brownian", "params": {"sigma": 1.0, "gamma": 0.0}},
    "cramer_lundberg_exp": {"family": "cramer_lundberg_exp", "params": {"c": 1.0, "lambda": 1.0, "mu": 2.0}},
    "piecewise_power": {"family": "piecewise_power",
                        "params": {"lam1": 1.5, "lam2": 0.5, "scale": 1.0, "gamma": 2.0}},
    "piecewise_exp": {"family": "piecewise_exp", "params": {"lam": 0.5, "scale": 0.1, "delta": 1.5}},
}

ATOMIC_EXAMPLE = {"family": "atomic_claims", "params": {"delta": 2.0, "atoms": [[1.0, 0.5]]}}


def gallery_configs() -> dict:
    return {k: dict(v, name=k) for k, v in GALLERY.items()}


def gallery_model(name: str) -> LevyModel:
    if name == "atomic_claims":
        return build_model(dict(ATOMIC_EXAMPLE, name=name))
    if name not in GALLERY:
        raise ModelError(f"no gallery model {name!r}; choose from {sorted(GALLERY)}")
    return build_model(dict(GALLERY[name], name=name))

