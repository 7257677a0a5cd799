"""YAML experiment configuration, validated against ``config_schema.json``."""

import copy
import json
from importlib import resources

import jsonschema
import yaml

from .errors import ConfigError
from .model import ModelSpec

DEFAULTS = {
    "seed": 0,
    "model": {"lambda0": 1.5, "valency": 1.0, "n": 2, "trunc": 512, "mu": [[0, 1, 1.0, 0.0]]},
    "geometry": {"radii": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "angles": 16, "origin": True,
                 "step": 1e-4, "trunc": 512},
    "sylvester": {"lambda0": [1.0, 1.5, 2.0], "valency": [1.0, 2.0, 3.0], "k": [0, 1, 2],
                  "trunc": 1024, "fit_trunc": 4096},
    "reduce": {"trunc": 512},
    "commutant": {"degrees": [0, 1, 2, 3, 4, 5, 6, 7, 8], "trunc": 512},
    "powerbound": {"n_max": 200, "trunc": 4096, "points": 16, "operator": "auto"},
    "tolerances": {"intertwining": 1e-10, "sylvester": 1e-9, "reduce": 1e-6, "commutant": 1e-7},
}


def schema():
    text = resources.files("cdlab").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw):
    """Raise ConfigError naming the offending field; returns ``raw``."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(err.message, path)
    model = raw.get("model")
    if model:
        n = model["n"]
        for idx, entry in enumerate(model.get("mu", [])):
            i, j = entry[0], entry[1]
            if not (0 <= i < j < n):
                raise ConfigError(f"mu entry ({i},{j}) must satisfy 0 <= i < j < n={n}", f"model/mu/{idx}")
    return raw


def load(path=None, text=None):
    """Parse and validate a config file (or YAML text); defaults fill gaps."""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    raw = {}
    if text is not None:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else None
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from None
    raw = validate(raw)
    cfg = _merge(DEFAULTS, raw)
    if "model" in raw and "mu" not in raw["model"]:
        cfg["model"]["mu"] = []
    return cfg


def model_spec(cfg, trunc=None):
    m = cfg["model"]
    entries = [(e[0], e[1], e[2], e[3] if len(e) > 3 else 0.0) for e in m.get("mu", [])]
    try:
        return ModelSpec.from_entries(m["lambda0"], m["valency"], m["n"], entries,
                                      trunc if trunc is not None else m.get("trunc", 512))
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from None
