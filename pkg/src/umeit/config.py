"""Sectioned ``key = value`` run configuration.

Every key is typed; unknown sections and keys are rejected with the name of
the offending entry. ``[sigma]`` and ``[illumination]`` additionally accept
the parameters of the selected model.
"""
from __future__ import annotations

import configparser
import json

from .errors import PreconditionError
from .models import illumination_parameters, model_parameters


def _floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _uint(text):
    v = int(text)
    if v < 0:
        raise ValueError(f"expected an unsigned integer, got {v}")
    return v


SCHEMA = {
    "domain": {
        "kind": (str, "rectangle"), "Lx": (float, 1.0), "Ly": (float, 1.0), "L": (float, 1.0), "a": (float, 1.0),
        "R": (float, 1.0), "semi_a": (float, 1.0), "semi_b": (float, 0.7), "r_inner": (float, 0.5),
        "r_outer": (float, 1.0), "nx": (int, 65), "ny": (int, 0), "n": (int, 64), "nr": (int, 64), "nphi": (int, 0),
    },
    "sigma": {"model": (str, "constant"), "file": (str, "")},
    "illumination": {"model": (str, "plane")},
    "modulation": {"m_max": (int, 16), "eps": (float, 1e-3)},
    "march": {
        "cfl": (float, 0.5), "g_min": (float, 1e-3), "margin_min": (float, 0.05), "picard_iters": (int, 2),
        "slabs": (int, 40), "w": (float, 0.9238795325112867), "input": (str, ""),
    },
    "noise": {
        "seed": (_uint, 0), "levels": (_floats, [1e-3, 3e-3, 1e-2]), "trials": (int, 10), "cauchy_level": (float, 0.0),
        "tilts": (_floats, [0.0, 0.25, 0.45, 0.6]), "holder_s": (_floats, [2.0, 4.0, 8.0]), "samples": (int, 20),
        "sizes": (_floats, [32, 64]),
    },
    "output": {"dir": (str, "run"), "pgm": (_bool, True)},
}

_MODEL_SECTIONS = {"sigma": model_parameters, "illumination": illumination_parameters}


class RunConfig:
    """Resolved configuration: ``cfg[section][key]`` with typed values."""

    def __init__(self, sections: dict):
        self.sections = sections

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def seed(self):
        return self.sections["noise"]["seed"]

    def model_params(self, section):
        """Parameters of the selected ``[sigma]`` or ``[illumination]`` model."""
        fixed = SCHEMA[section]
        return {k: v for k, v in self.sections[section].items() if k not in fixed}

    def to_dict(self):
        return {s: dict(v) for s, v in self.sections.items()}

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for s, vals in self.sections.items():
            cp[s] = {k: " ".join(repr(x) for x in v) if isinstance(v, list) else str(v) for k, v in vals.items()}
        return cp


def _raw_from_file(path):
    if str(path).endswith(".json"):
        with open(path) as fh:
            data = json.load(fh)
        data = data.get("config", data)
        return {s: {k: (" ".join(map(repr, v)) if isinstance(v, list) else str(v)) for k, v in vals.items()}
                for s, vals in data.items()}
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    return {s: dict(cp[s]) for s in cp.sections()}


def parse_override(text):
    """``section.key=value`` -> ``(section, key, value)``."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise PreconditionError(f"override {text!r} must look like section.key=value")
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section, key.strip(), value.strip()


def resolve(raw: dict) -> RunConfig:
    out = {}
    for section in raw:
        if section not in SCHEMA:
            raise PreconditionError(f"unknown config section [{section}]; expected one of {sorted(SCHEMA)}")
    for section, schema in SCHEMA.items():
        given = dict(raw.get(section, {}))
        vals = {}
        for key, (typ, default) in schema.items():
            if key in given:
                text = given.pop(key)
                try:
                    vals[key] = typ(text)
                except (TypeError, ValueError) as exc:
                    raise PreconditionError(f"[{section}] {key} = {text!r}: {exc}") from None
            else:
                vals[key] = list(default) if isinstance(default, list) else default
        if section in _MODEL_SECTIONS and given:
            allowed = _MODEL_SECTIONS[section](vals["model"])
            for key, text in given.items():
                if key not in allowed:
                    raise PreconditionError(f"unknown key [{section}] {key} for model {vals['model']!r}; "
                                            f"allowed: {sorted(set(schema) | set(allowed))}")
                try:
                    vals[key] = float(text)
                except ValueError:
                    raise PreconditionError(f"[{section}] {key} = {text!r} is not a number") from None
            given = {}
        if given:
            key = sorted(given)[0]
            raise PreconditionError(f"unknown key [{section}] {key}; allowed: {sorted(schema)}")
        out[section] = vals
    return RunConfig(out)


def load_config(path=None, overrides=()) -> RunConfig:
    """Read an INI file (or a run manifest) and apply ``section.key=value`` overrides."""
    raw = _raw_from_file(path) if path else {}
    for text in overrides:
        section, key, value = parse_override(text)
        raw.setdefault(section, {})[key] = value
    return resolve(raw)
