"""YAML experiment configuration with schema validation and line-anchored errors."""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import yaml


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kernel"],
    "properties": {
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["riemann_liouville", "logarithmic", "finite_spectrum", "shifted"]},
                "params": {"type": "object"},
            },
        },
        "coefficients": {
            "type": "object", "additionalProperties": False,
            "properties": {"c": _NUM, "b": _NUM, "g": _NUM},
        },
        "horizon": _POS,
        "initial_curve": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": ["constant", "kernel_shaped", "explicit"]},
                           "value": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]}},
        },
        "hamiltonian": {
            "type": "object", "additionalProperties": False,
            "properties": {"u_min": _NUM, "u_max": _NUM, "weight": _POS,
                           "running_cost": {"enum": ["quadratic"]}},
        },
        "payoff": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": ["constant", "linear", "quadratic", "sine", "tanh", "step"]}},
            "additionalProperties": _NUM,
        },
        "lift": {
            "type": "object", "additionalProperties": False,
            "properties": {"n_nodes": _INT, "t_min": _POS, "t_max": _POS, "tol": _POS},
        },
        "smoothing": {
            "type": "object", "additionalProperties": False,
            "properties": {"t_min": _POS, "t_max": _POS, "n_points": _INT, "n_steps": _INT, "k": _NUM,
                           "t": _POS},
        },
        "resolvent": {
            "type": "object", "additionalProperties": False, "required": ["c"],
            "properties": {"c": _NUM, "t_min": _POS, "t_max": _POS, "n_points": _INT},
        },
        "hjb": {
            "type": "object", "additionalProperties": False,
            "properties": {"n_tau": _INT, "n_y": _INT, "quad_order": {"type": "integer", "minimum": 8, "maximum": 256},
                           "pad": _POS, "picard_iters": _INT,
                           "y_span": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
        },
        "simulation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dt": _POS, "n_paths": _INT,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "scheme": {"enum": ["exp_euler", "euler"]},
                "export_paths": {"type": "integer", "minimum": 0},
                "control": {
                    "type": "object", "required": ["kind"],
                    "properties": {"kind": {"enum": ["constant", "bang_bang", "closed_loop"]},
                                   "value": _NUM, "first": _NUM, "second": _NUM, "switch": _NUM},
                    "additionalProperties": False,
                },
            },
        },
        "output": {"type": "string"},
    },
}

DEFAULTS: dict = {
    "coefficients": {"c": 0.0, "b": 1.0, "g": 1.0},
    "horizon": 1.0,
    "initial_curve": {"kind": "constant", "value": 0.0},
    "hamiltonian": {"u_min": -1.0, "u_max": 1.0, "weight": 1.0, "running_cost": "quadratic"},
    "payoff": {"kind": "linear", "slope": 1.0},
    "lift": {"n_nodes": 40, "t_min": 1e-5, "tol": 1e-2},
    "smoothing": {"t_min": 1e-3, "t_max": 10.0, "n_points": 50, "n_steps": 2000, "k": 1.0, "t": 1.0},
    "hjb": {"n_tau": 100, "n_y": 101, "quad_order": 32, "pad": 6.0, "picard_iters": 3, "y_span": [-2.0, 2.0]},
    "simulation": {"dt": 0.002, "n_paths": 1000, "seed": 0, "scheme": "exp_euler", "export_paths": 20,
                   "control": {"kind": "closed_loop"}},
    "output": "out",
}


def _line_map(node, prefix=(), out=None) -> dict:
    """Map key paths to 1-based source lines using the composed YAML tree."""
    out = {} if out is None else out
    out.setdefault(prefix, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, prefix + (i,), out)
    return out


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "payoff":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class Config:
    data: dict
    lines: dict
    path: str
    sha256: str

    def line_of(self, *keys) -> int | None:
        keys = tuple(keys)
        while keys and keys not in self.lines:
            keys = keys[:-1]
        return self.lines.get(keys)

    def error(self, message: str, *keys) -> ConfigError:
        return ConfigError(message, self.path, self.line_of(*keys))

    def __getitem__(self, key) -> Any:
        return self.data[key]


def load_config(path) -> Config:
    """Parse, validate and default-fill a YAML config file."""
    path = str(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
    text = raw.decode("utf-8", errors="replace")
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", path,
                          mark.line + 1 if mark is not None else None) from exc
    if node is None or not isinstance(data, dict):
        raise ConfigError("config must be a YAML mapping", path, 1)
    lines = _line_map(node)
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        keys = tuple(err.absolute_path)
        cfg = Config(data, lines, path, "")
        loc = ".".join(map(str, keys)) or "<root>"
        raise cfg.error(f"{loc}: {err.message}", *keys)
    merged = _merge(DEFAULTS, data)
    merged.setdefault("lift", {}).setdefault("t_max", merged["horizon"])
    return Config(merged, lines, path, hashlib.sha256(raw).hexdigest())
