"""Run configuration: JSON schema, loading with line-located errors, and typed views.

One JSON document describes a run. The top-level keys are ``model``,
``metric``, ``sampler``, ``sim``, ``controller``, ``optimize``,
``interconnect``, ``tolerances``, ``seed`` and ``out``; which of them a
command needs is checked after schema validation. See ``configs/`` for
complete examples and the README for the field reference.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .errors import ConfigError

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": {"anyOf": [_vec, _num]}}
_sq = {"anyOf": [_mat, _num]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


def _kind(name, props=None, required=()):
    props = dict(props or {})
    props["kind"] = {"const": name}
    return _obj(props, ("kind",) + tuple(required))


SIGNAL = {"oneOf": [
    _kind("zero"),
    _kind("constant", {"value": {"anyOf": [_vec, _num]}}, ("value",)),
    _kind("piecewise", {"times": _vec, "values": _mat}, ("times", "values")),
    _kind("random", {"pieces": {"type": "integer", "minimum": 1}, "bound": _pos}, ("pieces", "bound")),
]}

BOOST_PARAMS = _obj({k: _pos for k in ("L", "C", "R", "G", "Vs")})
RLC_PARAMS = _obj({k: _pos for k in ("L", "C", "R", "G", "P_bar", "I_s")})

MODEL = {"oneOf": [
    _kind("boost", {"params": BOOST_PARAMS}),
    _kind("rlc_zip", {"params": RLC_PARAMS}),
    _kind("primal_dual", {"P": _sq, "q": {"anyOf": [_vec, _num]}, "A": _mat, "b": {"anyOf": [_vec, _num]},
                          "tau_x": _sq, "tau_lam": _sq}, ("P", "q")),
    _kind("linear", {"A": _sq, "B": _sq}, ("A", "B")),
]}

METRIC = {"oneOf": [
    _kind("default"),
    _kind("explicit", {"Q": _sq}, ("Q",)),
    _kind("auto_ph", {"alpha": _pos}),
    _kind("gradient", {"M": _sq}),
]}

SAMPLER = _obj({
    "lows": _vec, "highs": _vec,
    "samples": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "region": {"enum": ["box", "set_b"]},
}, ("lows", "highs"))

SIM = _obj({
    "t_end": _pos, "h": _pos, "x0": _vec, "u0": _vec, "lam0": _vec,
    "signal": SIGNAL,
    "record_every": {"type": "integer", "minimum": 1},
})

CONTROLLER = _obj({
    "K1": _sq, "K2": _sq,
    "V_star": _pos, "x_star": _vec, "u_star": {"anyOf": [_vec, _num]},
    "perturbation": {"type": "number", "minimum": 0},
    "band": _pos,
    "nu": SIGNAL,
    "gain_sign": {"enum": [1, -1]},
    "compiled": {"type": "boolean"},
})

OPTIMIZE = _obj({"tol": _pos, "patience": {"type": "integer", "minimum": 1}, "match_tol": _pos})

SUBSYSTEM = _obj({"model": MODEL, "metric": METRIC, "sampler": SAMPLER, "x0": _vec, "u0": _vec},
                 ("model", "x0", "u0"))

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "run configuration",
    **_obj({
        "model": MODEL,
        "metric": METRIC,
        "sampler": SAMPLER,
        "sim": SIM,
        "controller": CONTROLLER,
        "optimize": OPTIMIZE,
        "interconnect": _obj({"first": SUBSYSTEM, "second": SUBSYSTEM}, ("first", "second")),
        "tolerances": _obj({"dissipation": _pos, "neg": _pos, "zero": _pos, "invariant": _pos}),
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    }),
}


def _line_of(text: str, path) -> int:
    """Best-effort line of the JSON value at ``path`` (keys searched in order)."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(json.dumps(key), pos)
            if hit < 0:
                break
            pos = hit
    return text.count("\n", 0, pos) + 1


def _where(path) -> str:
    out = ""
    for key in path:
        out += f"[{key}]" if isinstance(key, int) else f".{key}"
    return out.lstrip(".") or "<root>"


def _explain(err):
    """Descend into a kind-tagged ``oneOf`` failure to the branch the document picked."""
    if err.validator == "oneOf" and isinstance(err.instance, dict) and "kind" in err.instance:
        branches = {}
        for sub in err.context:
            branches.setdefault(sub.relative_schema_path[0], []).append(sub)
        chosen = [subs for subs in branches.values()
                  if not any(s.validator == "const" and list(s.relative_path) == ["kind"] for s in subs)]
        if chosen:
            return _explain(chosen[0][0])
        return list(err.absolute_path) + ["kind"], f"unknown kind {err.instance['kind']!r}"
    return list(err.absolute_path), err.message


def validate(doc: dict, text: Optional[str] = None, source: str = "<config>") -> dict:
    """Raise ``ConfigError`` listing every schema violation with its line."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if not errors:
        return doc
    lines = []
    for err in errors:
        path, message = _explain(err)
        line = _line_of(text, path) if text is not None else 0
        lines.append(f"{source}:{line}: {_where(path)}: {message}")
    raise ConfigError("invalid configuration\n  " + "\n  ".join(lines))


def load(path) -> dict:
    """Read, parse and validate a config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    return validate(doc, text, str(path))


@dataclass(frozen=True)
class Tolerances:
    dissipation: float = 1e-6
    neg: float = 1e-9
    zero: float = 1e-9
    invariant: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    """Validated config document plus run-level settings."""

    doc: dict
    seed: int = 0
    out: Optional[str] = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    @classmethod
    def from_doc(cls, doc: dict, seed: Optional[int] = None, out: Optional[str] = None) -> "RunConfig":
        validate(doc)
        tol = Tolerances(**doc.get("tolerances", {}))
        return cls(doc=doc, seed=doc.get("seed", 0) if seed is None else seed,
                   out=out if out is not None else doc.get("out"), tolerances=tol)

    def section(self, name: str) -> dict:
        if name not in self.doc:
            raise ConfigError(f"this command needs a '{name}' section")
        return self.doc[name]

    def get(self, name: str, default=None):
        return self.doc.get(name, default)
