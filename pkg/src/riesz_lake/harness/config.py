"""Scenario configuration: loading, defaults, validation and rule evaluation.

Configs are TOML (or JSON) documents with the tables documented in
``docs/config.md``.  Validation errors carry the dotted name of the offending
field.
"""
from __future__ import annotations

import ast
import copy
import json
import math
import operator
import sys
from pathlib import Path

from ..errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = {
    "kernel": {"family", "s", "d", "L", "coeffs", "kappa", "min_distance"},
    "confinement": {"kind", "a", "coeffs"},
    "domain": {"kind", "L", "n", "d"},
    "background": {"kind", "case", "R"},
    "particles": {"N", "epsilon", "epsilon_rule", "gamma"},
    "time": {"T", "dt", "dt_rule", "scheme", "sample_every"},
    "init": {"kind", "r_N", "jitter", "variant"},
    "field": {"kind", "amplitude", "n", "kmax", "evolve", "dt"},
    "diagnostics": {"kappa", "K_max", "write_trajectory", "plots", "C"},
    "output": {"dir"},
    "sweep": {"N", "epsilon_rule", "threads"},
}
TOP_LEVEL = {"seed", "name"}

DEFAULTS = {
    "confinement": {"kind": "zero"},
    "domain": {"kind": "whole"},
    "particles": {"gamma": 0.0},
    "time": {"dt_rule": "epsilon/100", "scheme": "verlet", "sample_every": 1},
    "init": {"kind": "monokinetic", "r_N": 0.0, "jitter": 0.0, "variant": "shifted"},
    "field": {"kind": "zero", "amplitude": 1.0, "kmax": 4, "evolve": False},
    "diagnostics": {"K_max": 32, "write_trajectory": False, "plots": False},
    "output": {"dir": "out"},
    "seed": 0,
}

INIT_KINDS = ("monokinetic", "lattice", "exact_1d", "critical")
FIELD_KINDS = ("zero", "taylor_green", "random")

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sqrt": math.sqrt, "log": math.log, "exp": math.exp}
_CONSTS = {"pi": math.pi, "e": math.e}


def evaluate_rule(rule, **names) -> float:
    """Evaluate an arithmetic rule such as ``"N^-0.3"`` or ``"epsilon/100"``.

    Only numbers, the given names, ``pi``, ``e``, ``sqrt``/``log``/``exp`` and
    ``+ - * / ^ **`` are accepted.
    """
    if isinstance(rule, (int, float)):
        return float(rule)
    text = str(rule).replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse rule {rule!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in names:
                return float(names[node.id])
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r} in rule {rule!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ValueError(f"unsupported expression in rule {rule!r}")

    return float(ev(tree))


def load_config(path) -> dict:
    """Read a TOML or JSON config; a ``meta.json`` from a previous run is accepted too."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="path") from exc
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", field="path") from exc
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    return raw


def normalize(raw: dict) -> dict:
    """Apply defaults and validate; returns a new dict."""
    cfg = copy.deepcopy(raw)
    for key in cfg:
        if key not in SECTIONS and key not in TOP_LEVEL:
            raise ConfigError(f"unknown config section {key!r}", field=key)
    for sec, allowed in SECTIONS.items():
        if sec in cfg:
            if not isinstance(cfg[sec], dict):
                raise ConfigError(f"{sec} must be a table", field=sec)
            for key in cfg[sec]:
                if key not in allowed:
                    raise ConfigError(f"unknown field {sec}.{key}", field=f"{sec}.{key}")
    for sec, vals in DEFAULTS.items():
        if isinstance(vals, dict):
            merged = dict(vals)
            merged.update(cfg.get(sec, {}))
            cfg[sec] = merged
        else:
            cfg.setdefault(sec, vals)

    if "kernel" not in cfg or "family" not in cfg["kernel"]:
        raise ConfigError("missing required section: kernel (with a family)", field="kernel")
    if "particles" not in raw or "N" not in cfg["particles"]:
        raise ConfigError("missing required field particles.N", field="particles.N")
    if "time" not in raw or "T" not in cfg["time"]:
        raise ConfigError("missing required field time.T", field="time.T")

    p = cfg["particles"]
    _positive_int(p["N"], "particles.N")
    if "epsilon" not in p and "epsilon_rule" not in p:
        raise ConfigError("give particles.epsilon or particles.epsilon_rule", field="particles.epsilon")
    if float(p["gamma"]) < 0:
        raise ConfigError("particles.gamma must be nonnegative", field="particles.gamma")
    t = cfg["time"]
    if float(t["T"]) < 0:
        raise ConfigError("time.T must be nonnegative", field="time.T")
    if t["scheme"] not in ("verlet", "yoshida4"):
        raise ConfigError(f"unknown time.scheme {t['scheme']!r}", field="time.scheme")
    _positive_int(t["sample_every"], "time.sample_every")
    dom = cfg["domain"]
    if dom["kind"] not in ("whole", "torus"):
        raise ConfigError(f"domain.kind must be 'whole' or 'torus', got {dom['kind']!r}", field="domain.kind")
    if dom["kind"] == "torus":
        dom.setdefault("L", 1.0)
        dom.setdefault("n", 64)
        if float(dom["L"]) <= 0:
            raise ConfigError("domain.L must be positive", field="domain.L")
        _positive_int(dom["n"], "domain.n")
    if cfg["init"]["kind"] not in INIT_KINDS:
        raise ConfigError(f"init.kind must be one of {INIT_KINDS}", field="init.kind")
    if cfg["field"]["kind"] not in FIELD_KINDS:
        raise ConfigError(f"field.kind must be one of {FIELD_KINDS}", field="field.kind")
    if cfg["field"]["kind"] != "zero" and dom["kind"] != "torus":
        raise ConfigError("modulating fields need a torus domain", field="field.kind")
    _positive_int(cfg["diagnostics"]["K_max"], "diagnostics.K_max")
    _positive_int(cfg["seed"] + 1, "seed")
    resolve_epsilon(cfg)
    resolve_dt(cfg)
    return cfg


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}", field=name)


def resolve_epsilon(cfg) -> float:
    p = cfg["particles"]
    N = p["N"]
    if "epsilon" in p:
        eps, name = p["epsilon"], "particles.epsilon"
    else:
        eps, name = p["epsilon_rule"], "particles.epsilon_rule"
    try:
        val = evaluate_rule(eps, N=N)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc), field=name) from None
    if not val > 0 or not math.isfinite(val):
        raise ConfigError(f"{name} must evaluate to a positive number, got {val}", field=name)
    return val


def resolve_dt(cfg) -> float:
    t = cfg["time"]
    eps = resolve_epsilon(cfg)
    if "dt" in t:
        val, name = t["dt"], "time.dt"
    else:
        val, name = t["dt_rule"], "time.dt_rule"
    try:
        dt = evaluate_rule(val, epsilon=eps, N=cfg["particles"]["N"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc), field=name) from None
    if not dt > 0:
        raise ConfigError(f"{name} must evaluate to a positive step", field=name)
    return dt


def resolve_r_N(cfg) -> float:
    try:
        return evaluate_rule(cfg["init"]["r_N"], N=cfg["particles"]["N"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc), field="init.r_N") from None
