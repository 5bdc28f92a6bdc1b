"""Run configuration: JSON schema, validation with JSON-pointer paths, presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from . import phase_space as ps

COMMANDS = ("analyze", "evolve", "dissipation", "spectral", "cost", "control", "chain")
PRESETS = ("heat", "kolmogorov", "kfp", "harmonic", "catalogue-k0", "chain")

EXIT_OK, EXIT_SCHEMA, EXIT_PRESET, EXIT_IO = 0, 2, 3, 4

_pos = {"type": "number", "exclusiveMinimum": 0}
_num = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "preset": {"type": "string"},
        # preset parameters
        "a": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
        "b": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
        "c": {"type": "number", "minimum": 0, "maximum": 100},
        "alpha": _pos,
        "alpha1": _pos,
        "alpha2": _pos,
        "p": {"type": "integer", "minimum": 0, "maximum": 7},
        "n": {"type": "integer", "minimum": 1, "maximum": 4},
        "symbol": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "M_re"],
            "properties": {"n": {"type": "integer", "minimum": 1, "maximum": 6}, "M_re": _matrix, "M_im": _matrix},
        },
        "ou": {
            "type": "object",
            "additionalProperties": False,
            "required": ["Q", "B"],
            "properties": {"Q": _matrix, "B": _matrix},
        },
        "region": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["complement_of_ball", "union_of_balls", "half_space", "ball_lattice"]},
                "R": {"type": "number", "minimum": 0},
                "center": {"type": "array", "items": _num},
                "balls": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["center", "r"],
                        "properties": {"center": {"type": "array", "items": _num}, "r": _pos},
                    },
                },
                "normal": {"type": "array", "items": _num},
                "offset": _num,
                "spacing": _pos,
                "r": _pos,
                "n": {"type": "integer", "minimum": 1, "maximum": 6},
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1, "maximum": 200},
                "grid": {"type": "integer", "minimum": 16, "maximum": 4096},
                "L": _pos,
                "nt": {"type": "integer", "minimum": 16, "maximum": 1 << 16},
                "T": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
                "times": {"type": "array", "items": _pos, "minItems": 1},
                "cutoffs": {"type": "array", "items": _pos, "minItems": 1},
                "k_list": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "gs_times": {"type": "array", "items": _pos, "minItems": 2},
                "eps": _pos,
                "q": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tol": _pos,
                "trace": {"type": "boolean"},
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a", "b", "m", "c1", "c2", "t0"],
            "properties": {k: _pos for k in ("a", "b", "m", "c1", "c2", "t0")},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}, "minItems": 1, "uniqueItems": True},
                "save_matrices": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

_PRESET_KEYS = {
    "heat": {"n"},
    "kolmogorov": set(),
    "kfp": {"a"},
    "harmonic": {"n"},
    "catalogue-k0": {"p", "n"},
    "chain": {"a", "b", "c", "alpha", "alpha1", "alpha2"},
}
_PARAM_KEYS = {"a", "b", "c", "alpha", "alpha1", "alpha2", "p", "n"}


class ConfigError(Exception):
    """Validation failure; ``violations`` holds (JSON pointer, message) pairs."""

    def __init__(self, violations: list[tuple[str, str]], code: int = EXIT_SCHEMA):
        self.violations = violations
        self.code = code
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in violations))


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


@dataclass
class RunConfig:
    command: str
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    symbol: dict | None = None
    ou: dict | None = None
    region: dict | None = None
    numerics: dict = field(default_factory=dict)
    params: dict | None = None
    output: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"command": self.command, "seed": self.seed}
        if self.preset is not None:
            d["preset"] = self.preset
        d.update(self.preset_params)
        for k in ("symbol", "ou", "region", "params"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        if self.numerics:
            d["numerics"] = self.numerics
        if self.output:
            d["output"] = self.output
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def parse_config(text: str | dict) -> RunConfig:
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("", f"malformed JSON: {exc.msg} at line {exc.lineno}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([("", "top level must be an object")])
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    viol = []
    for e in errs:
        ptr = _pointer(e.absolute_path)
        if e.validator == "required":
            missing = e.message.split("'")[1]
            ptr = ptr + "/" + missing
        viol.append((ptr, e.message))
    if viol:
        raise ConfigError(viol)
    cmd = doc["command"]
    preset = doc.get("preset")
    pp = {k: doc[k] for k in _PARAM_KEYS if k in doc}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([("/preset", f"unknown preset {preset!r}; known: {', '.join(PRESETS)}")], EXIT_PRESET)
        extra = set(pp) - _PRESET_KEYS[preset]
        if extra:
            raise ConfigError([(f"/{k}", f"not a parameter of preset {preset!r}") for k in sorted(extra)])
    elif pp:
        raise ConfigError([(f"/{k}", "preset parameter given without a preset") for k in sorted(pp)])
    sources = [k for k in ("preset", "symbol", "ou") if k in doc]
    if len(sources) > 1:
        raise ConfigError([(f"/{sources[1]}", "give exactly one of preset, symbol, ou")])
    need_problem = cmd in ("analyze", "evolve", "dissipation", "control", "chain")
    if need_problem and not sources:
        raise ConfigError([("/preset", f"command {cmd!r} needs a preset, symbol or ou problem")])
    if cmd == "chain" and preset != "chain":
        raise ConfigError([("/preset", "command 'chain' requires preset 'chain'")])
    if cmd == "cost" and "params" not in doc:
        raise ConfigError([("/params", "command 'cost' requires params")])
    if cmd in ("spectral", "control") and "region" not in doc:
        raise ConfigError([("/region", f"command {cmd!r} requires a region")])
    if preset == "chain":
        missing = sorted(_PRESET_KEYS["chain"] - set(pp))
        if missing:
            raise ConfigError([(f"/{k}", "required by preset 'chain'") for k in missing])
    p = doc.get("params")
    if p is not None and not p["a"] < p["b"]:
        raise ConfigError([("/params/b", "need a < b")])
    return RunConfig(
        command=cmd,
        preset=preset,
        preset_params=pp,
        symbol=doc.get("symbol"),
        ou=doc.get("ou"),
        region=doc.get("region"),
        numerics=dict(doc.get("numerics", {})),
        params=doc.get("params"),
        output=dict(doc.get("output", {})),
        seed=int(doc.get("seed", 0)),
    )


@dataclass
class Problem:
    symbol: ps.QuadraticSymbol
    ou: ps.OUSystem | None
    label: str
    chain: ps.ChainPreset | None = None

    @property
    def n(self) -> int:
        return self.symbol.n


def resolve_problem(cfg: RunConfig) -> Problem | None:
    pp = cfg.preset_params
    if cfg.preset is not None:
        name = cfg.preset
        if name == "heat":
            n = pp.get("n", 1)
            return Problem(ps.heat_symbol(n), ps.heat_system(n), f"heat(n={n})")
        if name == "kolmogorov":
            sys = ps.kolmogorov_system()
            return Problem(ps.build_ou_symbol(sys), sys, "kolmogorov")
        if name == "kfp":
            a = pp.get("a", 1.0)
            return Problem(ps.kfp_symbol(a), None, f"kfp(a={a})")
        if name == "harmonic":
            n = pp.get("n", 1)
            return Problem(ps.harmonic_symbol(n), None, f"harmonic(n={n})")
        if name == "catalogue-k0":
            k0 = pp.get("p", 1)
            return Problem(ps.catalogue_symbol(k0, pp.get("n")), None, f"catalogue-k0({k0})")
        if name == "chain":
            ch = ps.chain_preset(pp["a"], pp["b"], pp["c"], pp["alpha"], pp["alpha1"], pp["alpha2"])
            return Problem(ch.symbol, None, "chain", ch)
        raise ConfigError([("/preset", f"unknown preset {name!r}")], EXIT_PRESET)
    if cfg.ou is not None:
        try:
            sys = ps.OUSystem.from_dict(cfg.ou)
        except ValueError as exc:
            raise ConfigError([("/ou", str(exc))]) from None
        return Problem(ps.build_ou_symbol(sys), sys, "ou")
    if cfg.symbol is not None:
        try:
            sym = ps.QuadraticSymbol.from_dict(cfg.symbol)
        except (ValueError, KeyError) as exc:
            raise ConfigError([("/symbol", str(exc))]) from None
        return Problem(sym, None, "symbol")
    return None


def resolve_region(cfg: RunConfig, n: int):
    from .hermite import RegionSpec

    r = dict(cfg.region)
    kind = r.pop("kind")
    n = r.pop("n", n)
    try:
        if kind == "complement_of_ball":
            return RegionSpec.complement_of_ball(n, r.get("R", 1.0), r.get("center"))
        if kind == "union_of_balls":
            return RegionSpec.union_of_balls(n, [(np.asarray(b["center"], float), b["r"]) for b in r.get("balls", [])])
        if kind == "half_space":
            return RegionSpec.half_space(n, r.get("normal", [1.0] + [0.0] * (n - 1)), r.get("offset", 0.0))
        return RegionSpec.ball_lattice(n, r.get("spacing", 2.0), r.get("r", 0.5))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError([("/region", str(exc))]) from None
