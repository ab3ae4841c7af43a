"""JSON configuration: strict schema, semantic checks and construction of model objects.

Key names carry their units (``delta_time``, ``nu_per_time``, ``max_rate``...).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import kernels as K
from . import rates as R
from .network import AgeLaw, InitialSignal, NetworkConfig, Population

__all__ = ["ConfigError", "SCHEMA", "parse_config", "load_config", "build_network", "config_hash", "RunSettings"]


class ConfigError(ValueError):
    """Schema or semantic errors; ``errors`` is a list of (path, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_times = {"type": "array", "items": _num}

_SCALAR_MAP = {
    "oneOf": [
        _obj({"kind": {"const": "constant"}, "value_rate": _nonneg}, ["kind", "value_rate"]),
        _obj({"kind": {"const": "logistic"}, "max_rate": _nonneg, "gain": _num, "threshold": _num,
              "min_rate": _nonneg}, ["kind", "max_rate"]),
        _obj({"kind": {"const": "affine_clamped"}, "intercept_rate": _num, "slope": _num,
              "lower_rate": _nonneg, "upper_rate": _nonneg}, ["kind", "intercept_rate", "slope"]),
        _obj({"kind": {"const": "exponential"}, "scale_rate": _nonneg, "gain": _num}, ["kind"]),
    ]
}

_AGE_MAP = {
    "oneOf": [
        _obj({"kind": {"const": "exp_recovery"}, "tau_time": _pos}, ["kind", "tau_time"]),
        _obj({"kind": {"const": "ramp"}, "tau_time": _pos}, ["kind", "tau_time"]),
    ]
}

_RATE = _obj({
    "form": {"enum": ["hard_refractory", "product"]},
    "f": _SCALAR_MAP,
    "g": _AGE_MAP,
    "delta_time": _nonneg,
    "lipschitz_L": {"type": "number", "minimum": 1},
    "postjump_bound_K": _nonneg,
    "cap_rate": _nonneg,
    "doeblin": _obj({"c_rate": _nonneg, "a_star_time": _nonneg, "x_star": _nonneg}),
}, ["form", "f"])

_KERNEL = {
    "oneOf": [
        _obj({"kind": {"const": "erlang"}, "b": _num, "nu_per_time": _pos,
              "n": {"type": "integer", "minimum": 0, "maximum": 64}, "truncate_after_time": _nonneg},
             ["kind", "b", "nu_per_time"]),
        _obj({"kind": {"const": "piecewise_constant"}, "grid_time": {**_times, "minItems": 2},
              "values": {**_times, "minItems": 1}, "truncate_after_time": _nonneg},
             ["kind", "grid_time", "values"]),
        _obj({"kind": {"const": "zero"}}, ["kind"]),
    ]
}

_SIGNAL = {
    "oneOf": [
        _obj({"kind": {"const": "zero"}}, ["kind"]),
        _obj({"kind": {"const": "exponential"}, "amplitude": _num, "rate_per_time": _nonneg},
             ["kind", "amplitude"]),
        _obj({"kind": {"const": "explicit"}, "grid_time": {**_times, "minItems": 2}, "values": _times},
             ["kind", "grid_time", "values"]),
        _obj({"kind": {"const": "inherited"},
              "point_times": {"type": "object", "patternProperties": {"^[0-9]+$": _times},
                              "additionalProperties": False}},
             ["kind", "point_times"]),
    ]
}

_AGE_LAW = {
    "oneOf": [
        _obj({"kind": {"const": "point_mass"}, "age_time": _nonneg, "salt": {"type": "integer"}},
             ["kind", "age_time"]),
        _obj({"kind": {"const": "exponential"}, "rate_per_time": _pos, "salt": {"type": "integer"}},
             ["kind", "rate_per_time"]),
        _obj({"kind": {"const": "uniform"}, "max_time": _pos, "salt": {"type": "integer"}},
             ["kind", "max_time"]),
        _obj({"kind": {"const": "empirical"}, "ages_time": {"type": "array", "items": _nonneg, "minItems": 1},
              "salt": {"type": "integer"}}, ["kind", "ages_time"]),
    ]
}

SCHEMA = _obj({
    "populations": {"type": "array", "minItems": 1, "items": _obj({
        "name": {"type": "string"},
        "size": {"type": "integer", "minimum": 0},
        "rate": _RATE,
        "initial_signal": _SIGNAL,
        "initial_age": _AGE_LAW,
    }, ["size", "rate"])},
    "kernels": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _KERNEL}},
    "horizon_time": _pos,
    "mode": {"enum": ["finite", "mean_field"]},
    "kernel_scale": _num,
    "prm": _obj({"strip_height_rate": _pos, "window_time": _pos}),
    "lookahead_time": _pos,
    "max_events": {"type": "integer", "minimum": 1},
    "prehistory_rate": _nonneg,
    "meanfield": _obj({"particles": {"type": "integer", "minimum": 1}, "step_time": _pos,
                       "tol": _pos, "max_iter": {"type": "integer", "minimum": 1}}),
    "stationary": _obj({"h_integral": _num, "lambda_max_rate": _pos}),
    "coupling": _obj({"replicates": {"type": "integer", "minimum": 1},
                      "initial_age_a": _AGE_LAW, "initial_age_b": _AGE_LAW,
                      "initial_signal_a": _SIGNAL, "initial_signal_b": _SIGNAL},
                     ["initial_age_a", "initial_age_b"]),
    "chaos": _obj({"N_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                   "replicates": {"type": "integer", "minimum": 1},
                   "particles": {"type": "integer", "minimum": 1},
                   "tagged": {"enum": ["all", "first"]}}),
    "weights": _obj({"truncation_horizons_time": {"type": "array", "items": _pos, "minItems": 1},
                     "replicates": {"type": "integer", "minimum": 1}}, ["truncation_horizons_time"]),
}, ["populations", "kernels", "horizon_time"])


@dataclass
class RunSettings:
    """A parsed configuration: the network plus the raw sections the subcommands read."""

    network: NetworkConfig
    raw: dict
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path)


def _best_errors(err):
    # for oneOf failures report the branch whose 'kind' matched, if any
    if err.validator == "oneOf" and err.context:
        inst = err.instance
        kind = inst.get("kind") if isinstance(inst, dict) else None
        branch = [e for e in err.context if kind is not None and e.schema_path and
                  err.validator_value[e.schema_path[0]].get("properties", {}).get("kind", {}).get("const") == kind]
        if branch:
            return [(_path(e), e.message) for e in branch]
    return [(_path(err), err.message)]


def parse_config(raw) -> RunSettings:
    """Validate a config mapping (or a path) and build the model objects.

    Raises ConfigError listing every schema and semantic error with its path.
    """
    if isinstance(raw, (str, Path)):
        return load_config(raw)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        errors.extend(_best_errors(err))
    if errors:
        raise ConfigError(errors)
    errors = _semantic_errors(raw)
    if errors:
        raise ConfigError(errors)
    try:
        net = build_network(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError([("", str(exc))]) from exc
    return RunSettings(net, raw)


def load_config(path) -> RunSettings:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError([("", f"config file {path} not found")]) from exc
    except UnicodeDecodeError as exc:
        raise ConfigError([("", f"config file {path} is not valid UTF-8")]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from exc
    return parse_config(raw)


def _semantic_errors(raw) -> list:
    errs = []
    pops = raw["populations"]
    if sum(p["size"] for p in pops) <= 0:
        errs.append(("populations", "population sizes sum to 0"))
    Kn = len(pops)
    ker = raw["kernels"]
    if len(ker) != Kn or any(len(row) != Kn for row in ker):
        errs.append(("kernels", f"kernel matrix must be {Kn}x{Kn}"))
    for i, p in enumerate(pops):
        r = p["rate"]
        if r["form"] == "product" and "g" not in r:
            errs.append((f"populations/{i}/rate", "product rate needs an age map g"))
        sig = p.get("initial_signal", {})
        if sig.get("kind") == "explicit" and len(sig["grid_time"]) != len(sig["values"]):
            errs.append((f"populations/{i}/initial_signal", "grid_time and values differ in length"))
        if sig.get("kind") == "inherited":
            for key, times in sig["point_times"].items():
                if int(key) >= Kn:
                    errs.append((f"populations/{i}/initial_signal/point_times/{key}", "unknown population"))
                if any(t > 0 for t in times):
                    errs.append((f"populations/{i}/initial_signal/point_times/{key}", "times must be <= 0"))
    for k, row in enumerate(ker):
        for l, kk in enumerate(row):
            if kk["kind"] == "piecewise_constant" and len(kk["grid_time"]) != len(kk["values"]) + 1:
                errs.append((f"kernels/{k}/{l}", "grid_time needs one more entry than values"))
    return errs


def _scalar_map(cfg) -> R.ScalarMap:
    kind = cfg["kind"]
    if kind == "constant":
        return R.constant(cfg["value_rate"])
    if kind == "logistic":
        return R.logistic(cfg["max_rate"], cfg.get("gain", 1.0), cfg.get("threshold", 0.0), cfg.get("min_rate", 0.0))
    if kind == "affine_clamped":
        return R.affine_clamped(cfg["intercept_rate"], cfg["slope"], cfg.get("lower_rate", 0.0), cfg.get("upper_rate"))
    return R.exponential_map(cfg.get("scale_rate", 1.0), cfg.get("gain", 1.0))


def _age_map(cfg):
    tau = cfg["tau_time"]
    if cfg["kind"] == "exp_recovery":
        return lambda a: 1.0 - np.exp(-np.asarray(a) / tau)
    return lambda a: np.minimum(np.asarray(a) / tau, 1.0)


def build_rate(cfg) -> R.RateSpec:
    f = _scalar_map(cfg["f"])
    kw = {}
    if "postjump_bound_K" in cfg:
        kw["postjump_bound_K"] = cfg["postjump_bound_K"]
    if "cap_rate" in cfg:
        kw["cap"] = cfg["cap_rate"]
    if "doeblin" in cfg:
        d = cfg["doeblin"]
        kw.update(doeblin_c=d.get("c_rate", 0.0), a_star=d.get("a_star_time", 0.0), x_star=d.get("x_star", 0.0))
    delta = cfg.get("delta_time", 0.0)
    if cfg["form"] == "hard_refractory":
        return R.hard_refractory(f, delta, cfg.get("lipschitz_L"), **kw)
    L = cfg.get("lipschitz_L", max(1.0, f.lipschitz if math.isfinite(f.lipschitz) else 1.0))
    return R.product_rate(f, _age_map(cfg["g"]), 1.0, L, delta, **kw)


def build_kernel(cfg) -> K.KernelSpec:
    kind = cfg["kind"]
    if kind == "erlang":
        ker = K.erlang(cfg["b"], cfg["nu_per_time"], cfg.get("n", 0))
    elif kind == "piecewise_constant":
        ker = K.piecewise_constant(cfg["grid_time"], cfg["values"])
    else:
        ker = K.zero_kernel()
    if "truncate_after_time" in cfg:
        ker = K.truncated(ker, cfg["truncate_after_time"])
    return ker


def build_signal(cfg) -> InitialSignal:
    if cfg is None:
        return InitialSignal()
    kind = cfg["kind"]
    if kind == "exponential":
        return InitialSignal("exponential", amplitude=cfg["amplitude"], rate=cfg.get("rate_per_time", 1.0))
    if kind == "explicit":
        return InitialSignal("explicit", grid=tuple(cfg["grid_time"]), values=tuple(cfg["values"]))
    if kind == "inherited":
        return InitialSignal("inherited", point_times={int(k): v for k, v in cfg["point_times"].items()})
    return InitialSignal()


def build_age_law(cfg) -> AgeLaw:
    if cfg is None:
        return AgeLaw()
    salt = cfg.get("salt", 0)
    kind = cfg["kind"]
    if kind == "point_mass":
        return AgeLaw("point_mass", value=cfg["age_time"], salt=salt)
    if kind == "exponential":
        return AgeLaw("exponential", rate=cfg["rate_per_time"], salt=salt)
    if kind == "uniform":
        return AgeLaw("uniform", a_max=cfg["max_time"], salt=salt)
    return AgeLaw("empirical", ages=tuple(cfg["ages_time"]), salt=salt)


def build_network(raw) -> NetworkConfig:
    pops = tuple(
        Population(p["size"], build_rate(p["rate"]), build_signal(p.get("initial_signal")),
                   build_age_law(p.get("initial_age")), p.get("name", ""))
        for p in raw["populations"]
    )
    km = K.KernelMatrix(tuple(tuple(build_kernel(k) for k in row) for row in raw["kernels"]),
                        raw.get("kernel_scale", 1.0))
    prm = raw.get("prm", {})
    return NetworkConfig(
        pops, km, raw["horizon_time"], raw.get("mode", "finite"),
        strip_height=prm.get("strip_height_rate"), prm_window=prm.get("window_time", 1.0),
        lookahead=raw.get("lookahead_time"), max_events=raw.get("max_events", 10_000_000),
        prehistory=raw.get("prehistory_rate", 0.0),
    )
