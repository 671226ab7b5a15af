"""Experiment configuration: flat JSON files, validated and completed with defaults.

A config is a JSON object.  Scalar model and integrator settings sit at the
top level; the initial condition and the forcing are small tagged objects::

    {"kind": "simulate", "epsilon": 1, "delta": 0, "sigma": 1, "m": 100, "T": 10,
     "initial_condition": {"type": "gaussian", "width": 2, "charge": 1}}

Unknown keys are rejected (with a close-match suggestion), as are values that
violate any constraint the owning module would enforce later.
"""

import difflib
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .attractor import WEIGHT_FAMILIES, WeightSpec, damping_condition
from .dynamics import SCHEMES
from .exceptions import ValidationError
from .lattice import LatticeState
from .stationary import anticontinuum_seed

__all__ = ["KINDS", "ExperimentConfig", "load_config", "parse_config", "build_initial",
           "build_forcing", "dumps"]

KINDS = ("simulate", "standing_wave", "contraction_probe", "geometry_check",
         "tail_audit", "truncation_sweep", "weight_audit")

_REQ = object()


def _num(lo=None, hi=None, strict_lo=False, integer=False, allow_inf=False):
    def check(name, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"{name} must be a number, got {v!r}")
        if integer and (not isinstance(v, int) and not float(v).is_integer()):
            raise ValidationError(f"{name} must be an integer, got {v!r}")
        if math.isnan(v) or (math.isinf(v) and not allow_inf):
            raise ValidationError(f"{name} must be finite, got {v!r}")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            op = ">" if strict_lo else ">="
            raise ValidationError(f"{name} must be {op} {lo}, got {v!r}")
        if hi is not None and v > hi:
            raise ValidationError(f"{name} must be <= {hi}, got {v!r}")
        return int(v) if integer else v
    return check


def _choice(options):
    def check(name, v):
        if v not in options:
            raise ValidationError(f"{name} must be one of {list(options)}, got {v!r}")
        return v
    return check


def _bool(name, v):
    if not isinstance(v, bool):
        raise ValidationError(f"{name} must be true or false, got {v!r}")
    return v


def _num_list(integer=False, lo=None, strict_lo=False, nonempty=True):
    item = _num(lo=lo, strict_lo=strict_lo, integer=integer)

    def check(name, v):
        if not isinstance(v, list) or (nonempty and not v):
            raise ValidationError(f"{name} must be a nonempty list of numbers")
        return [item(f"{name}[{i}]", x) for i, x in enumerate(v)]
    return check


def _optional(check):
    def wrapped(name, v):
        return None if v is None else check(name, v)
    return wrapped


def _obj(name, v):
    if not isinstance(v, dict) or "type" not in v:
        raise ValidationError(f"{name} must be an object with a 'type' field")
    return v


_MODEL = {
    "epsilon": (_num(0, strict_lo=True, allow_inf=False), 1.0),
    "sigma": (_num(0, strict_lo=True), 1.0),
    "m": (_num(1, integer=True), _REQ),
}
_DYN = {
    "delta": (_num(0), 0.0),
    "T": (_num(0), _REQ),
    "dt": (_num(0, strict_lo=True), 0.01),
    "scheme": (_choice(SCHEMES), "implicit_midpoint"),
    "solver_tol": (_num(0, strict_lo=True, hi=1e-6), 1e-12),
    "record_stride": (_num(1, integer=True), 10),
    "max_inner_iters": (_num(1, integer=True), 50),
    "initial_condition": (_obj, {"type": "gaussian", "center": 0.0, "width": 2.0,
                                 "charge": 1.0}),
    "forcing": (_obj, {"type": "none"}),
}
_COMMON = {
    "kind": (_choice(KINDS), _REQ),
    "seed": (_num(0, integer=True), 0),
    "output_dir": (_optional(lambda n, v: str(v)), None),
}

SCHEMA: Dict[str, Dict[str, Any]] = {
    "simulate": {**_MODEL, **_DYN,
                 "tail_M": (_optional(_num(1, integer=True)), None),
                 "weight_family": (_choice(WEIGHT_FAMILIES), "exponential_two_sided"),
                 "lambda": (_optional(_num(0, strict_lo=True)), None),
                 "rho1": (_optional(_num(0, strict_lo=True)), None),
                 "save_snapshots": (_bool, False)},
    "standing_wave": {**_MODEL,
                      "omega": (_num(0, strict_lo=True), 1.0),
                      "initial_condition": (_obj, {"type": "anticontinuum",
                                                   "support": [0]}),
                      "coupling_schedule": (_optional(_num_list(lo=0)), None),
                      "tol": (_num(0, strict_lo=True, hi=1e-8), 1e-10),
                      "max_iter": (_num(1, integer=True), 50),
                      "T": (_optional(_num(0)), None),
                      "dt": (_num(0, strict_lo=True), 1e-3),
                      "scheme": (_choice(SCHEMES), "rk4"),
                      "record_stride": (_num(1, integer=True), 10)},
    "contraction_probe": {**_MODEL, "m": (_num(0, integer=True), 10),
                          "omega": (_num(0, strict_lo=True), 1.0),
                          "R": (_num(0, strict_lo=True), _REQ),
                          "n_pairs": (_num(1, integer=True), 1000),
                          "max_iter": (_num(1, integer=True), 200),
                          "tol": (_num(0, strict_lo=True), 1e-12)},
    "geometry_check": {**_MODEL, "m": (_num(0, integer=True), 10),
                       "omega": (_num(0, strict_lo=True), 1.0),
                       "r": (_num(0, strict_lo=True), _REQ),
                       "n_samples": (_num(1000, integer=True), 10000)},
    "tail_audit": {**_MODEL, **_DYN,
                   "delta": (_num(0, strict_lo=True), _REQ),
                   "rho1": (_num(0, strict_lo=True), _REQ),
                   "eta": (_num(0, strict_lo=True), _REQ),
                   "M_values": (_optional(_num_list(integer=True, lo=1)), None)},
    "truncation_sweep": {**_MODEL, **_DYN,
                         "m": (_num(1, integer=True), None),
                         "m_values": (_num_list(integer=True, lo=1), _REQ),
                         "m_ref": (_num(1, integer=True), _REQ)},
    "weight_audit": {**_MODEL, **_DYN,
                     "delta": (_num(0, strict_lo=True), _REQ),
                     "weight_family": (_choice(WEIGHT_FAMILIES), "exponential_one_sided"),
                     "lambda": (_num(0, strict_lo=True), _REQ),
                     "eta": (_num(0, strict_lo=True), _REQ),
                     "M": (_num(1, integer=True), _REQ)},
}

_IC_KEYS = {
    "zero": {},
    "single_site": {"site": 0, "amplitude": 1.0},
    "gaussian": {"center": 0.0, "width": 2.0, "charge": 1.0, "wavenumber": 0.0},
    "random": {"norm": 1.0, "radius": None},
    "file": {"path": _REQ},
    "anticontinuum": {"support": [0], "omega": None},
}
_FORCING_KEYS = {
    "none": {},
    "box": {"radius": _REQ, "norm": _REQ},
    "values": {"re": _REQ, "im": None},
    "file": {"path": _REQ},
}


def _reject_unknown(given, allowed, where):
    for key in given:
        if key not in allowed:
            hint = difflib.get_close_matches(key, list(allowed), n=1)
            msg = f"unknown key {key!r} in {where}"
            if hint:
                msg += f"; did you mean {hint[0]!r}?"
            raise ValidationError(msg)


def _tagged(value, table, where):
    kind = value.get("type")
    if kind not in table:
        raise ValidationError(f"{where}.type must be one of {list(table)}, got {kind!r}")
    allowed = table[kind]
    _reject_unknown(value, ["type", *allowed], where)
    out = {"type": kind}
    for key, default in allowed.items():
        if key in value:
            out[key] = value[key]
        elif default is _REQ:
            raise ValidationError(f"{where} of type {kind!r} needs {key!r}")
        else:
            out[key] = default
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; ``values`` holds every field with
    defaults filled in (``kind`` included)."""

    values: Dict[str, Any]

    @property
    def kind(self):
        return self.values["kind"]

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def replace(self, **changes):
        return parse_config({**self.values, **changes})

    def to_dict(self):
        return json.loads(json.dumps(self.values))

    def echo(self):
        """Canonical serialization; reloading it gives an equal config."""
        return dumps(self.values)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.echo() == other.echo()

    def __hash__(self):
        return hash(self.echo())


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def parse_config(raw, kind=None):
    """Validate a config mapping; ``kind`` (from the command line) must agree
    with the ``kind`` key when both are present."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    raw = dict(raw)
    if kind is not None:
        kind = kind.replace("-", "_")
        if raw.get("kind", kind) != kind:
            raise ValidationError(
                f"config kind {raw['kind']!r} does not match command {kind!r}")
        raw["kind"] = kind
    if raw.get("kind") not in KINDS:
        raise ValidationError(f"kind must be one of {list(KINDS)}, got {raw.get('kind')!r}")
    schema = {**_COMMON, **SCHEMA[raw["kind"]]}
    _reject_unknown(raw, schema, "config")
    vals = {}
    for key, (check, default) in schema.items():
        if key in raw:
            vals[key] = check(key, raw[key])
        elif default is _REQ:
            raise ValidationError(f"missing required key {key!r}")
        else:
            vals[key] = default
    if "initial_condition" in vals:
        vals["initial_condition"] = _tagged(vals["initial_condition"], _IC_KEYS,
                                            "initial_condition")
    if "forcing" in vals:
        vals["forcing"] = _tagged(vals["forcing"], _FORCING_KEYS, "forcing")
    cfg = ExperimentConfig(vals)
    _cross_checks(cfg)
    return cfg


def load_config(path, kind=None):
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, kind)


def _lattice_m(cfg):
    if cfg.kind == "truncation_sweep":
        return min(cfg["m_values"])
    return cfg["m"]


def _cross_checks(cfg):
    k = cfg.kind
    if k == "truncation_sweep":
        if cfg["m_ref"] < max(cfg["m_values"]):
            raise ValidationError("m_ref must be at least max(m_values)")
        if cfg["m"] is not None and cfg["m"] != min(cfg["m_values"]):
            raise ValidationError("m, if given, must equal min(m_values)")
    if k == "weight_audit":
        spec = WeightSpec(cfg["weight_family"], cfg["lambda"])
        ok, slack = damping_condition(cfg["delta"], spec)
        if not ok or slack == 0.0:
            raise ValidationError(
                f"damping condition delta/2 - 2 d1 d2^(-1/2) > 0 fails for "
                f"delta={cfg['delta']:g}, lambda={cfg['lambda']:g} "
                f"({cfg['weight_family']}): slack {slack:.6g}")
        spec.weights(_lattice_m(cfg))
    if k == "simulate" and cfg["lambda"] is not None:
        WeightSpec(cfg["weight_family"], cfg["lambda"]).weights(cfg["m"])
    if "forcing" in cfg.values:
        g = build_forcing(cfg)
        if k in ("tail_audit", "simulate") and cfg.get("rho1") is not None:
            delta = cfg["delta"]
            rho = float(np.linalg.norm(g)) / delta if delta > 0 else math.inf
            if cfg["rho1"] <= rho:
                raise ValidationError(
                    f"absorbing-ball constraint rho1 > ||g||/delta violated: "
                    f"rho1={cfg['rho1']:g}, ||g||/delta={rho:g}")
    if "initial_condition" in cfg.values:
        build_initial(cfg)
    if k == "standing_wave" and cfg["coupling_schedule"] is not None:
        sched = cfg["coupling_schedule"]
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("coupling_schedule must be strictly increasing")


def _read_vector(path, m, name):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read {name} file {path}: {exc}") from exc
    if data.shape[1] == 1:
        a = data[:, 0].astype(complex)
    elif data.shape[1] == 2:
        a = data[:, 0] + 1j * data[:, 1]
    else:
        raise ValidationError(f"{name} file needs one (re) or two (re, im) columns")
    if a.size != 2 * m + 1:
        raise ValidationError(f"{name} file has {a.size} rows, lattice needs {2 * m + 1}")
    return a


def build_forcing(cfg):
    """Forcing vector on the lattice of ``cfg``."""
    f, m = cfg["forcing"], _lattice_m(cfg)
    t = f["type"]
    if t == "none":
        return np.zeros(2 * m + 1, dtype=complex)
    if t == "box":
        r = _num(0, integer=True)("forcing.radius", f["radius"])
        nrm = _num(0)("forcing.norm", f["norm"])
        if r > m:
            raise ValidationError(f"forcing.radius {r} exceeds half width {m}")
        g = np.zeros(2 * m + 1, dtype=complex)
        g[m - r:m + r + 1] = nrm / math.sqrt(2 * r + 1)
        return g
    if t == "values":
        re = _num_list()("forcing.re", f["re"])
        im = [0.0] * len(re) if f["im"] is None else _num_list()("forcing.im", f["im"])
        if len(re) != 2 * m + 1 or len(im) != len(re):
            raise ValidationError(f"forcing values need {2 * m + 1} entries")
        return np.array(re) + 1j * np.array(im)
    return _read_vector(os.path.expanduser(f["path"]), m, "forcing")


def build_initial(cfg, seed=None):
    """Initial state (or Newton seed) described by ``cfg``.  ``random`` data
    draw from ``default_rng(seed)`` (``cfg['seed']`` by default)."""
    ic, m = cfg["initial_condition"], _lattice_m(cfg)
    t = ic["type"]
    if t == "zero":
        return LatticeState.zeros(m)
    if t == "single_site":
        site = _num(-m, hi=m, integer=True)("initial_condition.site", ic["site"])
        return LatticeState.single_site(m, site, _num()("initial_condition.amplitude",
                                                        ic["amplitude"]))
    if t == "gaussian":
        return LatticeState.gaussian(
            m, _num()("initial_condition.center", ic["center"]),
            _num(0, strict_lo=True)("initial_condition.width", ic["width"]),
            _num(0)("initial_condition.charge", ic["charge"]),
            _num()("initial_condition.wavenumber", ic["wavenumber"]))
    if t == "random":
        nrm = _num(0)("initial_condition.norm", ic["norm"])
        r = m if ic["radius"] is None else _num(0, hi=m, integer=True)(
            "initial_condition.radius", ic["radius"])
        rng = np.random.default_rng(cfg["seed"] if seed is None else seed)
        a = np.zeros(2 * m + 1, dtype=complex)
        z = rng.standard_normal(2 * r + 1) + 1j * rng.standard_normal(2 * r + 1)
        a[m - r:m + r + 1] = z * (nrm / np.linalg.norm(z))
        return LatticeState(a)
    if t == "anticontinuum":
        support = _num_list(integer=True)("initial_condition.support", ic["support"])
        if any(abs(s) > m for s in support):
            raise ValidationError("anticontinuum support lies outside the lattice")
        omega = ic["omega"] if ic["omega"] is not None else cfg.get("omega", 1.0)
        return anticontinuum_seed(support, omega, cfg["sigma"], m)
    return LatticeState(_read_vector(os.path.expanduser(ic["path"]), m, "initial_condition"))
