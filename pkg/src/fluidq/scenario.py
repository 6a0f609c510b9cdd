"""YAML scenario files.

Schema (version 1)::

    schema_version: 1
    name: subcritical            # used as the output file prefix
    mode: fluid                  # optional; must match the subcommand if given
    lambda: 0.5                  # list of rates in multiclass mode
    theta: [1.0, 1.0]            # multiclass reneging rates
    service:  {family: exponential, params: {rate: 1}}
    patience: {family: exponential, params: {rate: 1}}   # null: no reneging (des)
    initial:
      x0: 0.0
      nu0: empty | equilibrium | {kind: equilibrium, coef: 0.5}
           | {kind: atoms, x: [..], m: [..]}
           | {kind: density, dx: 0.01, values: [..]} | {kind: density, dx: 0.01, file: f.csv}
      eta0: same forms as nu0, equilibrium laws taken from the patience law
    numerics: {dt: 0.01, horizon: 30, snap_every: 1.0}
    entropy:  {pairs: [[0, 10], [5, 50]], slack: 1.0e-4}
    renewal:  {eps: 0.1, horizon: 100}
    des:      {N: 500, seed: 1, reps: 20, warmup: 20, horizon: 120, sample_dt: 0.1}
    output:   {dir: out}

In multiclass mode ``initial.x0`` and ``initial.nu0`` are per-class lists.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .distributions import Distribution, DistributionError, from_spec
from .errors import ConfigError
from .measures import FiniteMeasure, atoms, equilibrium, from_density, zero

SCHEMA_VERSION = 1
MODES = ("fluid", "invariant", "entropy", "renewal", "multiclass", "des", "interchange")

_REQUIRED = {
    "fluid": ("lambda", "service", "patience"),
    "invariant": ("lambda", "service", "patience"),
    "entropy": ("lambda", "service", "patience"),
    "renewal": ("service",),
    "multiclass": ("lambda", "theta", "service"),
    "des": ("lambda", "service"),
    "interchange": ("lambda", "service", "patience"),
}


@dataclass
class Scenario:
    name: str
    mode: str
    raw: dict
    base_dir: str
    lam: float | tuple | None = None
    theta: tuple | None = None
    service: Distribution | None = None
    patience: Distribution | None = None
    numerics: dict = field(default_factory=dict)
    section: dict = field(default_factory=dict)
    des: dict = field(default_factory=dict)
    out_dir: str = "."

    @property
    def dt(self):
        return float(self.numerics.get("dt", 0.01))

    @property
    def horizon(self):
        return float(self.numerics.get("horizon", 30.0))

    def initial_x0(self):
        return self.raw.get("initial", {}).get("x0", 0.0)

    def measure(self, key, dist, index=None):
        spec = self.raw.get("initial", {}).get(key, "empty")
        path = f"initial.{key}"
        if index is not None:
            if not isinstance(spec, list):
                raise ConfigError(path, "expected one entry per class")
            spec = spec[index]
            path = f"{path}[{index}]"
        return parse_measure(spec, dist, path, self.base_dir)


def _number(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(path, "must be a positive finite number" if positive else "must be finite")
    return value


def _dist(raw, key, role):
    spec = raw.get(key)
    if spec is None:
        return None
    try:
        return from_spec(spec, role)
    except DistributionError as exc:
        raise ConfigError(key, str(exc)) from None
    except TypeError as exc:
        raise ConfigError(f"{key}.params", str(exc)) from None


def parse_measure(spec, dist, path, base_dir=".") -> FiniteMeasure:
    if spec is None or spec == "empty":
        return zero()
    if spec == "equilibrium":
        return equilibrium(dist)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(path, "unknown initial measure")
    kind = spec["kind"]
    if kind == "equilibrium":
        return equilibrium(dist, _number(spec.get("coef", 1.0), f"{path}.coef"))
    if kind == "atoms":
        xs = np.asarray(spec.get("x", []), dtype=float)
        ms = np.asarray(spec.get("m", []), dtype=float)
        if xs.shape != ms.shape:
            raise ConfigError(f"{path}.m", "atom locations and masses differ in length")
        return atoms(xs, ms)
    if kind == "density":
        dx = _number(spec.get("dx"), f"{path}.dx", positive=True)
        if "file" in spec:
            fp = os.path.join(base_dir, spec["file"])
            if not os.path.exists(fp):
                raise ConfigError(f"{path}.file", f"file not found: {spec['file']}")
            values = np.loadtxt(fp, delimiter=",", ndmin=1)
        else:
            values = np.asarray(spec.get("values", []), dtype=float)
        if values.ndim != 1 or len(values) == 0:
            raise ConfigError(f"{path}.values", "expected a nonempty list of density values")
        return from_density(dx, values)
    raise ConfigError(f"{path}.kind", f"unknown kind '{kind}'")


def load(path, mode=None) -> Scenario:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("scenario", f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("scenario", f"not parseable: {exc}") from None
    return parse(raw, mode, os.path.dirname(os.path.abspath(path)))


def parse(raw, mode=None, base_dir=".") -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario", "top level must be a mapping")
    version = raw.get("schema_version")
    if version is None:
        raise ConfigError("schema_version", "required field missing")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}")
    file_mode = raw.get("mode")
    mode = mode or file_mode
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {', '.join(MODES)}")
    if file_mode is not None and file_mode != mode:
        raise ConfigError("mode", f"scenario is for '{file_mode}', not '{mode}'")
    for key in _REQUIRED[mode]:
        if key not in raw:
            raise ConfigError(key, "required field missing")
    name = str(raw.get("name", "scenario"))
    lam = raw.get("lambda")
    theta = raw.get("theta")
    if mode == "multiclass":
        if not isinstance(lam, list) or not lam:
            raise ConfigError("lambda", "expected a list of class arrival rates")
        lam = tuple(_number(v, f"lambda[{i}]", True) for i, v in enumerate(lam))
        if not isinstance(theta, list) or len(theta) != len(lam):
            raise ConfigError("theta", f"expected {len(lam)} reneging rates")
        theta = tuple(_number(v, f"theta[{i}]", True) for i, v in enumerate(theta))
    elif lam is not None:
        if isinstance(lam, list) and mode == "des":
            lam = tuple(_number(v, f"lambda[{i}]", True) for i, v in enumerate(lam))
        else:
            lam = _number(lam, "lambda", True)
    service = _dist(raw, "service", "service")
    patience = _dist(raw, "patience", "patience")
    numerics = dict(raw.get("numerics") or {})
    for key in ("dt", "horizon"):
        if key in numerics:
            numerics[key] = _number(numerics[key], f"numerics.{key}", True)
    return Scenario(
        name=name,
        mode=mode,
        raw=raw,
        base_dir=base_dir,
        lam=lam,
        theta=theta,
        service=service,
        patience=patience,
        numerics=numerics,
        section=dict(raw.get(mode) or {}) if mode in ("entropy", "renewal") else {},
        des=dict(raw.get("des") or {}),
        out_dir=str((raw.get("output") or {}).get("dir", ".")),
    )
