"""Scenario configuration: JSON documents, ``--set`` overrides, and the registry.

A config is one JSON object with flat keys and a nested ``geometry`` object::

    {"kind": "torus_kernel", "a": 0.5,
     "geometry": {"resolution": [64, 64], "side_lengths": [6.283185307179586, 6.283185307179586]}}
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .errors import ConfigError, InvalidDimensionError

KINDS = ("torus_kernel", "sphere_kernel", "weighted_torus", "euclidean_oracle", "custom")
TWO_PI = 2.0 * math.pi

GEOMETRY_DEFAULTS = {
    "torus_kernel": {"resolution": [64, 64], "side_lengths": [TWO_PI, TWO_PI]},
    "weighted_torus": {"resolution": [64, 64], "side_lengths": [TWO_PI, TWO_PI],
                       "weight_amplitude": 0.3},
    "sphere_kernel": {"subdivision_level": 4, "radius": 1.0},
    "euclidean_oracle": {"n": 2},
    "custom": {"topology": "flat_torus", "resolution": [32, 32], "side_lengths": [TWO_PI, TWO_PI]},
}
GEOMETRY_KEYS = ("topology", "resolution", "side_lengths", "subdivision_level", "radius",
                 "weight_amplitude", "n")

# Discretization constant C of the tolerance model C * (dx^2 + dt), one per
# scenario family, calibrated from a res 32 / res 64 refinement pair with
# CN, dt = 0.01 (worst residual over both resolutions, over 40-row and
# every-step sampling and over a = +-0.5, times a safety factor of 1.5).
TOLERANCE_CONSTANTS = {
    "torus_kernel": 24.0,
    "weighted_torus": 42.0,
    "sphere_kernel": 24.0,
    "custom": 24.0,
    "euclidean_oracle": 0.0,
}


@dataclass
class ScenarioConfig:
    kind: str
    a: float
    name: str = ""
    geometry: dict = field(default_factory=dict)
    m: Optional[float] = None
    dt: float = 0.01
    t_start: float = 0.05
    t_end: float = 2.0
    sample_count: int = 40
    k: int = 512
    scheme: str = "crank_nicolson"
    source_vertex: int = 0
    seed: int = 42
    tol_scale: float = 1.0
    tol_constant: Optional[float] = None
    monotone_tol: float = 1e-6
    rigidity_threshold: float = 1e-6
    oracle_tol: float = 1e-8
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; valid kinds: {', '.join(KINDS)}")
        geo = dict(GEOMETRY_DEFAULTS[self.kind])
        unknown = set(self.geometry) - set(GEOMETRY_KEYS)
        if unknown:
            raise ConfigError(f"unknown geometry key(s) {sorted(unknown)}; valid keys: {', '.join(GEOMETRY_KEYS)}")
        geo.update(self.geometry)
        self.geometry = geo
        if not self.name:
            self.name = self.kind
        if self.m is None and self.kind == "weighted_torus":
            self.m = 4.0
        if self.tol_constant is None:
            self.tol_constant = TOLERANCE_CONSTANTS[self.kind]
        self.validate()

    @property
    def weighted(self) -> bool:
        return self.kind == "weighted_torus" or (self.kind == "custom" and self.m is not None)

    @property
    def topology(self) -> str:
        if self.kind == "custom":
            return self.geometry.get("topology", "flat_torus")
        return {"torus_kernel": "flat_torus", "weighted_torus": "flat_torus",
                "sphere_kernel": "sphere", "euclidean_oracle": "euclidean_oracle"}[self.kind]

    @property
    def dimension(self) -> int:
        if self.topology == "flat_torus":
            return len(self.geometry["resolution"])
        if self.topology == "sphere":
            return 2
        return int(self.geometry["n"])

    def validate(self) -> None:
        if not self.t_start < self.t_end:
            raise ConfigError(f"invariant t_start < t_end violated: {self.t_start} >= {self.t_end}")
        if not self.t_start > 0:
            raise ConfigError(f"t_start must be positive, got {self.t_start}")
        if self.sample_count < 2:
            raise ConfigError(f"invariant sample_count >= 2 violated: {self.sample_count}")
        if not 0 < self.dt <= (self.t_end - self.t_start) / self.sample_count * (1 + 1e-12) \
                and self.kind != "euclidean_oracle":
            raise ConfigError(
                f"invariant dt <= (t_end - t_start)/sample_count violated: dt={self.dt}, "
                f"bound {(self.t_end - self.t_start) / self.sample_count:g}")
        if self.scheme not in ("implicit_euler", "crank_nicolson"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.m is not None and not self.m > self.dimension:
            raise InvalidDimensionError(
                f"Bakry-Emery dimension m={self.m} must exceed n={self.dimension}")
        if self.kind == "euclidean_oracle" and self.a < 0:
            raise ConfigError("euclidean_oracle needs a >= 0 (R^n has no spectral gap)")

    @property
    def tolerance(self) -> float:
        """Dimensional factor of the tolerance model is applied by diagnostics."""
        return self.tol_scale * self.tol_constant

    def to_dict(self) -> dict:
        return asdict(self)


VALID_KEYS = tuple(f.name for f in fields(ScenarioConfig))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key=value`` strings; ``geometry.key=value`` targets the sub-object."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        value = _parse_value(raw)
        if key.startswith("geometry."):
            doc.setdefault("geometry", {})[key.split(".", 1)[1]] = value
        else:
            doc[key] = value
    return doc


def config_from_dict(doc: dict) -> ScenarioConfig:
    unknown = [k for k in doc if k not in VALID_KEYS]
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; valid keys: {', '.join(VALID_KEYS)}")
    if "kind" not in doc:
        raise ConfigError("config needs a 'kind'")
    if "a" not in doc:
        raise ConfigError("config needs a remainder constant 'a'")
    try:
        return ScenarioConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path=None, overrides=None, base: Optional[dict] = None) -> ScenarioConfig:
    """Read a JSON config file (or start from ``base``) and apply ``--set`` overrides."""
    doc = dict(base or {})
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a valid JSON document ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be an object")
        doc.update(loaded)
    doc = apply_overrides(doc, overrides)
    return config_from_dict(doc)


REGISTRY = {
    "torus_kernel": {"kind": "torus_kernel", "a": 0.5},
    "torus_kernel_neg": {"kind": "torus_kernel", "a": -0.5, "t_end": 0.3, "sample_count": 25},
    "weighted_torus": {"kind": "weighted_torus", "a": 0.5, "m": 4.0},
    "sphere_kernel": {"kind": "sphere_kernel", "a": 0.5},
    "euclidean_oracle": {"kind": "euclidean_oracle", "a": 0.25, "t_end": 10.0, "sample_count": 200},
}


def registry_config(name: str, overrides=None) -> ScenarioConfig:
    if name not in REGISTRY:
        raise ConfigError(f"unknown scenario {name!r}; registry: {', '.join(REGISTRY)}")
    doc = dict(REGISTRY[name], name=name)
    return config_from_dict(apply_overrides(doc, overrides))
