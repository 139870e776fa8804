"""Run configuration: one flat JSON document, validated on load."""
from __future__ import annotations

import copy
import hashlib
import json
import math

from .errors import ConfigError

DEFAULTS = {
    # data
    "data": "",
    "data_format": "csv",
    "test_data": "",
    "samples": 200,
    "dim": 10,
    "reduced_dim": 0,
    "lambda": 0.5,
    "data_scale": 1.0,
    "test_fraction": 0.3,
    # measure and optimiser
    "support_lower": 0.0,
    "support_upper": 1.0,
    "particles": 100,
    "step_size": 1e-4,
    "inverse_temperature": 1e4,
    "gamma": 1e4,
    "epsilon": 0.01,
    "radius": 1.0,
    "bisection_tolerance": 0.1,
    "total_steps": 1000,
    "particle_scaling": True,
    "step_decay": False,
    "snapshot_every": 0,
    "particles_path": "",
    # features, hashing, testing
    "features": 2000,
    "bits": 256,
    "alphabet": 2,
    "code_length": 64,
    "queries": "",
    "codes_path": "",
    "neighbors": 50,
    "m": 50,
    "n": 50,
    "trials": 100,
    "tau_grid": [0.0, 0.05, 0.1, 0.2, 0.3, 0.5],
    "bandwidth_sq": 1.0,
    # mean-field
    "bins": 50,
    "dt": 0.0,
    "horizons": [0.5, 5.0, 20.0],
    "compare_particles": 0,
    # evaluation
    "svm_lambda": 1e-3,
    "epochs": 10,
    "clusters": 2,
    "kmeans_iterations": 100,
    "knn_k": 3,
    "is_radius": 1.0,
    "seed": 0,
}

POSITIVE = {"step_size", "inverse_temperature", "gamma", "epsilon", "radius",
            "bisection_tolerance", "data_scale", "svm_lambda", "bandwidth_sq"}
AT_LEAST_ONE = {"particles", "total_steps", "features", "bits", "code_length", "trials",
                "epochs", "kmeans_iterations", "knn_k", "neighbors"}
AT_LEAST_TWO = {"samples", "m", "n", "alphabet", "clusters"}
CHOICES = {"data_format": ("csv", "libsvm")}


def _coerce(key, value):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            if isinstance(value, (bool, int)) and value in (0, 1):
                return bool(value)
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, str):
                value = json.loads(value)
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(value)
            return value
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = json.loads(value) if value.strip().startswith("[") else \
                    [float(v) for v in value.split(",") if v.strip()]
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot use {value!r} ({exc})", "config") from None


class RunConfig(dict):
    """Dict of settings with defaults filled in and constraints checked."""

    def __init__(self, values=None):
        super().__init__(copy.deepcopy(DEFAULTS))
        for k, v in (values or {}).items():
            self.set(k, v)
        self.validate()

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", "config")
        self[key] = _coerce(key, value)

    def validate(self):
        for k in POSITIVE:
            v = self[k]
            if not (v > 0) or (math.isinf(v) and k != "inverse_temperature") or math.isnan(v):
                raise ConfigError(f"{k} must be positive, got {v!r}", "config")
        for k in AT_LEAST_ONE:
            if self[k] < 1:
                raise ConfigError(f"{k} must be at least 1", "config")
        for k in AT_LEAST_TWO:
            if self[k] < 2:
                raise ConfigError(f"{k} must be at least 2", "config")
        for k, allowed in CHOICES.items():
            if self[k] not in allowed:
                raise ConfigError(f"{k} must be one of {allowed}", "config")
        if not 0 <= self["support_lower"] < self["support_upper"] < math.inf:
            raise ConfigError("need 0 <= support_lower < support_upper", "config")
        if not 0 <= self["lambda"] < 1:
            raise ConfigError("lambda must lie in [0, 1)", "config")
        if not 0 < self["test_fraction"] < 1:
            raise ConfigError("test_fraction must lie in (0, 1)", "config")
        if self["bins"] < 8:
            raise ConfigError("bins must be at least 8", "config")
        if self["dt"] < 0 or self["is_radius"] < 0 or self["snapshot_every"] < 0:
            raise ConfigError("dt, is_radius and snapshot_every must be non-negative", "config")
        if self["reduced_dim"] < 0 or self["compare_particles"] < 0:
            raise ConfigError("reduced_dim and compare_particles must be non-negative", "config")
        h = self["horizons"]
        if any(b < a for a, b in zip(h, h[1:])) or any(t < 0 for t in h):
            raise ConfigError("horizons must be non-negative and ascending", "config")
        return self

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}", "config") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object", "config")
        return cls(raw)

    def override(self, assignments) -> "RunConfig":
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}", "config")
            k, v = item.split("=", 1)
            self.set(k.strip(), v.strip())
        return self.validate()

    def canonical(self) -> str:
        return json.dumps(self, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()
