"""Run configuration: YAML documents, defaults, dotted overrides and echo."""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .errors import DataError

DEFAULTS: dict = {
    "seed": 0,
    "threads": 1,
    "data": {"path": None, "response": None, "columns": None, "add_intercept": True},
    "family": {"name": "poisson-log"},
    "estimator": {"kind": "ml", "huber_c": 1.345, "max_iter": 100, "tol": 1e-8, "mallows": False},
    "loss": {"b": 2.0},
    "scale": {"method": None},
    "bootstrap": {"m": None, "B": 50, "K": 8, "max_retries_per_replicate": 10, "max_skip_fraction": 0.2},
    "criterion": {"delta_k": 2.0},
    "selection": {"search": "exhaustive", "full_model": None, "always_include": None, "include_null": False},
    "simulate": {
        "beta_true": [1.0, 0.0, 0.0, 0.0],
        "n": 64,
        "m": 24,
        "contamination": "none",
        "runs": 500,
        "estimators": ["ml", "cr"],
        "restrict_truths": True,
    },
    "theory": {"chain": None, "beta": None, "estimator": "ml", "mode": "model", "sigma": 1.0},
}

ESTIMATOR_ALIASES = {"ml": "ml", "cr": "cr", "cantoni-ronchetti": "cr"}
SEARCHES = ("exhaustive", "backward", "both")


class ConfigError(DataError):
    """Invalid configuration document or override."""


def _merge(base: dict, update: dict, where: str = "") -> None:
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a section")
            _merge(base[key], value, path + ".")
        elif isinstance(base[key], float) and isinstance(value, str):
            # YAML 1.1 reads exponent forms such as 1e-8 as strings
            try:
                base[key] = float(value)
            except ValueError:
                raise ConfigError(f"config key {path!r} must be a number, got {value!r}") from None
        else:
            base[key] = value


def parse_override(text: str) -> dict:
    """``section.key=value`` to a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    dotted, raw = text.split("=", 1)
    keys = [k.strip() for k in dotted.split(".")]
    if not all(keys):
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in override {text!r}: {exc}") from exc
    out: dict = value
    for k in reversed(keys):
        out = {k: out}
    return out


def load_config(path: str | Path | None = None, overrides=()) -> dict:
    """Defaults, then the YAML file at ``path`` if given, then each override in order."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        _merge(cfg, doc)
    for item in overrides:
        _merge(cfg, parse_override(item))
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    est = cfg["estimator"]["kind"]
    if est not in ESTIMATOR_ALIASES:
        raise ConfigError(f"estimator.kind must be one of {sorted(ESTIMATOR_ALIASES)}, got {est!r}")
    if cfg["selection"]["search"] not in SEARCHES:
        raise ConfigError(f"selection.search must be one of {SEARCHES}")
    for e in cfg["simulate"]["estimators"]:
        if e not in ESTIMATOR_ALIASES:
            raise ConfigError(f"simulate.estimators: unknown estimator {e!r}")
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 0:
        raise ConfigError("threads must be a nonnegative integer (0 = all cores)")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(_plain(cfg), sort_keys=True, default_flow_style=False)


def echo_config(cfg: dict, out_dir: str | Path) -> Path:
    """Write the resolved config as ``config.yaml`` in ``out_dir``."""
    path = Path(out_dir) / "config.yaml"
    path.write_text(dump_config(cfg))
    return path
