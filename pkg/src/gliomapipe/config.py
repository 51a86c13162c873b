"""Run configuration: defaults, JSON config files, environment overrides.

Precedence, lowest first: built-in defaults, ``--config`` file, environment
variables, command-line flags. Environment variables use the prefix
``GLIOMAPIPE_`` and ``__`` between nesting levels, e.g.
``GLIOMAPIPE_TRAIN__MAX_STEPS=50`` or ``GLIOMAPIPE_SEED=3``. Values are
parsed as JSON when possible and kept as strings otherwise.
"""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .errors import ConfigError, IoError

ENV_PREFIX = "GLIOMAPIPE_"

DEFAULTS = {
    "seed": 0,
    "deterministic": True,
    "out_dir": "runs/default",
    "data": {
        "dataset": None,
        "labels": None,
        "checkpoint": None,
        "survival_csv": None,
        "features_csv": None,
        "models_dir": None,
        "predictions_csv": None,
    },
    "synth": {
        "n_cases": 4,
        "dims": [32, 32, 32],
        "spacing": [1.0, 1.0, 1.0],
        "noise_sigma": 0.0,
        "wt_axes_range": [5.0, 10.0],
        "tc_fraction_range": [0.5, 0.8],
        "ncr_fraction_range": [0.3, 0.7],
        "ncr_absent_fraction": 0.0,
        "center_jitter": 2.0,
        "age_range": [30.0, 80.0],
        "survival": {"intercept": 1000.0, "per_wt_mm3": 0.12, "per_age_year": 5.0},
        "phantoms": None,
    },
    "network": {
        "base_filters": 16,
        "depth": 4,
        "reduction_ratio": 2,
        "attention_enabled": True,
        "fusion": "parallel_add",
    },
    "train": {
        "learning_rate": 0.00015,
        "weight_decay": 0.005,
        "max_steps": 100,
        "batch_size": 2,
        "crop_dims": None,
    },
    "infer": {"window": None},
    "eval": {"hd_percentile": 95.0, "arms": None},
    "radiomics": {
        "modality": "t1gd",
        "include_resection": False,
        "include_axis_directions": False,
        "bins": 32,
    },
    "survival": {
        "models": ["gbt", "mlp", "rf", "svr"],
        "folds": 4,
        "select_features": True,
        "k_max": 20,
        "rfe_estimator": "gbt",
        "inner_folds": 4,
        "hyperparams": {},
        "tune": {},
        "permutation_repeats": 5,
        "short_below": 300.0,
        "long_above": 450.0,
    },
    "report": {"render": True},
}

# Subtrees taken verbatim instead of being checked key by key.
FREE_FORM = {("synth", "phantoms"), ("eval", "arms"), ("survival", "hyperparams"), ("survival", "tune")}


def merge(base: dict, override: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(here)!r}")
        if here in FREE_FORM or not isinstance(base[key], dict):
            out[key] = copy.deepcopy(value)
        else:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {'.'.join(here)!r} must be a mapping")
            out[key] = merge(base[key], value, here)
    return out


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    tree: dict = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_scalar(environ[name])
    return tree


def read_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def set_path(tree: dict, dotted: str, value):
    node = tree
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def resolve_config(path=None, environ=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        cfg = merge(cfg, read_config_file(path))
    cfg = merge(cfg, env_overrides(environ))
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
