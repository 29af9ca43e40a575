"""Strict parsing of the flat JSON config files used by the CLI.

A config file is a single JSON object whose keys are dotted paths
(``model.kind``, ``sweep.N``, ...). Unknown keys are a hard error, so a
typo can never be silently ignored. Matrix-valued entries (the
linear-Gaussian covariances and channel matrix) are nested JSON lists.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError
from .model import (
    LinearGaussianModel,
    cosine_gaussian_model,
    uniform_gaussian_model,
    uniform_logistic_model,
)

SCALAR_KINDS = ("uniform-gaussian", "cosine-gaussian", "uniform-logistic")

_MODEL_KEYS = {
    "uniform-gaussian": {"model.kind", "model.A", "model.sigma", "model.seed"},
    "cosine-gaussian": {"model.kind", "model.A", "model.sigma", "model.seed"},
    "uniform-logistic": {"model.kind", "model.A", "model.sigma", "model.seed"},
    "linear-gaussian": {
        "model.kind", "model.p", "model.n",
        "model.sigma_y", "model.h", "model.sigma_w", "model.seed",
    },
}

SWEEP_KEYS = {"sweep.k", "sweep.n", "sweep.N", "sweep.seed", "sweep.r_policy"}

_BOUND_KEYS = {
    "thm1": {"bounds.L", "bounds.delta", "bounds.n", "bounds.e_inv_sqrt_fisher", "bounds.mmse"},
    "thm1-gaussian": {"bounds.L", "bounds.delta", "bounds.n", "bounds.sigma"},
    "corollary": {"bounds.c", "bounds.k", "bounds.n", "bounds.e_inv_sqrt_fisher", "bounds.mmse"},
    "thm2-moment": {"bounds.c", "bounds.e2", "bounds.e4", "bounds.k", "bounds.p"},
    "thm2-subgaussian": {
        "bounds.c1", "bounds.c2", "bounds.e1", "bounds.e4", "bounds.v", "bounds.k", "bounds.p",
    },
    "weakened-thm2": {"bounds.c", "bounds.k", "bounds.p"},
}


def load_config(path) -> dict:
    """Read a flat JSON config object from ``path``."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(cfg, dict) or not all(isinstance(k, str) for k in cfg):
        raise ConfigError(f"{path} must contain a single JSON object with string keys")
    return cfg


def check_keys(cfg: dict, allowed: set[str], context: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {', '.join(unknown)}")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def _number(cfg: dict, key: str) -> float:
    val = _require(cfg, key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key} must be a number, got {val!r}")
    return float(val)


def _integer(cfg: dict, key: str) -> int:
    val = _require(cfg, key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key} must be an integer, got {val!r}")
    return val


def _int_list(cfg: dict, key: str) -> list[int]:
    val = _require(cfg, key)
    if not isinstance(val, list) or not val or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in val
    ):
        raise ConfigError(f"{key} must be a nonempty list of integers, got {val!r}")
    return val


def _matrix(cfg: dict, key: str) -> np.ndarray:
    val = _require(cfg, key)
    try:
        mat = np.asarray(val, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{key} must be a numeric matrix literal") from err
    if mat.ndim > 2:
        raise ConfigError(f"{key} must be at most 2-dimensional")
    return mat


def model_keys(cfg: dict) -> set[str]:
    kind = _require(cfg, "model.kind")
    if kind not in _MODEL_KEYS:
        raise ConfigError(
            f"model.kind must be one of {sorted(_MODEL_KEYS)}, got {kind!r}"
        )
    return _MODEL_KEYS[kind]


def build_model(cfg: dict):
    """Build the configured model. Returns ``(model, default_seed)``."""
    kind = _require(cfg, "model.kind")
    seed = cfg.get("model.seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError(f"model.seed must be an integer, got {seed!r}")
    if kind in SCALAR_KINDS:
        a = _number(cfg, "model.A")
        sigma = _number(cfg, "model.sigma")
        if kind == "uniform-gaussian":
            return uniform_gaussian_model(a, sigma), seed
        if kind == "cosine-gaussian":
            return cosine_gaussian_model(a, sigma), seed
        return uniform_logistic_model(a, sigma), seed
    if kind == "linear-gaussian":
        p = _integer(cfg, "model.p")
        n = _integer(cfg, "model.n")
        sigma_y = np.atleast_2d(_matrix(cfg, "model.sigma_y"))
        h = np.atleast_2d(_matrix(cfg, "model.h"))
        sigma_w = np.atleast_2d(_matrix(cfg, "model.sigma_w"))
        if sigma_y.shape != (p, p) or h.shape != (n, p) or sigma_w.shape != (n, n):
            raise ConfigError(
                f"matrix shapes inconsistent with model.p={p}, model.n={n}: "
                f"sigma_y {sigma_y.shape}, h {h.shape}, sigma_w {sigma_w.shape}"
            )
        return LinearGaussianModel(sigma_y, h, sigma_w), seed
    raise ConfigError(f"model.kind must be one of {sorted(_MODEL_KEYS)}, got {kind!r}")


def parse_model_config(cfg: dict, context: str):
    check_keys(cfg, model_keys(cfg), context)
    return build_model(cfg)


def parse_sweep_config(cfg: dict, context: str):
    """Validate a sweep config and return (model, default_seed, sweep dict)."""
    allowed = model_keys(cfg) | SWEEP_KEYS
    check_keys(cfg, allowed, context)
    model, seed = build_model(cfg)
    kind = cfg["model.kind"]
    sweep = {
        "k": _int_list(cfg, "sweep.k"),
        "N": _integer(cfg, "sweep.N"),
        "seed": _integer(cfg, "sweep.seed"),
    }
    if kind in SCALAR_KINDS:
        if "sweep.r_policy" in cfg:
            raise ConfigError("sweep.r_policy applies only to linear-gaussian sweeps")
        sweep["n"] = _int_list(cfg, "sweep.n")
    else:
        if "sweep.n" in cfg:
            raise ConfigError("sweep.n applies only to scalar-model sweeps")
        policy = cfg.get("sweep.r_policy", "optimized")
        if not isinstance(policy, str):
            raise ConfigError(f"sweep.r_policy must be a string, got {policy!r}")
        sweep["r_policy"] = policy
    return model, seed, sweep


def parse_bounds_config(cfg: dict, context: str):
    """Validate a bounds config; returns (name, {param: value})."""
    name = _require(cfg, "bounds.name")
    if name not in _BOUND_KEYS:
        raise ConfigError(f"bounds.name must be one of {sorted(_BOUND_KEYS)}, got {name!r}")
    allowed = _BOUND_KEYS[name] | {"bounds.name"}
    check_keys(cfg, allowed, context)
    params = {}
    for key in sorted(_BOUND_KEYS[name]):
        short = key.split(".", 1)[1]
        if short in ("k", "n", "p"):
            params[short] = _integer(cfg, key)
        else:
            params[short] = _number(cfg, key)
    return name, params
