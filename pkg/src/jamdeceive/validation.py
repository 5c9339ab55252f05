"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np

from .env import ActionKind, EnvConfig, validate_config


def check_config(cfg) -> EnvConfig:
    if isinstance(cfg, dict):
        return EnvConfig.from_dict(cfg)
    if not isinstance(cfg, EnvConfig):
        raise TypeError(f"expected EnvConfig or dict, got {type(cfg).__name__}")
    return validate_config(cfg)


def check_states(X, cfg: EnvConfig) -> np.ndarray:
    """Coerce ``X`` to an integer ``(n, 2)`` array of in-range (energy, queue) rows."""
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"states must have shape (n, 2), got {np.shape(X)}")
    as_int = arr.astype(np.int64)
    if not np.array_equal(as_int, arr):
        raise ValueError("states must be integer valued")
    bad = (as_int[:, 0] < 0) | (as_int[:, 0] > cfg.e_max) | (as_int[:, 1] < 0) | (as_int[:, 1] > cfg.d_max)
    if bad.any():
        raise ValueError(f"state {tuple(as_int[bad][0])} outside [0, {cfg.e_max}] x [0, {cfg.d_max}]")
    return as_int


def check_probability(name: str, value) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive_int(name: str, value, allow_zero=False) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"{name} must be an integer, got {value!r}")
    lo = 0 if allow_zero else 1
    if value < lo:
        raise ValueError(f"{name} must be >= {lo}, got {value}")
    return int(value)


def check_action_set(actions) -> frozenset[ActionKind]:
    out = frozenset(ActionKind(a) for a in actions)
    if ActionKind.PassiveHarvest not in out:
        raise ValueError("an action set must contain PassiveHarvest")
    return out


def check_rng(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)
