"""
⚙️ Twin Configuration
=====================

A single JSON document pins a whole experiment: surrogate coefficients,
priors, noise constants, planner constants and the mission schedule.
Files are deep-merged over DEFAULT_TWIN_CONFIG, so a config file only
needs the keys it changes.
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

from surrogates import SurrogateConfig, default_surrogate_config
from twin_errors import InputError

# 환경변수 (environment overrides)
TWIN_SEED = os.environ.get("TWIN_SEED", "")
TWIN_LOG_LEVEL = os.environ.get("TWIN_LOG_LEVEL", "WARNING")

CONFIG_VERSION = "1.0.0"
TOOL_VERSION = "1.0.0"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# =============================================
# 1. 기본 설정 (Defaults)
# =============================================

DEFAULT_TWIN_CONFIG = {
    "version": CONFIG_VERSION,
    "surrogate": default_surrogate_config().to_dict(),

    # Step 1: nominal drawing values, ±2.5 mm manufacturing tolerance as a 95% half-width
    "geometry_prior": {
        "semi_span_mm": 1500.0,
        "chord_root_mm": 300.0,
        "chord_tip_mm": 200.0,
        "tolerance_mm": 2.5,
    },

    # Step 2: e ~ N(1, σ) with a ±5% 95% interval
    "stiffness": {
        "prior_mean": 1.0,
        "prior_std": 0.05 / 1.959964,
        "particles": 100_000,
        "kde_samples": 20_000,
        "mass_ci95_g": 10.0,
        "displacement_ci95_mm": 1.0,
        "bandwidth_floor": 1e-6,
    },

    # Step 3: ring-down identification and mass/damping fit
    "modal": {
        "n_samples": 100,
        "mass_total_g": 472.0,
    },

    "sensor": {
        "sigma_twin": 125.0,    # twin's sensor model
        "sigma_asset": 150.0,   # noise injected by the simulated asset
    },

    "twin": {
        "ensemble_size": 30,
        "e_posterior": {"mean": 1.0073, "std": 0.0035},
        "initial_belief": "flat",
        "horizon": 10,
    },

    "planner": {
        "gamma": 0.6,
        "control_weight": 2.5,
        "tol": 1e-10,
        "max_iter": 10_000,
        "e_map": None,
    },

    # gradual z1 growth, a discrete z2 jump at t=38
    "mission": {
        "truth_e": 1.0073,
        "steps": 50,
        "initial_control": "3g",
        "schedule": [
            [4, 0, 0],
            [10, 20, 0],
            [18, 20, 20],
            [24, 40, 20],
            [32, 60, 20],
            [38, 60, 60],
            [46, 80, 60],
        ],
    },
}


# =============================================
# 2. 설정 객체 (Config object)
# =============================================

@dataclass(frozen=True)
class TwinConfig:
    """Merged, validated experiment config"""
    raw: dict
    surrogate: SurrogateConfig

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def sigma_twin(self) -> float:
        return float(self.raw["sensor"]["sigma_twin"])

    @property
    def sigma_asset(self) -> float:
        return float(self.raw["sensor"]["sigma_asset"])

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_config(raw: dict) -> List[str]:
    """Every problem with a merged config; empty means usable"""
    problems = []
    try:
        SurrogateConfig.from_dict(raw["surrogate"])
    except InputError as exc:
        problems.append(str(exc))

    gamma = raw["planner"].get("gamma")
    if not isinstance(gamma, (int, float)) or not 0 <= gamma < 1:
        problems.append(f"planner.gamma must be in [0, 1), got {gamma!r}")
    if raw["planner"].get("tol", 0) <= 0:
        problems.append("planner.tol must be positive")
    for key in ("sigma_twin", "sigma_asset"):
        if raw["sensor"].get(key, -1) < 0:
            problems.append(f"sensor.{key} must be non-negative")
    if raw["twin"].get("ensemble_size", 0) < 1:
        problems.append("twin.ensemble_size must be at least 1")
    if raw["twin"].get("initial_belief") not in ("flat", "pristine"):
        problems.append("twin.initial_belief must be 'flat' or 'pristine'")
    if raw["stiffness"].get("kde_samples", 0) < 1000:
        problems.append("stiffness.kde_samples must be at least 1000")
    if raw["stiffness"].get("prior_std", 0) <= 0:
        problems.append("stiffness.prior_std must be positive")
    if raw["geometry_prior"].get("tolerance_mm", 0) <= 0:
        problems.append("geometry_prior.tolerance_mm must be positive")
    return problems


def build_config(overrides: Optional[dict] = None) -> TwinConfig:
    raw = _deep_merge(DEFAULT_TWIN_CONFIG, overrides or {})
    problems = validate_config(raw)
    if problems:
        raise InputError("invalid config: " + "; ".join(problems))
    return TwinConfig(raw=raw, surrogate=SurrogateConfig.from_dict(raw["surrogate"]))


def load_config(path: Optional[Union[str, Path]] = None) -> TwinConfig:
    """Defaults when path is None, otherwise the file merged over them"""
    if path is None:
        return build_config()
    try:
        with open(path, "r", encoding="utf-8") as f:
            overrides = json.load(f)
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(overrides, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return build_config(overrides)


def resolve_seed(cli_seed: Optional[int]) -> int:
    """TWIN_SEED wins over --seed when set; seeds are non-negative"""
    env_seed = os.environ.get("TWIN_SEED", TWIN_SEED)
    if env_seed:
        try:
            seed, source = int(env_seed), "TWIN_SEED"
        except ValueError as exc:
            raise InputError(f"TWIN_SEED must be an integer, got {env_seed!r}") from exc
    else:
        seed, source = (int(cli_seed) if cli_seed is not None else 0), "--seed"
    if seed < 0:
        raise InputError(f"{source} must be non-negative, got {seed}")
    return seed


def setup_logging(level: Optional[str] = None) -> None:
    """Single stream handler on the root logger; safe to call twice"""
    root = logging.getLogger()
    level_name = (level or os.environ.get("TWIN_LOG_LEVEL", TWIN_LOG_LEVEL)).upper()
    root.setLevel(getattr(logging, level_name, logging.WARNING))
    if not any(getattr(h, "_twin_handler", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._twin_handler = True
        root.addHandler(handler)
