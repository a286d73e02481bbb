"""
🧩 Structural Surrogates
========================

Config-driven stand-ins for the finite-element model of the wing:

- aggregate stiffness k(e) and its inverse
- strain at the 24 gauges, ε^j(z, e, u)
- first two bending frequencies ω_i(m; e)
- the health reward computed from predicted strain

All functions are pure over an immutable SurrogateConfig.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from digital_state import (
    ControlInput,
    HealthState,
    N_SENSORS,
    grid_z1,
    grid_z2,
)
from twin_errors import InputError, NumericError

logger = logging.getLogger(__name__)

# =============================================
# 1. 강성 모델 (Stiffness model, N/mm)
# =============================================

K_SLOPE = 0.5752
K_INTERCEPT = 0.1018

SURROGATE_CONFIG_VERSION = "1.0.0"


def stiffness_from_e(e):
    """k = 0.5752·e + 0.1018"""
    return K_SLOPE * e + K_INTERCEPT


def e_from_stiffness(k: float) -> float:
    if k <= K_INTERCEPT:
        raise NumericError(f"stiffness below model intercept (k={k:g} N/mm <= {K_INTERCEPT})", k=k)
    return (k - K_INTERCEPT) / K_SLOPE


def e_from_stiffness_array(k: np.ndarray) -> np.ndarray:
    """Vectorized inverse; entries at or below the intercept come back as NaN"""
    k = np.asarray(k, dtype=float)
    e = (k - K_INTERCEPT) / K_SLOPE
    return np.where(k > K_INTERCEPT, e, np.nan)


# =============================================
# 2. 서로게이트 설정 (Surrogate config)
# =============================================

@dataclass(frozen=True)
class SurrogateConfig:
    """Response coefficients standing in for the FEM"""
    baseline_strain: np.ndarray     # (24,) B_j, microstrain per unit load factor at e=1
    damage_gain: np.ndarray         # (24, 2) a_{j,r} per unit z_r/100
    omega0_hz: np.ndarray           # (2,) pristine frequencies at e=1, no added mass
    mass_weight: np.ndarray         # (2, 2) rows: mode, cols: (servo, pitot), 1/g
    epsilon_max: float              # failure strain, microstrain
    version: str = SURROGATE_CONFIG_VERSION

    def __post_init__(self):
        for name in ("baseline_strain", "damage_gain", "omega0_hz", "mass_weight"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "epsilon_max", float(self.epsilon_max))

    def violations(self) -> List[str]:
        problems = []
        if self.baseline_strain.shape != (N_SENSORS,):
            problems.append(f"baseline_strain needs {N_SENSORS} values")
        elif np.any(self.baseline_strain <= 0):
            problems.append("baseline_strain must be positive")
        if self.damage_gain.shape != (N_SENSORS, 2):
            problems.append(f"damage_gain needs {N_SENSORS}x2 values")
        elif np.any(self.damage_gain < 0):
            problems.append("damage_gain must be non-negative")
        if self.omega0_hz.shape != (2,):
            problems.append("omega0_hz needs 2 values")
        elif not (0 < self.omega0_hz[0] < self.omega0_hz[1]):
            problems.append("omega0_hz must be positive and strictly increasing")
        if self.mass_weight.shape != (2, 2):
            problems.append("mass_weight needs 2x2 values")
        elif np.any(self.mass_weight < 0):
            problems.append("mass_weight must be non-negative")
        if not self.epsilon_max > 0:
            problems.append("epsilon_max must be positive")
        return problems

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "baseline_strain": [float(v) for v in self.baseline_strain],
            "damage_gain": [[float(a), float(b)] for a, b in self.damage_gain],
            "omega0_hz": [float(v) for v in self.omega0_hz],
            "mass_weight": [[float(a), float(b)] for a, b in self.mass_weight],
            "epsilon_max": self.epsilon_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateConfig":
        try:
            cfg = cls(
                baseline_strain=data["baseline_strain"],
                damage_gain=data["damage_gain"],
                omega0_hz=data["omega0_hz"],
                mass_weight=data["mass_weight"],
                epsilon_max=data["epsilon_max"],
                version=str(data.get("version", SURROGATE_CONFIG_VERSION)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"surrogate config is malformed: {exc}") from exc
        problems = cfg.violations()
        if problems:
            raise InputError("invalid surrogate config: " + "; ".join(problems))
        return cfg


def default_surrogate_config() -> SurrogateConfig:
    """
    Shipped config.

    Sensors 1-12 sit near defect region 1 (a = 0.8, 0.05), sensors 13-24 near
    region 2 (a = 0.05, 0.8). Baselines decrease along each group and the
    region-1 group carries the larger loads, so the peak strain is always
    sensor 1. epsilon_max puts the 3g/2g break-even between z1=40 and z1=60
    for gamma=0.6 and e=1.0073.
    """
    region1 = [500.0 * (1.0 - 0.04 * k) for k in range(12)]
    region2 = [300.0 * (1.0 - 0.04 * k) for k in range(12)]
    gains = [[0.8, 0.05]] * 12 + [[0.05, 0.8]] * 12
    return SurrogateConfig(
        baseline_strain=region1 + region2,
        damage_gain=gains,
        omega0_hz=[7.0, 43.0],
        mass_weight=[[2.0e-4, 8.0e-4],
                     [9.0e-4, 3.0e-4]],
        epsilon_max=1440.0,
    )


def load_surrogate_config(path: Union[str, Path]) -> SurrogateConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read surrogate config {path}: {exc}") from exc
    return SurrogateConfig.from_dict(data.get("surrogate", data))


# =============================================
# 3. 변형률 응답 (Strain response)
# =============================================

def strain(cfg: SurrogateConfig, z: HealthState, e: float, u: ControlInput, j: int) -> float:
    """ε^j = L(u)·B_j·(1 + a_j1·z1/100 + a_j2·z2/100)/e, j is 1-based"""
    if not 1 <= j <= N_SENSORS:
        raise IndexError(f"sensor index {j} outside 1..{N_SENSORS}")
    a1, a2 = cfg.damage_gain[j - 1]
    amplification = 1.0 + a1 * z.z1 / 100.0 + a2 * z.z2 / 100.0
    return u.load_factor * cfg.baseline_strain[j - 1] * amplification / e


def strain_vector(cfg: SurrogateConfig, z: HealthState, e: float, u: ControlInput) -> np.ndarray:
    """All 24 gauges at once"""
    amplification = 1.0 + cfg.damage_gain @ np.array([z.z1, z.z2], dtype=float) / 100.0
    return u.load_factor * cfg.baseline_strain * amplification / e


def strain_table(cfg: SurrogateConfig, e_samples: Sequence[float], u: ControlInput) -> np.ndarray:
    """
    Strain for every grid state, e-sample and gauge: shape (25, N, 24).
    """
    z = np.stack([grid_z1(), grid_z2()], axis=1) / 100.0           # (25, 2)
    amplification = 1.0 + z @ cfg.damage_gain.T                     # (25, 24)
    inv_e = 1.0 / np.asarray(e_samples, dtype=float)                # (N,)
    per_state = u.load_factor * cfg.baseline_strain[None, :] * amplification
    return per_state[:, None, :] * inv_e[None, :, None]


# =============================================
# 4. 모달 응답 (Modal response)
# =============================================

def modal_frequencies(cfg: SurrogateConfig, m_servo_g: float, m_pitot_g: float, e: float) -> Tuple[float, float]:
    """ω_i = ω_i^0·sqrt(e)/sqrt(1 + w_is·2·m_servo + w_ip·m_pitot), Hz"""
    w = cfg.mass_weight
    denom = 1.0 + w[:, 0] * 2.0 * m_servo_g + w[:, 1] * m_pitot_g
    omega = cfg.omega0_hz * np.sqrt(e) / np.sqrt(denom)
    return float(omega[0]), float(omega[1])


# =============================================
# 5. 건전성 보상 (Health reward)
# =============================================

def r_health(cfg: SurrogateConfig, max_predicted_strain):
    """(ε_max − max_j ε^j)/ε_max; scalars or arrays"""
    return (cfg.epsilon_max - max_predicted_strain) / cfg.epsilon_max
