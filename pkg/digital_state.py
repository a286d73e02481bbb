"""
🛩️ Digital State Model
======================

Value types shared by the asset-twin pipeline: the digital state
d = [g, e, m, α, β, z], observations, controls, beliefs, quantities of
interest and rewards. Everything here is immutable and JSON-serializable
with snake_case field names.

Units: grams, millimeters, Newtons, Hertz (measured), rad/s (Rayleigh math),
microstrain.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from twin_errors import InputError

# =============================================
# 1. 상수 (Constants)
# =============================================

DAMAGE_LEVELS = (0, 20, 40, 60, 80)     # percent stiffness reduction per region
N_HEALTH_STATES = len(DAMAGE_LEVELS) ** 2
N_SENSORS = 24
MASS_DISCREPANCY_G = 472.0              # 2·m_servo + m_pitot
DEFAULT_ENSEMBLE_SIZE = 30              # N, Young's-modulus samples per belief

PROB_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


# =============================================
# 2. 디지털 상태 (Digital state)
# =============================================

@dataclass(frozen=True)
class GeometricParams:
    """Wing planform measured at Step 1"""
    semi_span_mm: float     # l
    chord_root_mm: float    # c_root
    chord_tip_mm: float     # c_tip

    def violations(self) -> List[str]:
        problems = []
        for name in ("semi_span_mm", "chord_root_mm", "chord_tip_mm"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                problems.append(f"{name} must be positive")
        if self.chord_tip_mm > self.chord_root_mm:
            problems.append("chord_tip_mm must not exceed chord_root_mm")
        return problems

    def to_dict(self) -> dict:
        return {
            "semi_span_mm": self.semi_span_mm,
            "chord_root_mm": self.chord_root_mm,
            "chord_tip_mm": self.chord_tip_mm,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeometricParams":
        return cls(
            semi_span_mm=float(data["semi_span_mm"]),
            chord_root_mm=float(data["chord_root_mm"]),
            chord_tip_mm=float(data["chord_tip_mm"]),
        )


@dataclass(frozen=True, order=True)
class HealthState:
    """Discrete damage in the two defect regions"""
    z1: int     # % stiffness reduction, region 1
    z2: int     # % stiffness reduction, region 2

    def __post_init__(self):
        if self.z1 not in DAMAGE_LEVELS or self.z2 not in DAMAGE_LEVELS:
            raise InputError(f"health state ({self.z1}, {self.z2}) is off the grid {DAMAGE_LEVELS}")

    @property
    def index(self) -> int:
        """Row-major position on the grid (z1 outer, z2 inner)"""
        n = len(DAMAGE_LEVELS)
        return DAMAGE_LEVELS.index(self.z1) * n + DAMAGE_LEVELS.index(self.z2)

    @classmethod
    def from_index(cls, index: int) -> "HealthState":
        return health_grid()[index]

    def to_dict(self) -> dict:
        return {"z1": self.z1, "z2": self.z2}

    @classmethod
    def from_dict(cls, data: dict) -> "HealthState":
        return cls(int(data["z1"]), int(data["z2"]))


class ControlInput(Enum):
    """Load factor of the next level turn"""
    TWO_G = "2g"
    THREE_G = "3g"

    @property
    def load_factor(self) -> float:
        return 2.0 if self is ControlInput.TWO_G else 3.0

    @classmethod
    def parse(cls, value) -> "ControlInput":
        if isinstance(value, ControlInput):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError(f"unknown load factor {value!r} (expected '2g' or '3g')")


CONTROLS = (ControlInput.TWO_G, ControlInput.THREE_G)


@dataclass(frozen=True)
class DigitalState:
    """d = [g, e, m, α, β, z]"""
    g: GeometricParams
    e: float                # Young's-modulus scale factor
    m_servo_g: float
    m_pitot_g: float
    alpha: float            # Rayleigh mass-proportional (1/s)
    beta: float             # Rayleigh stiffness-proportional (s)
    z: HealthState = HealthState(0, 0)

    def to_dict(self) -> dict:
        return {
            "g": self.g.to_dict(),
            "e": self.e,
            "m_servo_g": self.m_servo_g,
            "m_pitot_g": self.m_pitot_g,
            "alpha": self.alpha,
            "beta": self.beta,
            "z": self.z.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DigitalState":
        return cls(
            g=GeometricParams.from_dict(data["g"]),
            e=float(data["e"]),
            m_servo_g=float(data["m_servo_g"]),
            m_pitot_g=float(data["m_pitot_g"]),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            z=HealthState.from_dict(data["z"]),
        )


def validate_state(d: DigitalState, mass_total_g: Optional[float] = None) -> List[str]:
    """
    Every invariant the digital state violates; an empty list means ok.

    With mass_total_g set, also checks 2·m_servo + m_pitot against it.
    """
    problems = list(d.g.violations())
    if not np.isfinite(d.e) or d.e <= 0:
        problems.append("e must be positive")
    if d.m_servo_g < 0:
        problems.append("m_servo_g must be non-negative")
    if d.m_pitot_g < 0:
        problems.append("m_pitot_g must be non-negative")
    if d.alpha < 0:
        problems.append("alpha must be non-negative")
    if d.beta < 0:
        problems.append("beta must be non-negative")
    if mass_total_g is not None:
        total = 2.0 * d.m_servo_g + d.m_pitot_g
        if abs(total - mass_total_g) > 1e-9:
            problems.append(f"2*m_servo_g + m_pitot_g = {total:g}, expected {mass_total_g:g}")
    return problems


@lru_cache(maxsize=1)
def health_grid() -> Tuple[HealthState, ...]:
    """The 25 health states, row-major (z1 outer, z2 inner)"""
    return tuple(HealthState(z1, z2) for z1 in DAMAGE_LEVELS for z2 in DAMAGE_LEVELS)


def grid_z1() -> np.ndarray:
    return np.array([s.z1 for s in health_grid()], dtype=float)


def grid_z2() -> np.ndarray:
    return np.array([s.z2 for s in health_grid()], dtype=float)


# =============================================
# 3. 관측 / 신념 (Observations and beliefs)
# =============================================

@dataclass(frozen=True)
class Observation:
    """One operational-phase strain snapshot"""
    t: int
    strains_microstrain: Tuple[float, ...]

    def __post_init__(self):
        strains = tuple(float(v) for v in self.strains_microstrain)
        if len(strains) != N_SENSORS:
            raise InputError(f"observation at t={self.t} has {len(strains)} strains, expected {N_SENSORS}")
        if not all(np.isfinite(strains)):
            raise InputError(f"observation at t={self.t} contains non-finite strain")
        object.__setattr__(self, "strains_microstrain", strains)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.strains_microstrain)

    def to_dict(self) -> dict:
        return {"t": self.t, "strains_microstrain": list(self.strains_microstrain)}

    @classmethod
    def from_dict(cls, data: dict) -> "Observation":
        return cls(int(data["t"]), tuple(data["strains_microstrain"]))


@dataclass(frozen=True)
class HealthBelief:
    """Probability table over the health grid plus the e-ensemble it was built with"""
    probs: np.ndarray           # (25,) in health_grid() order
    e_samples: np.ndarray       # (N,)

    def __post_init__(self):
        probs = _frozen_array(self.probs)
        e_samples = _frozen_array(np.atleast_1d(self.e_samples))
        if probs.shape != (N_HEALTH_STATES,):
            raise InputError(f"belief needs {N_HEALTH_STATES} probabilities, got {probs.shape}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InputError(f"belief is not normalized (sum={probs.sum()!r})")
        if e_samples.size == 0:
            raise InputError("belief needs at least one e sample")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "e_samples", e_samples)

    @classmethod
    def from_weights(cls, weights, e_samples) -> "HealthBelief":
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise InputError("belief weights have no positive mass")
        return cls(weights / total, e_samples)

    @classmethod
    def flat(cls, e_samples) -> "HealthBelief":
        return cls(np.full(N_HEALTH_STATES, 1.0 / N_HEALTH_STATES), e_samples)

    @classmethod
    def delta(cls, state: HealthState, e_samples) -> "HealthBelief":
        probs = np.zeros(N_HEALTH_STATES)
        probs[state.index] = 1.0
        return cls(probs, e_samples)

    def map_state(self) -> HealthState:
        """Most probable grid point; ties go to the lowest grid index"""
        return health_grid()[int(np.argmax(self.probs))]

    def mean_z(self) -> Tuple[float, float]:
        return float(self.probs @ grid_z1()), float(self.probs @ grid_z2())

    def std_z(self) -> Tuple[float, float]:
        m1, m2 = self.mean_z()
        v1 = float(self.probs @ (grid_z1() - m1) ** 2)
        v2 = float(self.probs @ (grid_z2() - m2) ** 2)
        return float(np.sqrt(v1)), float(np.sqrt(v2))

    def to_dict(self) -> dict:
        return {
            "probs": [{"z1": s.z1, "z2": s.z2, "p": float(p)} for s, p in zip(health_grid(), self.probs)],
            "e_samples": [float(v) for v in self.e_samples],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HealthBelief":
        probs = np.zeros(N_HEALTH_STATES)
        for entry in data["probs"]:
            probs[HealthState(int(entry["z1"]), int(entry["z2"])).index] = float(entry["p"])
        return cls(probs, np.asarray(data["e_samples"], dtype=float))


# =============================================
# 4. QoI / 보상 (Quantities of interest and rewards)
# =============================================

@dataclass(frozen=True)
class QoIDistribution:
    """
    Predicted strain at every sensor as weighted samples over (z, e_k).

    values[j, m] is the strain at sensor j+1 for joint sample m; weights[m] is
    P(z)·(1/N) and is shared by all sensors.
    """
    values: np.ndarray      # (24, M) microstrain
    weights: np.ndarray     # (M,)

    def __post_init__(self):
        values = _frozen_array(self.values)
        weights = _frozen_array(self.weights)
        if values.ndim != 2 or values.shape[0] != N_SENSORS or values.shape[1] != weights.size:
            raise InputError(f"QoI shape mismatch: values {values.shape}, weights {weights.shape}")
        if abs(weights.sum() - 1.0) > 1e-10 or np.any(weights < 0):
            raise InputError("QoI weights must be non-negative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def mean(self) -> np.ndarray:
        return self.values @ self.weights

    def std(self) -> np.ndarray:
        centered = self.values - self.mean()[:, None]
        return np.sqrt(np.clip((centered ** 2) @ self.weights, 0.0, None))

    def to_dict(self) -> dict:
        return {
            "sensors": [
                {"j": j + 1, "samples": [float(v) for v in self.values[j]]}
                for j in range(N_SENSORS)
            ],
            "weights": [float(w) for w in self.weights],
        }


@dataclass(frozen=True)
class RewardRecord:
    """Rewards of one timestep for one (z, e_k) sample"""
    r_health: float
    r_control: float
    r_error: Optional[float] = None     # None for predicted timesteps

    def __post_init__(self):
        if self.r_control not in (0.1, -0.1):
            raise InputError(f"r_control must be ±0.1, got {self.r_control}")

    def to_dict(self) -> dict:
        out = {"r_health": self.r_health, "r_control": self.r_control}
        if self.r_error is not None:
            out["r_error"] = self.r_error
        return out


@dataclass(frozen=True)
class RewardSummary:
    """Weighted mean/std of each reward over the joint (z, e_k) support"""
    r_health_mean: float
    r_health_std: float
    r_control_mean: float
    r_control_std: float
    r_error_mean: Optional[float] = None
    r_error_std: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "r_health": {"mean": self.r_health_mean, "std": self.r_health_std},
            "r_control": {"mean": self.r_control_mean, "std": self.r_control_std},
        }
        if self.r_error_mean is not None:
            out["r_error"] = {"mean": self.r_error_mean, "std": self.r_error_std}
        return out


# =============================================
# 5. 보정 사후분포 (Calibration posterior)
# =============================================

@dataclass(frozen=True)
class CalibrationPosterior:
    """Weighted-particle posterior of a scalar parameter"""
    values: np.ndarray
    weights: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)
    ci95: Tuple[float, float] = field(init=False)

    def __post_init__(self):
        values = _frozen_array(np.atleast_1d(self.values))
        weights = _frozen_array(np.atleast_1d(self.weights))
        if values.shape != weights.shape or values.size == 0:
            raise InputError("posterior needs one weight per particle")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > PROB_TOL:
            raise InputError(f"posterior weights not normalized (sum={weights.sum()!r})")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

        mean = float(weights @ values)
        std = float(np.sqrt(max(float(weights @ (values - mean) ** 2), 0.0)))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "ci95", (self.quantile(0.025), self.quantile(0.975)))

    @classmethod
    def from_particles(cls, values, weights) -> "CalibrationPosterior":
        weights = np.asarray(weights, dtype=float)
        return cls(np.asarray(values, dtype=float), weights / weights.sum())

    @classmethod
    def delta(cls, value: float) -> "CalibrationPosterior":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def gaussian(cls, mean: float, std: float, n: int = 2001) -> "CalibrationPosterior":
        """Equal-weight particles at the normal quantiles (i − ½)/n; a delta when std is 0"""
        if std <= 0:
            return cls.delta(mean)
        q = (np.arange(n) + 0.5) / n
        return cls(mean + std * norm.ppf(q), np.full(n, 1.0 / n))

    def _sorted_cdf(self) -> Tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self.values, kind="stable")
        cdf = np.cumsum(self.weights[order])
        cdf[-1] = 1.0
        return self.values[order], cdf

    def quantile(self, q: float) -> float:
        xs, cdf = self._sorted_cdf()
        idx = int(np.searchsorted(cdf, q, side="left"))
        return float(xs[min(idx, xs.size - 1)])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-transform sampling on the empirical CDF"""
        xs, cdf = self._sorted_cdf()
        u = rng.random(n)
        idx = np.searchsorted(cdf, u, side="left")
        return xs[np.minimum(idx, xs.size - 1)]

    def to_dict(self, include_particles: bool = False) -> dict:
        out = {
            "mean": self.mean,
            "std": self.std,
            "ci95": [self.ci95[0], self.ci95[1]],
        }
        if include_particles:
            out["particles"] = {
                "values": [float(v) for v in self.values],
                "weights": [float(w) for w in self.weights],
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationPosterior":
        if "particles" in data:
            return cls.from_particles(data["particles"]["values"], data["particles"]["weights"])
        # summary-only posterior
        return cls.gaussian(float(data["mean"]), float(data.get("std", 0.0)))
