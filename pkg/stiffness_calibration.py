"""
📏 Geometry & Stiffness Calibration
===================================

Calibration steps 1 and 2 of the asset-specific twin:

1. Geometry: measured planform replaces the drawing prior (delta posterior).
2. Young's-modulus scale e: each load/displacement pair becomes a KDE
   likelihood over e, assimilated into a weighted particle cloud.

사후분포는 입자 가중치의 재조정만으로 갱신됩니다 (no resampling).
"""

import json
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.signal import fftconvolve

from digital_state import CalibrationPosterior, GeometricParams
from surrogates import e_from_stiffness, e_from_stiffness_array, stiffness_from_e
from twin_errors import InputError, NumericError

logger = logging.getLogger(__name__)

G0 = 9.80665                # m/s²
Z95 = 1.959964              # 95% two-sided normal quantile
GEOMETRY_TOLERANCE_MM = 2.5
KDE_GRID_LEN = 4096
KDE_TAIL_BANDWIDTHS = 5.0

# =============================================
# 1. 데이터 구조 (Data types)
# =============================================

@dataclass(frozen=True)
class LoadDisplacementPair:
    """Static tip-load test: applied mass and measured tip deflection"""
    applied_mass_g: float
    tip_displacement_mm: float

    def __post_init__(self):
        if not (self.applied_mass_g > 0 and self.tip_displacement_mm > 0):
            raise InputError(
                f"load/displacement pair must be positive, got "
                f"({self.applied_mass_g}, {self.tip_displacement_mm})"
            )

    @property
    def force_n(self) -> float:
        return self.applied_mass_g * G0 * 1e-3


@dataclass(frozen=True)
class GaussianPrior:
    """Per-parameter Gaussian prior"""
    mean: float
    std: float


@dataclass(frozen=True)
class GeometryCalibration:
    """Step 1 result: delta posterior at the measured values and its reward"""
    posterior: GeometricParams
    reward: float
    deviations_mm: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "posterior": self.posterior.to_dict(),
            "distribution": "delta",
            "reward": self.reward,
            "deviations_mm": dict(self.deviations_mm),
        }


@dataclass(frozen=True)
class PairNoiseModel:
    """Measurement noise of a static test, as 95% half-widths"""
    mass_ci95_g: float = 10.0
    displacement_ci95_mm: float = 1.0
    bandwidth_floor: float = 1e-6

    @property
    def mass_sigma_g(self) -> float:
        return self.mass_ci95_g / Z95

    @property
    def displacement_sigma_mm(self) -> float:
        return self.displacement_ci95_mm / Z95


# =============================================
# 2. 형상 보정 (Step 1: geometry)
# =============================================

def calibrate_geometry(
    measured: GeometricParams,
    prior: Dict[str, GaussianPrior],
    tolerance_mm: float = GEOMETRY_TOLERANCE_MM,
) -> GeometryCalibration:
    """
    Delta posterior at the measurement.

    reward = −sqrt(Σ ((measured − prior mean)/tolerance)²)
    """
    problems = measured.violations()
    if problems:
        raise InputError("rejected geometry measurement: " + "; ".join(problems))

    deviations = {}
    for name, value in measured.to_dict().items():
        if name not in prior:
            raise InputError(f"geometry prior has no entry for {name}")
        deviations[name] = value - prior[name].mean

    reward = -float(np.sqrt(sum((d / tolerance_mm) ** 2 for d in deviations.values())))
    logger.info("geometry calibrated, reward %.4f", reward)
    return GeometryCalibration(posterior=measured, reward=reward, deviations_mm=deviations)


# =============================================
# 3. 강성 추정 + KDE 우도 (Step 2: stiffness likelihood)
# =============================================

def e_hat_from_pair(pair: LoadDisplacementPair) -> float:
    """ê from k̂ = f/x"""
    k_hat = pair.force_n / pair.tip_displacement_mm
    return e_from_stiffness(k_hat)


def silverman_bandwidth(samples: np.ndarray, floor: float = 1e-6) -> float:
    """0.9·min(σ, IQR/1.34)·n^(-1/5), never below floor"""
    std = float(np.std(samples))
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = std
    bw = 0.9 * spread * samples.size ** (-0.2)
    return max(bw, floor)


@dataclass(frozen=True)
class KDELikelihood:
    """
    Gaussian-kernel density of ê, tabulated on a grid by binned convolution.

    Calling it evaluates the density at arbitrary e (zero outside the grid).
    """
    e_hat: float
    bandwidth: float
    grid: np.ndarray
    pdf: np.ndarray
    n_samples: int

    def __call__(self, e) -> np.ndarray:
        return np.interp(np.asarray(e, dtype=float), self.grid, self.pdf, left=0.0, right=0.0)

    def mode(self) -> float:
        return float(self.grid[int(np.argmax(self.pdf))])


def _binned_kde(samples: np.ndarray, bw: float, grid_len: int = KDE_GRID_LEN) -> Tuple[np.ndarray, np.ndarray]:
    lo = samples.min() - KDE_TAIL_BANDWIDTHS * bw
    hi = samples.max() + KDE_TAIL_BANDWIDTHS * bw
    counts, edges = np.histogram(samples, bins=grid_len, range=(lo, hi))
    dx = edges[1] - edges[0]
    grid = 0.5 * (edges[1:] + edges[:-1])

    half = int(np.ceil(KDE_TAIL_BANDWIDTHS * bw / dx))
    offsets = np.arange(-half, half + 1) * dx
    kernel = np.exp(-0.5 * (offsets / bw) ** 2) / (bw * np.sqrt(2.0 * np.pi))

    pdf = fftconvolve(counts / samples.size, kernel, mode="same")
    pdf = np.clip(pdf, 0.0, None)
    # renormalize the discretized kernel mass
    area = float(pdf.sum() * dx)
    if area > 0:
        pdf = pdf / area
    return grid, pdf


def kde_likelihood(
    pair: LoadDisplacementPair,
    noise_model: PairNoiseModel,
    n_samples: int,
    seed: int,
) -> KDELikelihood:
    """
    Density over e implied by one noisy pair.

    Draws (force, displacement) around the measurement, maps each through
    the ê chain and fits a Silverman-bandwidth Gaussian KDE.
    """
    if n_samples < 1000:
        raise InputError(f"kde_likelihood needs at least 1000 samples, got {n_samples}")

    rng = np.random.default_rng(seed)
    masses = pair.applied_mass_g + noise_model.mass_sigma_g * rng.standard_normal(n_samples)
    disps = pair.tip_displacement_mm + noise_model.displacement_sigma_mm * rng.standard_normal(n_samples)

    with np.errstate(divide="ignore", invalid="ignore"):
        k_hat = (masses * G0 * 1e-3) / disps
    e_samples = e_from_stiffness_array(np.where(disps > 0, k_hat, np.nan))
    e_samples = e_samples[np.isfinite(e_samples)]
    dropped = n_samples - e_samples.size
    if dropped:
        logger.warning("dropped %d KDE samples outside the stiffness model support", dropped)
    if e_samples.size == 0:
        raise NumericError("every KDE sample fell below the stiffness model intercept")

    bw = silverman_bandwidth(e_samples, floor=noise_model.bandwidth_floor)
    grid, pdf = _binned_kde(e_samples, bw)
    return KDELikelihood(
        e_hat=e_hat_from_pair(pair),
        bandwidth=bw,
        grid=grid,
        pdf=pdf,
        n_samples=int(e_samples.size),
    )


# =============================================
# 4. 입자 필터 (Step 2: particle update)
# =============================================

def prior_particles(mean: float, std: float, n_particles: int, seed: int) -> CalibrationPosterior:
    """Equal-weight draws from N(mean, std)"""
    rng = np.random.default_rng(seed)
    values = mean + std * rng.standard_normal(n_particles)
    return CalibrationPosterior(values, np.full(n_particles, 1.0 / n_particles))


def particle_update(
    prior: CalibrationPosterior,
    likelihood: Callable[[np.ndarray], np.ndarray],
) -> CalibrationPosterior:
    """w_i ← w_i·L(e_i), renormalized"""
    weights = prior.weights * np.asarray(likelihood(prior.values), dtype=float)
    total = float(weights.sum())
    if not np.isfinite(total) or total <= 0:
        raise NumericError("likelihood annihilated prior support")
    return CalibrationPosterior(prior.values, weights / total)


@dataclass(frozen=True)
class StiffnessCalibration:
    """Step 2 result"""
    posterior: CalibrationPosterior
    likelihoods: Tuple[KDELikelihood, ...]
    history: Tuple[Tuple[float, float], ...]    # (mean, std) after each pair
    prior_std: float

    @property
    def k_ci95(self) -> Tuple[float, float]:
        lo, hi = self.posterior.ci95
        return float(stiffness_from_e(lo)), float(stiffness_from_e(hi))

    def to_dict(self, include_particles: bool = False) -> dict:
        out = self.posterior.to_dict(include_particles=include_particles)
        out["k_ci95"] = list(self.k_ci95)
        out["e_hat"] = [lk.e_hat for lk in self.likelihoods]
        out["history"] = [{"mean": m, "std": s} for m, s in self.history]
        return out

    def likelihood_curves(self, e_grid: np.ndarray) -> Dict[str, np.ndarray]:
        curves = {"e": e_grid}
        for i, lk in enumerate(self.likelihoods, start=1):
            curves[f"pair_{i}"] = lk(e_grid)
        return curves


def calibrate_stiffness(
    pairs: Sequence[LoadDisplacementPair],
    prior_mean: float = 1.0,
    prior_std: float = 0.05 / Z95,
    n_particles: int = 100_000,
    kde_samples: int = 20_000,
    noise_model: PairNoiseModel = PairNoiseModel(),
    seed: int = 0,
) -> StiffnessCalibration:
    """Assimilate every pair in order into one particle cloud"""
    if not pairs:
        raise InputError("stiffness calibration needs at least one load/displacement pair")

    seeds = np.random.SeedSequence(seed).spawn(len(pairs) + 1)
    posterior = prior_particles(prior_mean, prior_std, n_particles, seeds[0])
    likelihoods = []
    history = []
    for i, pair in enumerate(pairs):
        lk = kde_likelihood(pair, noise_model, kde_samples, seeds[i + 1])
        posterior = particle_update(posterior, lk)
        likelihoods.append(lk)
        history.append((posterior.mean, posterior.std))
        logger.debug("pair %d: e_hat=%.4f posterior %.5f ± %.5f", i + 1, lk.e_hat, posterior.mean, posterior.std)

    return StiffnessCalibration(
        posterior=posterior,
        likelihoods=tuple(likelihoods),
        history=tuple(history),
        prior_std=prior_std,
    )


def load_pairs(path) -> List[LoadDisplacementPair]:
    """CSV with columns applied_mass_g, tip_displacement_mm"""
    try:
        df = pd.read_csv(path)
        rows = df[["applied_mass_g", "tip_displacement_mm"]].astype(float).values.tolist()
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read load/displacement pairs {path}: {exc}") from exc
    return [LoadDisplacementPair(m, x) for m, x in rows]


def load_posterior(path) -> CalibrationPosterior:
    """
    Posterior JSON as written by `calibrate stiffness`. Without stored
    particles the (mean, std) summary is expanded into Gaussian particles.
    A `calibrate modal` sample file gives one equal-weight particle per sample.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if "samples" in data:
            values = [float(s["e"]) for s in data["samples"]]
            return CalibrationPosterior.from_particles(values, np.ones(len(values)))
        return CalibrationPosterior.from_dict(data)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read posterior {path}: {exc}") from exc
