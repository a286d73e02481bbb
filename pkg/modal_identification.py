"""
〰️ Modal Identification & Mass/Damping Calibration
===================================================

Calibration step 3. Each ring-down record goes through

    power spectrum → two peaks → two-mode damped-cosine fit (LM)
    → undamped frequency and damping ratio per mode

The averaged estimates then drive, for every e drawn from the stiffness
posterior, a Nelder-Mead fit of the point masses under the 472 g
discrepancy constraint and an exact Rayleigh damping solve.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from digital_state import (
    CalibrationPosterior,
    DigitalState,
    GeometricParams,
    HealthState,
    MASS_DISCREPANCY_G,
)
from surrogates import SurrogateConfig, modal_frequencies
from twin_errors import InputError, NumericError

logger = logging.getLogger(__name__)

MIN_SPECTRUM_SAMPLES = 64
PEAK_FLOOR_FRACTION = 0.01

# LM schedule
LM_LAMBDA0 = 1e-3
LM_LAMBDA_FACTOR = 10.0
LM_MAX_ITER = 200
LM_REL_TOL = 1e-10

# =============================================
# 1. 데이터 구조 (Data types)
# =============================================

@dataclass(frozen=True)
class RingdownRecord:
    """Free-decay strain after releasing a 10 mm tip displacement"""
    sample_rate_hz: float
    samples: np.ndarray     # microstrain

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.flags.writeable = False
        if not self.sample_rate_hz > 0:
            raise InputError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if samples.ndim != 1 or samples.size < 2:
            raise InputError("ring-down record needs at least 2 samples")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz


@dataclass(frozen=True)
class ModalEstimate:
    """Undamped frequencies (Hz) and damping ratios of the first two bending modes"""
    omega_hz: Tuple[float, float]
    zeta: Tuple[float, float]

    def __post_init__(self):
        w1, w2 = self.omega_hz
        if not 0 < w1 < w2:
            raise InputError(f"modal frequencies must be positive and ascending, got {self.omega_hz}")
        if not all(0 <= z < 1 for z in self.zeta):
            raise InputError(f"damping ratios must lie in [0, 1), got {self.zeta}")

    def to_dict(self) -> dict:
        return {"omega_hz": list(self.omega_hz), "zeta": list(self.zeta)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModalEstimate":
        return cls(tuple(float(v) for v in data["omega_hz"]), tuple(float(v) for v in data["zeta"]))


@dataclass(frozen=True)
class TwoModeFit:
    """a_i·exp(−b_i t)·cos(2π f_i (t − c_i)) coefficients and fit diagnostics"""
    a: Tuple[float, float]
    b: Tuple[float, float]
    c: Tuple[float, float]
    damped_hz: Tuple[float, float]
    cost: float
    iterations: int
    cost_history: Tuple[float, ...] = field(repr=False, default=())

    @property
    def coefficients(self) -> np.ndarray:
        """(a1, a2, b1, b2, c1, c2)"""
        return np.array([*self.a, *self.b, *self.c])


# =============================================
# 2. 스펙트럼 + 피크 (Spectrum and peaks)
# =============================================

def power_spectrum(rec: RingdownRecord) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-sided |DFT|² of the raw record (no window).

    Interior bins are doubled so that Σ power = len·Σ samples².
    """
    n = rec.samples.size
    if n < MIN_SPECTRUM_SAMPLES:
        raise InputError(f"power spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples, got {n}")
    spectrum = np.fft.rfft(rec.samples)
    power = np.abs(spectrum) ** 2
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / rec.sample_rate_hz)
    return freqs, power


def extract_peaks(spectrum: Tuple[np.ndarray, np.ndarray]) -> Tuple[float, float]:
    """Two largest local maxima above 1% of the global max, parabola-refined, ascending (Hz)"""
    freqs, power = spectrum
    if power.size < 3 or not np.any(power > 0):
        raise NumericError("could not identify two modes")

    floor = PEAK_FLOOR_FRACTION * power.max()
    inner = power[1:-1]
    is_peak = (inner > power[:-2]) & (inner >= power[2:]) & (inner > floor)
    candidates = np.flatnonzero(is_peak) + 1
    if candidates.size < 2:
        raise NumericError("could not identify two modes", n_peaks=int(candidates.size))

    top = candidates[np.argsort(power[candidates])[::-1][:2]]
    df = freqs[1] - freqs[0]
    refined = []
    for k in top:
        left, mid, right = power[k - 1], power[k], power[k + 1]
        denom = left - 2.0 * mid + right
        delta = 0.5 * (left - right) / denom if denom != 0 else 0.0
        refined.append(float(freqs[k] + np.clip(delta, -0.5, 0.5) * df))
    refined.sort()
    return refined[0], refined[1]


# =============================================
# 3. 2-모드 감쇠 코사인 피팅 (Two-mode LM fit)
# =============================================

def two_mode_signal(t: np.ndarray, p: np.ndarray, f1: float, f2: float) -> np.ndarray:
    a1, a2, b1, b2, c1, c2 = p
    return (a1 * np.exp(-b1 * t) * np.cos(2.0 * np.pi * f1 * (t - c1))
            + a2 * np.exp(-b2 * t) * np.cos(2.0 * np.pi * f2 * (t - c2)))


def _linear_amplitudes(t, y, f1, f2, b1, b2) -> Tuple[np.ndarray, float]:
    """For fixed decays the model is linear in (a cos φ, a sin φ) per mode"""
    basis = np.column_stack([
        np.exp(-b1 * t) * np.cos(2 * np.pi * f1 * t),
        np.exp(-b1 * t) * np.sin(2 * np.pi * f1 * t),
        np.exp(-b2 * t) * np.cos(2 * np.pi * f2 * t),
        np.exp(-b2 * t) * np.sin(2 * np.pi * f2 * t),
    ])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = basis @ coef - y
    return coef, float(resid @ resid)


def _initial_guess(t, y, f1, f2) -> np.ndarray:
    decays = np.logspace(-2, 2, 25)
    best = None
    for b1 in decays:
        for b2 in decays:
            coef, cost = _linear_amplitudes(t, y, f1, f2, b1, b2)
            if best is None or cost < best[0]:
                best = (cost, b1, b2, coef)
    _, b1, b2, (p1, q1, p2, q2) = best
    # a cos(2πf(t−c)) = a cos(2πfc) cos(2πft) + a sin(2πfc) sin(2πft)
    a1, a2 = np.hypot(p1, q1), np.hypot(p2, q2)
    c1 = np.arctan2(q1, p1) / (2 * np.pi * f1)
    c2 = np.arctan2(q2, p2) / (2 * np.pi * f2)
    return np.array([a1, a2, b1, b2, c1, c2])


def _numeric_jacobian(func, p: np.ndarray) -> np.ndarray:
    cols = []
    for j in range(p.size):
        h = 1e-6 * max(1.0, abs(p[j]))
        step = np.zeros_like(p)
        step[j] = h
        cols.append((func(p + step) - func(p - step)) / (2.0 * h))
    return np.column_stack(cols)


def _canonical_phase(a: float, c: float, f: float) -> Tuple[float, float]:
    """a ≥ 0 and c in [0, 1/f)"""
    period = 1.0 / f
    if a < 0:
        a, c = -a, c + 0.5 * period
    return a, float(np.mod(c, period))


def fit_two_mode(rec: RingdownRecord, f1_d: float, f2_d: float) -> TwoModeFit:
    """
    Least-squares fit of the two-mode ring-down model with the damped
    frequencies held fixed. Levenberg-Marquardt, numeric Jacobian,
    λ from 1e-3 with a ×10 / ÷10 schedule.
    """
    t = rec.times
    y = rec.samples
    scale = max(1.0, float(y @ y))

    def residual(p):
        return two_mode_signal(t, p, f1_d, f2_d) - y

    p = _initial_guess(t, y, f1_d, f2_d)
    r = residual(p)
    cost = float(r @ r)
    history = [cost]
    lam = LM_LAMBDA0
    converged = cost <= 1e-24 * scale
    iteration = 0

    while not converged and iteration < LM_MAX_ITER:
        iteration += 1
        jac = _numeric_jacobian(residual, p)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-12 * max(1.0, float(np.max(np.diag(jtj)))))

        accepted = False
        while lam < 1e16:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad, rcond=None)[0]
            trial = p + delta
            r_trial = residual(trial)
            trial_cost = float(r_trial @ r_trial)
            if trial_cost < cost:
                accepted = True
                break
            lam *= LM_LAMBDA_FACTOR

        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break

        rel_change = (cost - trial_cost) / cost
        p, r, cost = trial, r_trial, trial_cost
        history.append(cost)
        lam = max(lam / LM_LAMBDA_FACTOR, 1e-15)
        if rel_change < LM_REL_TOL or cost <= 1e-24 * scale:
            converged = True

    if not converged:
        raise NumericError(
            f"two-mode fit did not converge in {LM_MAX_ITER} iterations (cost {cost:.6g})",
            last_iterate=p.copy(),
            cost=cost,
        )

    a1, c1 = _canonical_phase(p[0], p[4], f1_d)
    a2, c2 = _canonical_phase(p[1], p[5], f2_d)
    logger.debug("two-mode fit: cost %.3g after %d iterations", cost, iteration)
    return TwoModeFit(
        a=(float(a1), float(a2)),
        b=(float(p[2]), float(p[3])),
        c=(c1, c2),
        damped_hz=(f1_d, f2_d),
        cost=cost,
        iterations=iteration,
        cost_history=tuple(history),
    )


def undamped_from_fit(omega_d: float, b: float) -> Tuple[float, float]:
    """
    Solve ω = ω_d/sqrt(1−ζ²), ζ = b/(2πω) in closed form (Hz).
    """
    beta = b / (2.0 * np.pi)
    omega = float(np.sqrt(omega_d ** 2 + beta ** 2))
    return omega, float(beta / omega)


def estimate_modes(rec: RingdownRecord) -> ModalEstimate:
    """Full per-record pipeline"""
    f1_d, f2_d = extract_peaks(power_spectrum(rec))
    fit = fit_two_mode(rec, f1_d, f2_d)
    w1, z1 = undamped_from_fit(f1_d, fit.b[0])
    w2, z2 = undamped_from_fit(f2_d, fit.b[1])
    return ModalEstimate(omega_hz=(w1, w2), zeta=(z1, z2))


def average_estimates(estimates: Sequence[ModalEstimate]) -> ModalEstimate:
    if not estimates:
        raise InputError("need at least one modal estimate")
    omega = np.mean([e.omega_hz for e in estimates], axis=0)
    zeta = np.mean([e.zeta for e in estimates], axis=0)
    return ModalEstimate(omega_hz=(float(omega[0]), float(omega[1])), zeta=(float(zeta[0]), float(zeta[1])))


# =============================================
# 4. 질량 + 감쇠 보정 (Mass fit and Rayleigh damping)
# =============================================

def fit_point_masses(
    cfg: SurrogateConfig,
    e_sample: float,
    targets_hz: Tuple[float, float],
    mass_total_g: float = MASS_DISCREPANCY_G,
) -> Tuple[float, float]:
    """
    m_pitot = total − 2·m_servo; Nelder-Mead over m_servo ∈ [0, total/2]
    minimizing the sum of relative frequency errors.
    """
    w1_hat, w2_hat = targets_hz
    if not 0 < w1_hat < w2_hat:
        raise InputError(f"target frequencies must be ascending, got {targets_hz}")
    upper = mass_total_g / 2.0

    def objective(x):
        m_servo = float(np.clip(np.atleast_1d(x)[0], 0.0, upper))
        w1, w2 = modal_frequencies(cfg, m_servo, mass_total_g - 2.0 * m_servo, e_sample)
        return abs(w1 - w1_hat) / w1_hat + abs(w2 - w2_hat) / w2_hat

    scan = np.linspace(0.0, upper, 101)
    values = np.array([objective(m) for m in scan])
    if values.max() - values.min() < 1e-12:
        raise NumericError("masses not identifiable under this config")

    start = scan[int(np.argmin(values))]
    step = upper / 100.0
    result = minimize(
        objective,
        x0=[start],
        method="Nelder-Mead",
        options={
            "initial_simplex": [[start], [min(start + step, upper) if start < upper else start - step]],
            "xatol": 1e-6,
            "fatol": np.inf,
            "maxiter": 2000,
        },
    )
    m_servo = float(np.clip(result.x[0], 0.0, upper))
    return m_servo, mass_total_g - 2.0 * m_servo


def rayleigh_coefficients(omega1: float, omega2: float, zeta1: float, zeta2: float) -> Tuple[float, float]:
    """
    (α, β) from ½[[1/ω1, ω1], [1/ω2, ω2]]·[α, β] = [ζ1, ζ2], ω in rad/s.
    """
    if omega1 <= 0 or omega2 <= 0:
        raise InputError("Rayleigh solve needs positive frequencies")
    if omega1 == omega2:
        raise NumericError("singular Rayleigh system: both modes share one frequency")
    beta = 2.0 * (zeta2 * omega2 - zeta1 * omega1) / (omega2 ** 2 - omega1 ** 2)
    alpha = 2.0 * zeta1 * omega1 - omega1 ** 2 * beta
    return float(alpha), float(beta)


def rayleigh_zeta(alpha: float, beta: float, omega: float) -> float:
    """ζ_i = α/(2ω_i) + β·ω_i/2"""
    return alpha / (2.0 * omega) + beta * omega / 2.0


# =============================================
# 5. 100-샘플 보정 루프 (Sampled calibration)
# =============================================

@dataclass(frozen=True)
class ModalCalibration:
    """Step 3 result: sample set of (e, m_servo, m_pitot, α, β)"""
    samples: np.ndarray                 # (n, 5)
    experimental: ModalEstimate
    model_omega_hz: np.ndarray          # (n, 2)
    model_zeta: np.ndarray              # (n, 2)
    reward: float
    geometry: Optional[GeometricParams] = None

    COLUMNS = ("e", "m_servo_g", "m_pitot_g", "alpha", "beta")

    def summary(self) -> Dict[str, Dict[str, float]]:
        return {
            name: {"mean": float(self.samples[:, i].mean()), "std": float(self.samples[:, i].std())}
            for i, name in enumerate(self.COLUMNS)
        }

    def discrepancy_table(self) -> List[dict]:
        """Model vs experimental (ω_i, ζ_i) with relative discrepancy"""
        rows = []
        for i in range(2):
            for label, model, exp in (
                (f"omega{i + 1}_hz", self.model_omega_hz[:, i], self.experimental.omega_hz[i]),
                (f"zeta{i + 1}", self.model_zeta[:, i], self.experimental.zeta[i]),
            ):
                rows.append({
                    "quantity": label,
                    "experimental": float(exp),
                    "model_mean": float(model.mean()),
                    "model_std": float(model.std()),
                    "relative_discrepancy": float(np.mean(_relative_error(model, exp))),
                })
        return rows

    def digital_states(self) -> List[DigitalState]:
        if self.geometry is None:
            return []
        return [
            DigitalState(
                g=self.geometry, e=float(e), m_servo_g=float(ms), m_pitot_g=float(mp),
                alpha=float(a), beta=float(b), z=HealthState(0, 0),
            )
            for e, ms, mp, a, b in self.samples
        ]

    def to_dict(self) -> dict:
        out = {
            "experimental": self.experimental.to_dict(),
            "reward": self.reward,
            "summary": self.summary(),
            "samples": [dict(zip(self.COLUMNS, (float(v) for v in row))) for row in self.samples],
        }
        if self.geometry is not None:
            out["digital_states"] = [d.to_dict() for d in self.digital_states()]
        return out


def _relative_error(model, exp):
    model = np.asarray(model, dtype=float)
    if exp == 0:
        return np.abs(model)
    return np.abs(model - exp) / abs(exp)


def calibrate_modal(
    cfg: SurrogateConfig,
    posterior_e: CalibrationPosterior,
    records: Sequence[ModalEstimate],
    n_samples: int = 100,
    seed: int = 0,
    mass_total_g: float = MASS_DISCREPANCY_G,
    geometry: Optional[GeometricParams] = None,
) -> ModalCalibration:
    """Average the experimental estimates, then fit m, α, β for each e draw"""
    experimental = average_estimates(records)
    rng = np.random.default_rng(seed)
    e_draws = posterior_e.sample(n_samples, rng)

    samples = np.zeros((n_samples, 5))
    model_omega = np.zeros((n_samples, 2))
    model_zeta = np.zeros((n_samples, 2))
    for i, e in enumerate(e_draws):
        try:
            m_servo, m_pitot = fit_point_masses(cfg, float(e), experimental.omega_hz, mass_total_g)
        except NumericError as exc:
            raise NumericError(f"sample {i}: {exc}", sample_index=i, **exc.details) from exc
        w_hz = np.array(modal_frequencies(cfg, m_servo, m_pitot, float(e)))
        w_rad = 2.0 * np.pi * w_hz
        alpha, beta = rayleigh_coefficients(w_rad[0], w_rad[1], *experimental.zeta)
        if alpha < 0 or beta < 0:
            raise NumericError(
                f"sample {i}: negative Rayleigh coefficient (alpha={alpha:.4g}, beta={beta:.4g})",
                sample_index=i,
                alpha=float(alpha),
                beta=float(beta),
            )
        samples[i] = (e, m_servo, m_pitot, alpha, beta)
        model_omega[i] = w_hz
        model_zeta[i] = [rayleigh_zeta(alpha, beta, w) for w in w_rad]

    discrepancies = np.concatenate([
        _relative_error(model_omega[:, 0], experimental.omega_hz[0]),
        _relative_error(model_omega[:, 1], experimental.omega_hz[1]),
        _relative_error(model_zeta[:, 0], experimental.zeta[0]),
        _relative_error(model_zeta[:, 1], experimental.zeta[1]),
    ])
    reward = -float(discrepancies.mean())
    logger.info("modal calibration: %d samples, reward %.3g", n_samples, reward)
    return ModalCalibration(
        samples=samples,
        experimental=experimental,
        model_omega_hz=model_omega,
        model_zeta=model_zeta,
        reward=reward,
        geometry=geometry,
    )


def load_ringdown(path) -> RingdownRecord:
    """CSV with columns time_s, strain_microstrain at a uniform rate"""
    try:
        df = pd.read_csv(path)
        times = df["time_s"].astype(float).to_numpy()
        samples = df["strain_microstrain"].astype(float).to_numpy()
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read ring-down record {path}: {exc}") from exc
    if times.size < 2:
        raise InputError(f"ring-down record {path} needs at least 2 samples")
    steps = np.diff(times)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-6 * np.median(steps):
        raise InputError(f"ring-down record {path} is not uniformly sampled")
    return RingdownRecord(sample_rate_hz=float(1.0 / np.median(steps)), samples=samples)
