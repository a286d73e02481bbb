"""
🩺 Health Inference
===================

Exact belief updates over the 25-state health chain:

- transition tables per maneuver (monotone damage, absorbing at 80)
- assimilation factor: Gaussian sensor model averaged over the e-ensemble
- forward filtering, forward-backward smoothing, policy-driven prediction
- QoI (predicted strain) and reward summaries for every timestep

Timing convention: the observation at step k is flown under the control
issued at step k−1, and that same control drives the transition k−1 → k.
The very first observation is flown under `initial_control`.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from digital_state import (
    CONTROLS,
    ControlInput,
    DAMAGE_LEVELS,
    HealthBelief,
    HealthState,
    N_HEALTH_STATES,
    N_SENSORS,
    Observation,
    QoIDistribution,
    RewardRecord,
    RewardSummary,
)
from surrogates import SurrogateConfig, r_health, strain_table, strain_vector
from twin_errors import InputError, NumericError

logger = logging.getLogger(__name__)

SIGMA_SENSOR = 125.0        # twin's sensor model, microstrain
R_CONTROL = 0.1

# 기동별 악화 확률 (per-region worsening probability per maneuver)
WORSEN_PROBABILITY = {
    ControlInput.TWO_G: 0.05,
    ControlInput.THREE_G: 0.10,
}

# =============================================
# 1. 전이 모델 (Dynamics factor)
# =============================================

@dataclass(frozen=True)
class TransitionTable:
    """Row-stochastic 25×25 matrix, rows = from-state, cols = to-state"""
    control: ControlInput
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        matrix.flags.writeable = False
        if matrix.shape != (N_HEALTH_STATES, N_HEALTH_STATES):
            raise InputError(f"transition table must be {N_HEALTH_STATES}x{N_HEALTH_STATES}")
        if np.any(matrix < 0) or np.max(np.abs(matrix.sum(axis=1) - 1.0)) > 1e-12:
            raise InputError("transition rows must be non-negative and sum to 1")
        object.__setattr__(self, "matrix", matrix)

    def prob(self, src: HealthState, dst: HealthState) -> float:
        return float(self.matrix[src.index, dst.index])

    def propagate(self, probs: np.ndarray) -> np.ndarray:
        """Σ_z P(z)·T(z→z')"""
        return probs @ self.matrix


def _region_matrix(p: float) -> np.ndarray:
    n = len(DAMAGE_LEVELS)
    region = np.zeros((n, n))
    for i in range(n - 1):
        region[i, i] = 1.0 - p
        region[i, i + 1] = p
    region[-1, -1] = 1.0
    return region


def build_transition(u: ControlInput, p_worsen: Optional[float] = None) -> TransitionTable:
    """
    Each region independently advances one grid step with probability
    p(u); 80 is absorbing. Joint table is the Kronecker product.
    """
    p = WORSEN_PROBABILITY[u] if p_worsen is None else float(p_worsen)
    if not 0.0 <= p <= 1.0:
        raise InputError(f"worsening probability must be in [0, 1], got {p}")
    region = _region_matrix(p)
    return TransitionTable(control=u, matrix=np.kron(region, region))


@lru_cache(maxsize=None)
def default_transitions() -> Dict[ControlInput, TransitionTable]:
    return {u: build_transition(u) for u in CONTROLS}


# =============================================
# 2. 동화 인자 (Assimilation factor)
# =============================================

def gaussian_mixture_loglik(observed: np.ndarray, predicted: np.ndarray, sigma: float) -> np.ndarray:
    """
    log Π_j (1/N) Σ_k N(observed_j; predicted[s, k, j], σ) for every state s.

    predicted has shape (S, N, J); returns shape (S,).
    """
    if sigma <= 0:
        raise InputError(f"sensor sigma must be positive, got {sigma}")
    predicted = np.asarray(predicted, dtype=float)
    log_dens = norm.logpdf(np.asarray(observed, dtype=float)[None, None, :], loc=predicted, scale=sigma)
    n_samples = predicted.shape[1]
    per_sensor = logsumexp(log_dens, axis=1) - np.log(n_samples)     # (S, J)
    return per_sensor.sum(axis=1)


def _normalize_log(log_values: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(log_values)):
        raise NumericError("observation inconsistent with model support")
    shifted = np.exp(log_values - np.max(log_values))
    total = shifted.sum()
    if not total > 0:
        raise NumericError("observation inconsistent with model support")
    return shifted / total


def assimilation_log_likelihood(
    cfg: SurrogateConfig,
    obs: Observation,
    u: ControlInput,
    e_samples: Sequence[float],
    sigma: float = SIGMA_SENSOR,
) -> np.ndarray:
    """Unnormalized log L(z) over the 25 states"""
    e_samples = np.atleast_1d(np.asarray(e_samples, dtype=float))
    if e_samples.size < 1:
        raise InputError("assimilation needs at least one e sample")
    return gaussian_mixture_loglik(obs.as_array(), strain_table(cfg, e_samples, u), sigma)


def assimilation_likelihood(
    cfg: SurrogateConfig,
    obs: Observation,
    u: ControlInput,
    e_samples: Sequence[float],
    sigma: float = SIGMA_SENSOR,
) -> np.ndarray:
    """L(z) normalized over the grid after max-subtraction"""
    return _normalize_log(assimilation_log_likelihood(cfg, obs, u, e_samples, sigma))


def _bayes(predicted: np.ndarray, log_lik: np.ndarray) -> Tuple[np.ndarray, float]:
    """posterior ∝ L ⊙ predicted; also returns log of the normalizer"""
    shift = float(np.max(log_lik))
    if not np.isfinite(shift):
        raise NumericError("observation inconsistent with model support")
    unnorm = predicted * np.exp(log_lik - shift)
    total = float(unnorm.sum())
    if not total > 0:
        raise NumericError("observation inconsistent with model support")
    return unnorm / total, np.log(total) + shift


def filter_step(
    cfg: SurrogateConfig,
    prior: HealthBelief,
    u_prev: ControlInput,
    obs: Observation,
    sigma: float = SIGMA_SENSOR,
    transitions: Optional[Dict[ControlInput, TransitionTable]] = None,
) -> HealthBelief:
    """Predict through T_{u_prev}, then correct with the assimilation factor"""
    transitions = transitions or default_transitions()
    predicted = transitions[u_prev].propagate(prior.probs)
    log_lik = assimilation_log_likelihood(cfg, obs, u_prev, prior.e_samples, sigma)
    posterior, _ = _bayes(predicted, log_lik)
    return HealthBelief(_renormalized(posterior), prior.e_samples)


def _renormalized(probs: np.ndarray) -> np.ndarray:
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


# =============================================
# 3. QoI + 보상 (QoI and evaluation factors)
# =============================================

def _qoi_from_probs(
    cfg: SurrogateConfig,
    probs: np.ndarray,
    e_samples: np.ndarray,
    state_controls: Sequence[ControlInput],
) -> Tuple[QoIDistribution, np.ndarray]:
    """Joint (z, e_k) samples, states ascending then e-samples ascending"""
    tables = {u: strain_table(cfg, e_samples, u) for u in set(state_controls)}
    n = e_samples.size
    values = np.stack([tables[u][s] for s, u in enumerate(state_controls)])     # (25, N, 24)
    values = values.reshape(N_HEALTH_STATES * n, N_SENSORS).T                    # (24, 25N)
    weights = np.repeat(probs / n, n)
    load = np.repeat([u.load_factor for u in state_controls], n)
    return QoIDistribution(values=values, weights=_renormalized(weights)), load


def qoi_distribution(
    cfg: SurrogateConfig,
    belief: HealthBelief,
    u: ControlInput,
) -> QoIDistribution:
    """Push every (z, e_k) through the strain surrogate under control u"""
    qoi, _ = _qoi_from_probs(cfg, belief.probs, belief.e_samples, [u] * N_HEALTH_STATES)
    return qoi


def control_reward(u: ControlInput) -> float:
    """+0.1 for the faster 3g turn, −0.1 for 2g"""
    return R_CONTROL if u is ControlInput.THREE_G else -R_CONTROL


def reward_record(
    cfg: SurrogateConfig,
    z: HealthState,
    e: float,
    u: ControlInput,
    obs: Optional[Observation] = None,
    sigma: float = SIGMA_SENSOR,
) -> RewardRecord:
    """Rewards of a single (z, e) point"""
    predicted = strain_vector(cfg, z, e, u)
    r_error = None
    if obs is not None:
        r_error = -float(np.mean(np.abs(obs.as_array() - predicted)) / sigma)
    return RewardRecord(
        r_health=float(r_health(cfg, predicted.max())),
        r_control=control_reward(u),
        r_error=r_error,
    )


def _weighted_moments(values: np.ndarray, weights: np.ndarray) -> Tuple[float, float]:
    mean = float(values @ weights)
    var = float(((values - mean) ** 2) @ weights)
    return mean, float(np.sqrt(max(var, 0.0)))


def _summarize_rewards(
    cfg: SurrogateConfig,
    qoi: QoIDistribution,
    r_control_samples: np.ndarray,
    obs: Optional[Observation],
    sigma: float,
) -> RewardSummary:
    health = r_health(cfg, qoi.values.max(axis=0))
    h_mean, h_std = _weighted_moments(health, qoi.weights)
    c_mean, c_std = _weighted_moments(r_control_samples, qoi.weights)
    e_mean = e_std = None
    if obs is not None:
        residual = np.abs(obs.as_array()[:, None] - qoi.values) / sigma
        e_mean, e_std = _weighted_moments(-residual.mean(axis=0), qoi.weights)
    return RewardSummary(h_mean, h_std, c_mean, c_std, e_mean, e_std)


def evaluate_rewards(
    cfg: SurrogateConfig,
    qoi: QoIDistribution,
    u: ControlInput,
    obs: Optional[Observation] = None,
    sigma: float = SIGMA_SENSOR,
) -> RewardSummary:
    """
    Weighted mean/std over the QoI samples of r_health, r_control and,
    when an observation is given, r_error = −(1/24)·Σ|ε̂−ε|/σ.
    """
    r_control = np.full(qoi.weights.size, control_reward(u))
    return _summarize_rewards(cfg, qoi, r_control, obs, sigma)


# =============================================
# 4. 필터링 + 스무딩 (Filtering and smoothing)
# =============================================

@dataclass(frozen=True)
class FilterResult:
    """Filtered marginals p(z_k | o_0..o_k) and log p(o_0..o_T)"""
    beliefs: Tuple[HealthBelief, ...]
    log_evidence: float


@dataclass(frozen=True)
class SmoothingResult:
    """Per-timestep smoothed marginals, QoI and reward summaries"""
    marginals: Tuple[HealthBelief, ...]
    filtered: Tuple[HealthBelief, ...]
    qoi: Tuple[QoIDistribution, ...]
    rewards: Tuple[RewardSummary, ...]
    controls: Tuple[ControlInput, ...]      # control each observation was flown under
    log_evidence: float
    t0: int = 0

    @property
    def times(self) -> List[int]:
        return list(range(self.t0, self.t0 + len(self.marginals)))

    def summary_rows(self) -> List[dict]:
        """Flat per-timestep rows for CSV/plots"""
        rows = []
        for t, belief, reward, u in zip(self.times, self.marginals, self.rewards, self.controls):
            z_map = belief.map_state()
            (m1, m2), (s1, s2) = belief.mean_z(), belief.std_z()
            rows.append({
                "t": t,
                "u": u.value,
                "map_z1": z_map.z1,
                "map_z2": z_map.z2,
                "mean_z1": m1,
                "mean_z2": m2,
                "std_z1": s1,
                "std_z2": s2,
                "r_health_mean": reward.r_health_mean,
                "r_health_std": reward.r_health_std,
                "r_control_mean": reward.r_control_mean,
                "r_error_mean": reward.r_error_mean,
                "r_error_std": reward.r_error_std,
            })
        return rows

    def to_dict(self) -> dict:
        steps = []
        for t, belief, qoi, reward, u in zip(self.times, self.marginals, self.qoi, self.rewards, self.controls):
            steps.append({
                "t": t,
                "u": u.value,
                "marginal": [float(p) for p in belief.probs],
                "map": belief.map_state().to_dict(),
                "qoi_mean": [float(v) for v in qoi.mean()],
                "qoi_std": [float(v) for v in qoi.std()],
                "rewards": reward.to_dict(),
            })
        return {"t0": self.t0, "log_evidence": self.log_evidence, "steps": steps}


def _flight_controls(controls: Sequence[ControlInput], initial_control: ControlInput) -> List[ControlInput]:
    return [initial_control] + list(controls)


def _log_likelihoods(cfg, observations, flight, e_samples, sigma, cached):
    if cached is not None:
        if len(cached) != len(observations):
            raise InputError("cached likelihoods do not match the observation history")
        return [np.asarray(c, dtype=float) for c in cached]
    return [
        assimilation_log_likelihood(cfg, obs, u, e_samples, sigma)
        for obs, u in zip(observations, flight)
    ]


def _check_history(controls, observations):
    if len(observations) == 0:
        raise InputError("history needs at least one observation")
    if len(controls) != len(observations) - 1:
        raise InputError(
            f"history mismatch: {len(controls)} controls for {len(observations)} observations "
            f"(expected {len(observations) - 1})"
        )


def _forward(
    prior: np.ndarray,
    controls: Sequence[ControlInput],
    log_liks: Sequence[np.ndarray],
    transitions: Dict[ControlInput, TransitionTable],
) -> Tuple[List[np.ndarray], float]:
    filtered = []
    log_evidence = 0.0
    predicted = prior
    for k, log_lik in enumerate(log_liks):
        if k > 0:
            predicted = transitions[controls[k - 1]].propagate(filtered[-1])
        posterior, log_norm = _bayes(predicted, log_lik)
        filtered.append(_renormalized(posterior))
        log_evidence += log_norm
    return filtered, log_evidence


def forward_filter(
    cfg: SurrogateConfig,
    controls: Sequence[ControlInput],
    observations: Sequence[Observation],
    e_samples: Sequence[float],
    sigma: float = SIGMA_SENSOR,
    initial_control: ControlInput = ControlInput.THREE_G,
    prior: Optional[HealthBelief] = None,
    log_likelihoods: Optional[Sequence[np.ndarray]] = None,
) -> FilterResult:
    """Filtered marginals for every step of the history"""
    _check_history(controls, observations)
    e_samples = np.atleast_1d(np.asarray(e_samples, dtype=float))
    prior = prior or HealthBelief.flat(e_samples)
    flight = _flight_controls(controls, initial_control)
    log_liks = _log_likelihoods(cfg, observations, flight, e_samples, sigma, log_likelihoods)
    filtered, log_evidence = _forward(prior.probs, controls, log_liks, default_transitions())
    return FilterResult(tuple(HealthBelief(p, e_samples) for p in filtered), log_evidence)


def smooth(
    cfg: SurrogateConfig,
    controls: Sequence[ControlInput],
    observations: Sequence[Observation],
    e_samples: Sequence[float],
    sigma: float = SIGMA_SENSOR,
    initial_control: ControlInput = ControlInput.THREE_G,
    prior: Optional[HealthBelief] = None,
    log_likelihoods: Optional[Sequence[np.ndarray]] = None,
    t0: int = 0,
) -> SmoothingResult:
    """
    Forward-backward over the health chain.

    controls[k] drives z_k → z_{k+1}; len(controls) == len(observations) − 1.
    """
    _check_history(controls, observations)
    e_samples = np.atleast_1d(np.asarray(e_samples, dtype=float))
    prior = prior or HealthBelief.flat(e_samples)
    transitions = default_transitions()
    flight = _flight_controls(controls, initial_control)
    log_liks = _log_likelihoods(cfg, observations, flight, e_samples, sigma, log_likelihoods)

    filtered, log_evidence = _forward(prior.probs, controls, log_liks, transitions)

    # backward messages, rescaled each step
    n_steps = len(observations)
    smoothed = [None] * n_steps
    smoothed[-1] = filtered[-1]
    beta = np.ones(N_HEALTH_STATES)
    for k in range(n_steps - 2, -1, -1):
        lik = np.exp(log_liks[k + 1] - np.max(log_liks[k + 1]))
        beta = transitions[controls[k]].matrix @ (lik * beta)
        beta = beta / beta.max()
        smoothed[k] = _renormalized(filtered[k] * beta)

    marginals, qois, rewards = [], [], []
    for k, probs in enumerate(smoothed):
        belief = HealthBelief(probs, e_samples)
        qoi = qoi_distribution(cfg, belief, flight[k])
        marginals.append(belief)
        qois.append(qoi)
        rewards.append(evaluate_rewards(cfg, qoi, flight[k], observations[k], sigma))

    logger.debug("smoothed %d steps, log evidence %.3f", n_steps, log_evidence)
    return SmoothingResult(
        marginals=tuple(marginals),
        filtered=tuple(HealthBelief(p, e_samples) for p in filtered),
        qoi=tuple(qois),
        rewards=tuple(rewards),
        controls=tuple(flight),
        log_evidence=log_evidence,
        t0=t0,
    )


# =============================================
# 5. 예측 (Prediction with the control factor)
# =============================================

@dataclass(frozen=True)
class Prediction:
    """Future marginals under the per-state policy; no r_error"""
    marginals: Tuple[HealthBelief, ...]
    qoi: Tuple[QoIDistribution, ...]
    rewards: Tuple[RewardSummary, ...]
    map_controls: Tuple[ControlInput, ...]     # policy at each step's MAP state
    p_three_g: Tuple[float, ...]               # probability mass choosing 3g
    t0: int = 0                                # time of the belief predicted from

    @property
    def horizon(self) -> int:
        return len(self.marginals)

    def final_belief(self) -> HealthBelief:
        return self.marginals[-1]

    def to_dict(self) -> dict:
        steps = []
        for i, (belief, reward, u, p3) in enumerate(
            zip(self.marginals, self.rewards, self.map_controls, self.p_three_g), start=1
        ):
            (m1, m2), (s1, s2) = belief.mean_z(), belief.std_z()
            steps.append({
                "t": self.t0 + i,
                "map": belief.map_state().to_dict(),
                "mean_z": [m1, m2],
                "std_z": [s1, s2],
                "u_map": u.value,
                "p_3g": p3,
                "rewards": reward.to_dict(),
            })
        return {"t0": self.t0, "horizon": self.horizon, "steps": steps}


def _state_actions(policy) -> Tuple[ControlInput, ...]:
    actions = tuple(getattr(policy, "actions", policy))
    if len(actions) != N_HEALTH_STATES:
        raise InputError(f"policy must give one action per health state, got {len(actions)}")
    return actions


def predict(
    cfg: SurrogateConfig,
    belief: HealthBelief,
    policy,
    horizon: int = 10,
    t0: int = 0,
) -> Prediction:
    """
    Roll the belief forward `horizon` steps; at every step each state z
    flies π̃(z), which selects both its transition row and its QoI.

    `policy` is a Policy or any 25-long action sequence in grid order.
    """
    if horizon < 1:
        raise InputError(f"prediction horizon must be at least 1, got {horizon}")
    actions = _state_actions(policy)
    transitions = default_transitions()
    # row z of the policy-driven chain is the row of T_{π̃(z)}
    policy_matrix = np.stack([transitions[u].matrix[s] for s, u in enumerate(actions)])
    three_g = np.array([u is ControlInput.THREE_G for u in actions], dtype=float)
    r_control_by_state = np.array([control_reward(u) for u in actions])
    n = belief.e_samples.size

    probs = belief.probs
    marginals, qois, rewards, map_controls, p3 = [], [], [], [], []
    for _ in range(horizon):
        probs = _renormalized(probs @ policy_matrix)
        step_belief = HealthBelief(probs, belief.e_samples)
        qoi, _ = _qoi_from_probs(cfg, probs, belief.e_samples, actions)
        marginals.append(step_belief)
        qois.append(qoi)
        rewards.append(_summarize_rewards(cfg, qoi, np.repeat(r_control_by_state, n), None, SIGMA_SENSOR))
        map_controls.append(actions[step_belief.map_state().index])
        p3.append(float(probs @ three_g))

    return Prediction(
        marginals=tuple(marginals),
        qoi=tuple(qois),
        rewards=tuple(rewards),
        map_controls=tuple(map_controls),
        p_three_g=tuple(p3),
        t0=t0,
    )
