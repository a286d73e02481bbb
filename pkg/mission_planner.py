"""
🧭 Mission Planner
==================

Offline value iteration on the fully observable health MDP. The solved
Policy maps each of the 25 health states to a maneuver; online, the twin
applies it to the MAP state of its belief.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from digital_state import (
    CONTROLS,
    ControlInput,
    DAMAGE_LEVELS,
    HealthBelief,
    HealthState,
    N_HEALTH_STATES,
    health_grid,
)
from health_inference import TransitionTable, default_transitions, reward_record
from surrogates import SurrogateConfig
from twin_errors import InputError, NumericError

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.6
CONTROL_WEIGHT = 2.5
TIE_TOL = 1e-12


@dataclass(frozen=True)
class MdpSpec:
    """States = health grid, actions = (2g, 3g), reward[s, a] in CONTROLS order"""
    transitions: Dict[ControlInput, TransitionTable]
    reward: np.ndarray          # (25, 2)
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise InputError(f"discount gamma must be in [0, 1), got {self.gamma}")
        reward = np.array(self.reward, dtype=float)
        if reward.shape != (N_HEALTH_STATES, len(CONTROLS)):
            raise InputError(f"reward table must be {N_HEALTH_STATES}x{len(CONTROLS)}")
        reward.flags.writeable = False
        object.__setattr__(self, "reward", reward)

    def shifted(self, constant: float) -> "MdpSpec":
        return MdpSpec(self.transitions, self.reward + constant, self.gamma)


def build_mdp_spec(
    cfg: SurrogateConfig,
    e_map: float,
    gamma: float = DEFAULT_GAMMA,
    control_weight: float = CONTROL_WEIGHT,
) -> MdpSpec:
    """reward(z, u) = r_health(max strain at (z, e_map, u)) + 2.5·r_control(u)"""
    reward = np.zeros((N_HEALTH_STATES, len(CONTROLS)))
    for s, z in enumerate(health_grid()):
        for a, u in enumerate(CONTROLS):
            rec = reward_record(cfg, z, e_map, u)
            reward[s, a] = rec.r_health + control_weight * rec.r_control
    return MdpSpec(transitions=default_transitions(), reward=reward, gamma=gamma)


@dataclass(frozen=True)
class Policy:
    """Greedy stationary policy with its state values, grid order"""
    actions: Tuple[ControlInput, ...]
    values: np.ndarray
    residuals: Tuple[float, ...] = field(default=(), repr=False)
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if len(self.actions) != N_HEALTH_STATES:
            raise InputError(f"policy needs {N_HEALTH_STATES} actions")
        values = np.array(self.values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def action(self, z: HealthState) -> ControlInput:
        return self.actions[z.index]

    def value(self, z: HealthState) -> float:
        return float(self.values[z.index])

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "iterations": self.iterations,
            "states": [
                {"z1": z.z1, "z2": z.z2, "action": u.value, "value": float(v)}
                for z, u, v in zip(health_grid(), self.actions, self.values)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Policy":
        actions = [None] * N_HEALTH_STATES
        values = np.zeros(N_HEALTH_STATES)
        for entry in data["states"]:
            idx = HealthState(int(entry["z1"]), int(entry["z2"])).index
            actions[idx] = ControlInput.parse(entry["action"])
            values[idx] = float(entry["value"])
        if any(a is None for a in actions):
            raise InputError("policy file does not cover every health state")
        return cls(tuple(actions), values, gamma=float(data.get("gamma", DEFAULT_GAMMA)))


def _q_values(spec: MdpSpec, values: np.ndarray) -> np.ndarray:
    future = np.stack([spec.transitions[u].matrix @ values for u in CONTROLS], axis=1)
    return spec.reward + spec.gamma * future


def _greedy(q: np.ndarray) -> Tuple[ControlInput, ...]:
    # near-ties go to the conservative 2g turn
    two_g, three_g = CONTROLS.index(ControlInput.TWO_G), CONTROLS.index(ControlInput.THREE_G)
    return tuple(
        ControlInput.THREE_G if row[three_g] - row[two_g] > TIE_TOL else ControlInput.TWO_G
        for row in q
    )


def value_iteration(spec: MdpSpec, tol: float = 1e-10, max_iter: int = 10_000) -> Policy:
    """Bellman sweeps until max |V' − V| < tol"""
    if tol <= 0:
        raise InputError(f"value iteration tolerance must be positive, got {tol}")
    values = np.zeros(N_HEALTH_STATES)
    residuals: List[float] = []
    for _ in range(max_iter):
        updated = _q_values(spec, values).max(axis=1)
        residual = float(np.max(np.abs(updated - values)))
        values = updated
        residuals.append(residual)
        if residual < tol:
            break
    else:
        raise NumericError(
            f"value iteration did not converge in {max_iter} sweeps (residual {residuals[-1]:.3g})",
            residual=residuals[-1],
        )

    actions = _greedy(_q_values(spec, values))
    logger.info("value iteration converged in %d sweeps", len(residuals))
    return Policy(actions=actions, values=values, residuals=tuple(residuals), gamma=spec.gamma)


def act(policy: Policy, belief: HealthBelief) -> ControlInput:
    """π̃ applied to the MAP health state"""
    return policy.action(belief.map_state())


def format_policy_grid(policy: Policy) -> str:
    """5×5 action grid, z1 rows × z2 columns"""
    header = "z1\\z2 " + " ".join(f"{z2:>4}" for z2 in DAMAGE_LEVELS)
    lines = [header]
    for z1 in DAMAGE_LEVELS:
        cells = " ".join(f"{policy.action(HealthState(z1, z2)).value:>4}" for z2 in DAMAGE_LEVELS)
        lines.append(f"{z1:>5} {cells}")
    return "\n".join(lines)


def load_policy(path) -> Policy:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return Policy.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read policy {path}: {exc}") from exc
