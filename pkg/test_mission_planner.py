"""
Mission planner: value iteration and the MAP policy
"""

import json

import numpy as np
import pytest

from digital_state import CONTROLS, ControlInput, HealthBelief, HealthState, N_HEALTH_STATES, health_grid
from health_inference import default_transitions
from mission_planner import (
    MdpSpec,
    act,
    build_mdp_spec,
    format_policy_grid,
    load_policy,
    value_iteration,
)
from surrogates import default_surrogate_config
from twin_errors import InputError, NumericError

CFG = default_surrogate_config()
TWO_G, THREE_G = ControlInput.TWO_G, ControlInput.THREE_G
E_MAP = 1.0073


@pytest.fixture(scope="module")
def default_policy():
    return value_iteration(build_mdp_spec(CFG, E_MAP))


# =============================================
# Value iteration
# =============================================

def test_default_config_gives_threshold_policy(default_policy):
    for z in health_grid():
        expected = TWO_G if z.z1 >= 60 else THREE_G
        assert default_policy.action(z) is expected, z


def test_residuals_contract_at_gamma(default_policy):
    res = np.array(default_policy.residuals)
    assert res[-1] < 1e-10
    assert np.all(res[1:] <= 0.6 * res[:-1] + 1e-12)


def test_values_fall_with_damage(default_policy):
    assert default_policy.value(HealthState(0, 0)) > default_policy.value(HealthState(80, 80))


def test_gamma_zero_is_myopic():
    spec = build_mdp_spec(CFG, E_MAP, gamma=0.0)
    policy = value_iteration(spec)
    for s, z in enumerate(health_grid()):
        two, three = spec.reward[s, CONTROLS.index(TWO_G)], spec.reward[s, CONTROLS.index(THREE_G)]
        assert policy.action(z) is (THREE_G if three - two > 1e-12 else TWO_G)
    np.testing.assert_allclose(policy.values, spec.reward.max(axis=1))


def test_constant_health_reward_always_flies_three_g():
    reward = np.zeros((N_HEALTH_STATES, len(CONTROLS)))
    reward[:, CONTROLS.index(TWO_G)] = 0.5 - 0.25
    reward[:, CONTROLS.index(THREE_G)] = 0.5 + 0.25
    policy = value_iteration(MdpSpec(default_transitions(), reward, 0.6))
    assert set(policy.actions) == {THREE_G}
    np.testing.assert_allclose(policy.values, 0.75 / 0.4, rtol=1e-9)


def test_reward_shift_moves_values_not_actions():
    spec = build_mdp_spec(CFG, E_MAP)
    base = value_iteration(spec)
    shifted = value_iteration(spec.shifted(3.0))
    assert shifted.actions == base.actions
    np.testing.assert_allclose(shifted.values - base.values, 3.0 / (1 - 0.6), atol=1e-9)


def test_exact_ties_go_to_two_g():
    policy = value_iteration(MdpSpec(default_transitions(), np.zeros((N_HEALTH_STATES, 2)), 0.6))
    assert set(policy.actions) == {TWO_G}


def test_non_convergence_reports_residual():
    with pytest.raises(NumericError) as info:
        value_iteration(build_mdp_spec(CFG, E_MAP), max_iter=2)
    assert info.value.residual > 0
    assert info.value.exit_code == 3


def test_gamma_must_be_below_one():
    with pytest.raises(InputError):
        build_mdp_spec(CFG, E_MAP, gamma=1.0)


# =============================================
# Acting on beliefs
# =============================================

def test_act_on_map_state(default_policy):
    assert act(default_policy, HealthBelief.delta(HealthState(80, 0), [1.0])) is TWO_G
    assert act(default_policy, HealthBelief.delta(HealthState(0, 0), [1.0])) is THREE_G


def test_act_uses_map_not_mean(default_policy):
    probs = np.zeros(N_HEALTH_STATES)
    probs[HealthState(40, 0).index] = 0.4
    probs[HealthState(80, 0).index] = 0.35
    probs[HealthState(60, 0).index] = 0.25
    assert act(default_policy, HealthBelief(probs, [1.0])) is THREE_G


# =============================================
# Serialization and display
# =============================================

def test_policy_grid(default_policy):
    lines = format_policy_grid(default_policy).splitlines()
    assert lines[0].startswith("z1\\z2")
    assert len(lines) == 6
    assert lines[1].split()[1:] == ["3g"] * 5
    assert lines[4].split()[1:] == ["2g"] * 5


def test_policy_file_round_trip(default_policy, tmp_path):
    path = tmp_path / "policy.json"
    path.write_text(json.dumps(default_policy.to_dict()))
    loaded = load_policy(path)
    assert loaded.actions == default_policy.actions
    np.testing.assert_allclose(loaded.values, default_policy.values)


def test_incomplete_policy_file_rejected(default_policy, tmp_path):
    data = default_policy.to_dict()
    data["states"] = data["states"][:-1]
    path = tmp_path / "policy.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InputError):
        load_policy(path)
