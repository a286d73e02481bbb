"""
Structural surrogates
"""

import dataclasses
import json

import numpy as np
import pytest

from digital_state import ControlInput, HealthState, health_grid
from surrogates import (
    K_INTERCEPT,
    SurrogateConfig,
    default_surrogate_config,
    e_from_stiffness,
    e_from_stiffness_array,
    load_surrogate_config,
    modal_frequencies,
    r_health,
    stiffness_from_e,
    strain,
    strain_table,
    strain_vector,
)
from twin_errors import InputError, NumericError

CFG = default_surrogate_config()


# =============================================
# Stiffness model
# =============================================

def test_stiffness_round_trip():
    rng = np.random.default_rng(0)
    for e in rng.uniform(0.5, 1.5, 1000):
        assert abs(e_from_stiffness(stiffness_from_e(e)) - e) <= 1e-12


def test_stiffness_at_headline_value():
    assert stiffness_from_e(1.0073) == pytest.approx(0.68120, abs=1e-5)


def test_stiffness_below_intercept_rejected():
    with pytest.raises(NumericError):
        e_from_stiffness(K_INTERCEPT)
    assert np.isnan(e_from_stiffness_array(np.array([0.05]))[0])


# =============================================
# Strain response
# =============================================

def test_strain_matches_formula():
    z = HealthState(40, 20)
    expected = 3.0 * CFG.baseline_strain[0] * (1 + 0.8 * 0.4 + 0.05 * 0.2) / 1.0073
    assert strain(CFG, z, 1.0073, ControlInput.THREE_G, 1) == pytest.approx(expected, rel=1e-14)


def test_strain_sensor_index_bounds():
    with pytest.raises(IndexError):
        strain(CFG, HealthState(0, 0), 1.0, ControlInput.TWO_G, 0)
    with pytest.raises(IndexError):
        strain(CFG, HealthState(0, 0), 1.0, ControlInput.TWO_G, 25)


def test_strain_vector_agrees_with_scalar():
    z = HealthState(60, 80)
    vec = strain_vector(CFG, z, 0.98, ControlInput.TWO_G)
    for j in range(1, 25):
        assert vec[j - 1] == pytest.approx(strain(CFG, z, 0.98, ControlInput.TWO_G, j), rel=1e-14)


def test_strain_table_shape_and_content():
    e = [0.99, 1.0, 1.01]
    table = strain_table(CFG, e, ControlInput.THREE_G)
    assert table.shape == (25, 3, 24)
    for s, z in enumerate(health_grid()):
        np.testing.assert_allclose(table[s, 2], strain_vector(CFG, z, 1.01, ControlInput.THREE_G), rtol=1e-14)


def test_three_g_strain_is_one_and_a_half_times_two_g():
    z = HealthState(20, 40)
    ratio = strain_vector(CFG, z, 1.0, ControlInput.THREE_G) / strain_vector(CFG, z, 1.0, ControlInput.TWO_G)
    np.testing.assert_allclose(ratio, 1.5)


def test_damage_increases_strain_monotonically():
    base = strain_vector(CFG, HealthState(20, 20), 1.0, ControlInput.TWO_G)
    worse = strain_vector(CFG, HealthState(40, 20), 1.0, ControlInput.TWO_G)
    assert np.all(worse >= base)


def test_peak_strain_is_sensor_one_in_default_config():
    for z in health_grid():
        assert int(np.argmax(strain_vector(CFG, z, 1.0073, ControlInput.THREE_G))) == 0


def test_r_health():
    assert r_health(CFG, 0.0) == 1.0
    assert r_health(CFG, CFG.epsilon_max) == 0.0
    assert r_health(CFG, 2 * CFG.epsilon_max) == -1.0


# =============================================
# Modal response
# =============================================

def test_modal_frequencies_scale_with_sqrt_e():
    w_a = modal_frequencies(CFG, 100.0, 272.0, 1.0)
    w_b = modal_frequencies(CFG, 100.0, 272.0, 1.21)
    np.testing.assert_allclose(np.array(w_b) / np.array(w_a), 1.1)


def test_mass_split_moves_modes_in_opposite_directions():
    # servo mass raises mode 1 and lowers mode 2 under the 472 g constraint
    w1_low, w2_low = modal_frequencies(CFG, 50.0, 472.0 - 100.0, 1.0)
    w1_high, w2_high = modal_frequencies(CFG, 150.0, 472.0 - 300.0, 1.0)
    assert w1_high > w1_low
    assert w2_high < w2_low


def test_pristine_frequencies_without_mass():
    assert modal_frequencies(CFG, 0.0, 0.0, 1.0) == pytest.approx((7.0, 43.0))


# =============================================
# Config
# =============================================

def test_config_round_trip_and_file(tmp_path):
    path = tmp_path / "surrogate.json"
    path.write_text(json.dumps({"surrogate": CFG.to_dict()}))
    loaded = load_surrogate_config(path)
    np.testing.assert_array_equal(loaded.baseline_strain, CFG.baseline_strain)
    assert loaded.epsilon_max == CFG.epsilon_max


def test_invalid_config_rejected():
    data = CFG.to_dict()
    data["omega0_hz"] = [43.0, 7.0]
    with pytest.raises(InputError):
        SurrogateConfig.from_dict(data)
    data = CFG.to_dict()
    del data["baseline_strain"]
    with pytest.raises(InputError):
        SurrogateConfig.from_dict(data)


def test_config_arrays_are_read_only():
    with pytest.raises(ValueError):
        CFG.baseline_strain[0] = 1.0
    assert dataclasses.replace(CFG, epsilon_max=1000.0).epsilon_max == 1000.0
