"""
Geometry and stiffness calibration (Steps 1-2)
"""

import json

import numpy as np
import pytest

from digital_state import CalibrationPosterior, GeometricParams
from stiffness_calibration import (
    GaussianPrior,
    LoadDisplacementPair,
    PairNoiseModel,
    Z95,
    calibrate_geometry,
    calibrate_stiffness,
    e_hat_from_pair,
    kde_likelihood,
    load_pairs,
    load_posterior,
    particle_update,
    prior_particles,
    silverman_bandwidth,
)
from surrogates import stiffness_from_e
from synthetic_data import generate_pairs, pairs_frame
from twin_errors import InputError, NumericError

E_TRUE = 1.0073
PRIOR_STD = 0.05 / Z95
GEOMETRY_PRIOR = {
    "semi_span_mm": GaussianPrior(1500.0, 2.5 / Z95),
    "chord_root_mm": GaussianPrior(300.0, 2.5 / Z95),
    "chord_tip_mm": GaussianPrior(200.0, 2.5 / Z95),
}


# =============================================
# Step 1: geometry
# =============================================

def test_geometry_at_prior_mean_has_zero_reward():
    result = calibrate_geometry(GeometricParams(1500.0, 300.0, 200.0), GEOMETRY_PRIOR)
    assert result.reward == 0.0
    assert result.posterior == GeometricParams(1500.0, 300.0, 200.0)


def test_geometry_reward_is_normalized_distance():
    result = calibrate_geometry(GeometricParams(1502.5, 300.0, 200.0), GEOMETRY_PRIOR)
    assert result.reward == pytest.approx(-1.0)
    result = calibrate_geometry(GeometricParams(1502.5, 302.5, 200.0), GEOMETRY_PRIOR)
    assert result.reward == pytest.approx(-np.sqrt(2.0))
    assert result.to_dict()["distribution"] == "delta"


def test_geometry_rejects_invalid_measurement():
    with pytest.raises(InputError):
        calibrate_geometry(GeometricParams(1500.0, 200.0, 300.0), GEOMETRY_PRIOR)


# =============================================
# KDE likelihood
# =============================================

def test_pair_must_be_positive():
    with pytest.raises(InputError):
        LoadDisplacementPair(0.0, 3.0)
    with pytest.raises(InputError):
        LoadDisplacementPair(250.0, -1.0)


def test_e_hat_inverts_the_stiffness_model():
    k = stiffness_from_e(E_TRUE)
    pair = LoadDisplacementPair(500.0, 500.0 * 9.80665e-3 / k)
    assert e_hat_from_pair(pair) == pytest.approx(E_TRUE, rel=1e-12)


def test_silverman_bandwidth_floor_for_constant_samples():
    assert silverman_bandwidth(np.full(2000, 1.0), floor=1e-6) == 1e-6


def test_silverman_bandwidth_for_normal_samples():
    samples = np.random.default_rng(1).standard_normal(100_000)
    expected = 0.9 * 1.0 * 100_000 ** (-0.2)
    assert silverman_bandwidth(samples) == pytest.approx(expected, rel=0.02)


def test_kde_needs_enough_samples():
    with pytest.raises(InputError):
        kde_likelihood(LoadDisplacementPair(500.0, 7.2), PairNoiseModel(), n_samples=999, seed=0)


def test_kde_likelihood_integrates_to_one_and_peaks_near_e_hat():
    k = stiffness_from_e(E_TRUE)
    pair = LoadDisplacementPair(1000.0, 1000.0 * 9.80665e-3 / k)
    lk = kde_likelihood(pair, PairNoiseModel(), n_samples=20_000, seed=7)
    dx = lk.grid[1] - lk.grid[0]
    assert float(lk.pdf.sum() * dx) == pytest.approx(1.0, rel=1e-9)
    # the 1/x displacement skew pulls the mode slightly off ê
    assert abs(lk.mode() - lk.e_hat) <= lk.bandwidth
    assert lk(np.array([-10.0, 10.0])).tolist() == [0.0, 0.0]


def test_kde_is_seeded():
    pair = LoadDisplacementPair(750.0, 10.8)
    a = kde_likelihood(pair, PairNoiseModel(), n_samples=5000, seed=3)
    b = kde_likelihood(pair, PairNoiseModel(), n_samples=5000, seed=3)
    np.testing.assert_array_equal(a.pdf, b.pdf)


# =============================================
# Particle update
# =============================================

def test_prior_particles_are_equal_weight():
    prior = prior_particles(1.0, PRIOR_STD, 50_000, seed=0)
    assert prior.mean == pytest.approx(1.0, abs=1e-3)
    assert prior.std == pytest.approx(PRIOR_STD, rel=0.02)
    np.testing.assert_allclose(prior.weights, 1.0 / 50_000)


def test_flat_likelihood_leaves_posterior_unchanged():
    prior = prior_particles(1.0, PRIOR_STD, 1000, seed=0)
    post = particle_update(prior, lambda e: np.ones_like(e))
    np.testing.assert_allclose(post.weights, prior.weights, rtol=1e-12)
    np.testing.assert_array_equal(post.values, prior.values)


def test_update_order_does_not_matter():
    pairs = generate_pairs(E_TRUE, seed=3)[:4]
    likelihoods = [kde_likelihood(p, PairNoiseModel(), n_samples=5000, seed=i) for i, p in enumerate(pairs)]
    prior = prior_particles(1.0, PRIOR_STD, 20_000, seed=0)

    forward = prior
    for lk in likelihoods:
        forward = particle_update(forward, lk)
    backward = prior
    for lk in reversed(likelihoods):
        backward = particle_update(backward, lk)

    np.testing.assert_array_equal(forward.values, backward.values)
    np.testing.assert_allclose(forward.weights, backward.weights, rtol=1e-9, atol=1e-18)
    assert forward.mean == pytest.approx(backward.mean, rel=1e-12)


def test_annihilating_likelihood_raises():
    prior = prior_particles(1.0, PRIOR_STD, 1000, seed=0)
    with pytest.raises(NumericError, match="annihilated"):
        particle_update(prior, lambda e: np.zeros_like(e))


# =============================================
# Closed loop
# =============================================

def test_noise_free_pairs_recover_e():
    pairs = generate_pairs(E_TRUE, mass_ci95_g=0.0, displacement_ci95_mm=0.0)
    assert len(pairs) == 8
    result = calibrate_stiffness(pairs, prior_mean=1.0, prior_std=PRIOR_STD,
                                 n_particles=100_000, kde_samples=20_000, seed=42)
    assert abs(result.posterior.mean - E_TRUE) <= 0.01
    assert result.posterior.std < PRIOR_STD
    assert len(result.history) == 8
    lo, hi = result.k_ci95
    assert lo < stiffness_from_e(result.posterior.mean) < hi


def test_posterior_narrows_with_each_pair():
    # heavier masses keep every update well above the KDE sampling noise
    pairs = generate_pairs(E_TRUE, masses_g=(750.0, 1000.0), trials=4, mass_ci95_g=0.0, displacement_ci95_mm=0.0)
    result = calibrate_stiffness(pairs, n_particles=50_000, kde_samples=20_000, seed=1)
    stds = [s for _, s in result.history]
    prior = prior_particles(1.0, PRIOR_STD, 50_000, seed=np.random.SeedSequence(1).spawn(len(pairs) + 1)[0])
    stds = [prior.std] + stds
    assert len(stds) == 9
    assert np.all(np.diff(stds) <= 0)
    assert stds[-1] < PRIOR_STD


def test_noisy_pairs_recover_e():
    # 10 g and 1 mm 95% half-widths, fixed seed
    pairs = generate_pairs(E_TRUE, seed=0)
    result = calibrate_stiffness(pairs, prior_mean=1.0, prior_std=PRIOR_STD,
                                 n_particles=100_000, kde_samples=20_000, seed=0)
    assert abs(result.posterior.mean - E_TRUE) <= 0.01
    assert result.posterior.std < PRIOR_STD


def test_calibration_is_deterministic():
    pairs = generate_pairs(E_TRUE, seed=5)
    a = calibrate_stiffness(pairs, n_particles=10_000, kde_samples=2000, seed=9)
    b = calibrate_stiffness(pairs, n_particles=10_000, kde_samples=2000, seed=9)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_likelihood_curves_have_one_column_per_pair():
    pairs = generate_pairs(E_TRUE, masses_g=(500.0,), trials=2, seed=2)
    result = calibrate_stiffness(pairs, n_particles=5000, kde_samples=2000, seed=0)
    curves = result.likelihood_curves(np.linspace(0.9, 1.1, 11))
    assert sorted(curves) == ["e", "pair_1", "pair_2"]
    assert curves["pair_1"].shape == (11,)


def test_calibration_needs_pairs():
    with pytest.raises(InputError):
        calibrate_stiffness([])


# =============================================
# Files
# =============================================

def test_load_pairs(tmp_path):
    path = tmp_path / "pairs.csv"
    pairs_frame(generate_pairs(E_TRUE, seed=0)).to_csv(path, index=False)
    pairs = load_pairs(path)
    assert len(pairs) == 8
    assert pairs[0].applied_mass_g == pytest.approx(250.0, abs=20.0)


def test_load_pairs_rejects_bad_columns(tmp_path):
    path = tmp_path / "pairs.csv"
    path.write_text("mass,disp\n1,2\n")
    with pytest.raises(InputError):
        load_pairs(path)


def test_summary_posterior_expands_to_gaussian_particles(tmp_path):
    path = tmp_path / "post.json"
    path.write_text(json.dumps({"mean": 1.0073, "std": 0.004, "ci95": [1.0, 1.015]}))
    post = load_posterior(path)
    assert post.mean == pytest.approx(1.0073, abs=1e-9)
    assert post.std == pytest.approx(0.004, rel=0.01)


def test_modal_sample_file_gives_equal_weight_particles(tmp_path):
    path = tmp_path / "modal_samples.json"
    samples = [{"e": e, "m_servo_g": 100.0, "m_pitot_g": 272.0, "alpha": 0.1, "beta": 1e-4} for e in (1.0, 1.01)]
    path.write_text(json.dumps({"samples": samples}))
    post = load_posterior(path)
    assert sorted(post.values.tolist()) == [1.0, 1.01]
    np.testing.assert_allclose(post.weights, 0.5)


def test_gaussian_summary_with_zero_std_is_delta():
    post = CalibrationPosterior.gaussian(1.0, 0.0)
    assert isinstance(post, CalibrationPosterior)
    assert post.values.tolist() == [1.0]


def test_summary_file_and_summary_dict_expand_identically(tmp_path):
    summary = {"mean": 1.0073, "std": 0.004, "ci95": [1.0, 1.015]}
    path = tmp_path / "post.json"
    path.write_text(json.dumps(summary))
    from_file = load_posterior(path)
    from_dict = CalibrationPosterior.from_dict(summary)
    np.testing.assert_array_equal(from_file.values, from_dict.values)
    np.testing.assert_array_equal(from_file.weights, from_dict.weights)
    assert from_dict.values.size == 2001
