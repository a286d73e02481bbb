"""
🧪 Synthetic Data
=================

Stand-ins for the laboratory datasets: static load/displacement pairs,
ring-down records, ground-truth schedules and the default config.
Every generator is a pure function of its arguments and seed.
"""

import copy
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from modal_identification import RingdownRecord, two_mode_signal
from stiffness_calibration import G0, Z95, LoadDisplacementPair
from surrogates import stiffness_from_e
from twin_config import DEFAULT_TWIN_CONFIG

# static test design: four masses, two trials each
DEFAULT_MASSES_G = (250.0, 500.0, 750.0, 1000.0)
DEFAULT_TRIALS = 2

DEFAULT_RINGDOWN_AMPLITUDE = (100.0, 60.0)     # microstrain
DEFAULT_RINGDOWN_DECAY = (1.5, 2.5)            # 1/s
DEFAULT_RINGDOWN_PHASE = (0.0, 0.0)            # s


def generate_pairs(
    e_true: float,
    masses_g: Sequence[float] = DEFAULT_MASSES_G,
    trials: int = DEFAULT_TRIALS,
    mass_ci95_g: float = 10.0,
    displacement_ci95_mm: float = 1.0,
    seed: int = 0,
) -> List[LoadDisplacementPair]:
    """
    Each mass is hung `trials` times; the recorded mass and the measured
    deflection carry independent Gaussian errors (95% half-widths given).
    """
    rng = np.random.default_rng(seed)
    k_true = stiffness_from_e(e_true)
    pairs = []
    for mass in masses_g:
        for _ in range(trials):
            x_true = mass * G0 * 1e-3 / k_true
            recorded_mass = mass + (mass_ci95_g / Z95) * rng.standard_normal()
            measured_x = x_true + (displacement_ci95_mm / Z95) * rng.standard_normal()
            pairs.append(LoadDisplacementPair(float(recorded_mass), float(measured_x)))
    return pairs


def pairs_frame(pairs: Sequence[LoadDisplacementPair]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"applied_mass_g": p.applied_mass_g, "tip_displacement_mm": p.tip_displacement_mm} for p in pairs],
        columns=["applied_mass_g", "tip_displacement_mm"],
    )


def generate_ringdown(
    f1_hz: float = 7.0,
    f2_hz: float = 43.0,
    seconds: float = 2.0,
    rate_hz: float = 2000.0,
    amplitude: Tuple[float, float] = DEFAULT_RINGDOWN_AMPLITUDE,
    decay: Tuple[float, float] = DEFAULT_RINGDOWN_DECAY,
    phase_s: Tuple[float, float] = DEFAULT_RINGDOWN_PHASE,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> RingdownRecord:
    """Two damped cosines at the given damped frequencies, sampled at rate_hz"""
    n = int(round(seconds * rate_hz))
    t = np.arange(n) / rate_hz
    p = np.array([*amplitude, *decay, *phase_s], dtype=float)
    signal = two_mode_signal(t, p, f1_hz, f2_hz)
    if noise_sigma > 0:
        signal = signal + noise_sigma * np.random.default_rng(seed).standard_normal(n)
    return RingdownRecord(sample_rate_hz=rate_hz, samples=signal)


def ringdown_frame(rec: RingdownRecord) -> pd.DataFrame:
    return pd.DataFrame({"time_s": rec.times, "strain_microstrain": rec.samples})


def schedule_frame(rows: Optional[Sequence[Sequence[int]]] = None) -> pd.DataFrame:
    rows = DEFAULT_TWIN_CONFIG["mission"]["schedule"] if rows is None else rows
    return pd.DataFrame([list(r) for r in rows], columns=["t", "z1", "z2"])


def default_config_document() -> dict:
    """The full default config, ready to dump as JSON"""
    return copy.deepcopy(DEFAULT_TWIN_CONFIG)
