"""
Command-line surface: subcommands, outputs, exit codes
"""

import json

import pandas as pd
import pytest

from app import main
from components.artifacts import verify_manifest
from surrogates import default_surrogate_config, modal_frequencies
from synthetic_data import generate_ringdown, ringdown_frame
from twin_config import build_config
from twin_errors import InputError


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("TWIN_SEED", raising=False)


# =============================================
# gen
# =============================================

def test_gen_pairs(tmp_path):
    out = tmp_path / "pairs.csv"
    assert main(["gen", "pairs", "--seed", "3", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert list(df.columns) == ["applied_mass_g", "tip_displacement_mm"]
    assert len(df) == 8


def test_gen_ringdown(tmp_path):
    out = tmp_path / "ringdown.csv"
    assert main(["gen", "ringdown", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert list(df.columns) == ["time_s", "strain_microstrain"]
    assert len(df) == 4000


def test_gen_config_is_a_usable_config(capsys):
    assert main(["gen", "config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert build_config(doc).config_hash() == build_config().config_hash()


def test_env_seed_wins_over_flag(tmp_path, monkeypatch):
    main(["gen", "pairs", "--seed", "7", "--out", str(tmp_path / "a.csv")])
    monkeypatch.setenv("TWIN_SEED", "7")
    main(["gen", "pairs", "--seed", "1", "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_negative_seed_flag_exits_2(tmp_path, capsys):
    code = main(["simulate", "--steps", "1", "--seed", "-1", "--out", str(tmp_path)])
    assert code == 2
    assert "non-negative" in capsys.readouterr().err
    assert not (tmp_path / "mission_log.jsonl").exists()


def test_negative_env_seed_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("TWIN_SEED", "-3")
    assert main(["gen", "pairs", "--seed", "1", "--out", str(tmp_path / "pairs.csv")]) == 2
    assert not (tmp_path / "pairs.csv").exists()


# =============================================
# calibrate
# =============================================

def test_calibrate_geometry(tmp_path, capsys):
    measured = tmp_path / "measured.json"
    measured.write_text(json.dumps({"semi_span_mm": 1500.0, "chord_root_mm": 300.0, "chord_tip_mm": 200.0}))
    assert main(["calibrate", "geometry", "--measured", str(measured), "--out", str(tmp_path / "geo")]) == 0
    result = json.loads((tmp_path / "geo" / "geometry_posterior.json").read_text())
    assert result["reward"] == pytest.approx(0.0)
    assert "geometry" in capsys.readouterr().out


def test_geometry_out_of_tolerance_scores_negative_reward(tmp_path):
    measured = tmp_path / "measured.json"
    measured.write_text(json.dumps({"semi_span_mm": 1510.0, "chord_root_mm": 300.0, "chord_tip_mm": 200.0}))
    assert main(["calibrate", "geometry", "--measured", str(measured), "--out", str(tmp_path / "geo")]) == 0
    result = json.loads((tmp_path / "geo" / "geometry_posterior.json").read_text())
    assert result["reward"] == pytest.approx(-4.0)


def test_geometry_tolerance_comes_from_config(tmp_path):
    measured = tmp_path / "measured.json"
    measured.write_text(json.dumps({"semi_span_mm": 1510.0, "chord_root_mm": 300.0, "chord_tip_mm": 200.0}))
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"geometry_prior": {"semi_span_mm": 1505.0, "tolerance_mm": 5.0}}))
    code = main(["calibrate", "geometry", "--measured", str(measured), "--config", str(config),
                 "--out", str(tmp_path / "geo")])
    assert code == 0
    result = json.loads((tmp_path / "geo" / "geometry_posterior.json").read_text())
    assert result["reward"] == pytest.approx(-1.0)


def test_zero_geometry_tolerance_is_rejected():
    with pytest.raises(InputError, match="tolerance_mm"):
        build_config({"geometry_prior": {"tolerance_mm": 0.0}})


def test_inverted_chords_are_input_error(tmp_path):
    measured = tmp_path / "measured.json"
    measured.write_text(json.dumps({"semi_span_mm": 1500.0, "chord_root_mm": 200.0, "chord_tip_mm": 300.0}))
    assert main(["calibrate", "geometry", "--measured", str(measured), "--out", str(tmp_path / "geo")]) == 2


def _stiffness(tmp_path, name: str) -> int:
    pairs = tmp_path / "pairs.csv"
    if not pairs.exists():
        main(["gen", "pairs", "--seed", "5", "--out", str(pairs)])
    return main(["calibrate", "stiffness", "--data", str(pairs), "--seed", "42",
                 "--particles", "20000", "--kde-samples", "2000", "--out", str(tmp_path / name)])


def test_calibrate_stiffness_is_reproducible(tmp_path):
    assert _stiffness(tmp_path, "a") == 0
    assert _stiffness(tmp_path, "b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "stiffness_posterior.json").read_bytes() == (b / "stiffness_posterior.json").read_bytes()
    assert (a / "likelihood_curves.csv").read_bytes() == (b / "likelihood_curves.csv").read_bytes()
    posterior = json.loads((a / "stiffness_posterior.json").read_text())
    assert 0.9 < posterior["mean"] < 1.1
    assert len(posterior["e_hat"]) == 8


def test_manifest_hashes_every_file(tmp_path):
    assert _stiffness(tmp_path, "run") == 0
    manifest_path = tmp_path / "run" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    assert manifest["seed"] == 42
    assert len(manifest["inputs"]) == 1
    assert len(manifest["outputs"]) == 2
    assert verify_manifest(manifest_path) == []
    (tmp_path / "pairs.csv").write_text("applied_mass_g,tip_displacement_mm\n100,1\n")
    assert verify_manifest(manifest_path) == [str(tmp_path / "pairs.csv")]


def test_missing_data_file_exits_2(tmp_path, capsys):
    code = main(["calibrate", "stiffness", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["plan", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_calibrate_modal(tmp_path):
    f1, f2 = modal_frequencies(default_surrogate_config(), 100.0, 272.0, 1.0073)
    ringdown = tmp_path / "ringdown.csv"
    ringdown_frame(generate_ringdown(f1, f2)).to_csv(ringdown, index=False)
    posterior = tmp_path / "posterior.json"
    posterior.write_text(json.dumps({"mean": 1.0073, "std": 0.0035}))
    code = main(["calibrate", "modal", "--ringdown", str(ringdown), "--posterior", str(posterior),
                 "--samples", "10", "--seed", "1", "--out", str(tmp_path / "modal")])
    assert code == 0
    samples = json.loads((tmp_path / "modal" / "modal_samples.json").read_text())
    assert samples
    assert (tmp_path / "modal" / "modal_summary.csv").exists()


# =============================================
# plan
# =============================================

def test_plan_prints_threshold_grid(tmp_path, capsys):
    assert main(["plan", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "z1\\z2" in printed
    policy = json.loads((tmp_path / "policy.json").read_text())
    assert policy["gamma"] == pytest.approx(0.6)


def test_plan_gamma_zero(tmp_path):
    assert main(["plan", "--gamma", "0", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "policy.json").read_text())["gamma"] == 0.0


def test_plan_gamma_one_exits_2(tmp_path):
    assert main(["plan", "--gamma", "1", "--out", str(tmp_path)]) == 2


# =============================================
# simulate
# =============================================

def test_simulate_one_step_twice(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["simulate", "--steps", "1", "--seed", "42", "--out", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "mission_summary.csv").read_bytes() == (b / "mission_summary.csv").read_bytes()
    assert (a / "mission_log.jsonl").read_bytes() == (b / "mission_log.jsonl").read_bytes()
    summary = pd.read_csv(a / "mission_summary.csv")
    assert summary["t"].tolist() == [4]
    assert summary["u"].tolist() == ["3g"]
    assert "2g fallback never issued" in capsys.readouterr().out


def test_simulate_bind_failure_exits_4(tmp_path, monkeypatch):
    def refuse(*args, **kwargs):
        raise OSError("address in use")

    monkeypatch.setattr("wire_transport.socket.create_server", refuse)
    code = main(["simulate", "--steps", "1", "--transport", "socket", "--out", str(tmp_path)])
    assert code == 4


def test_plot_flags_write_png(tmp_path):
    assert main(["simulate", "--steps", "3", "--plot", "--out", str(tmp_path / "mission")]) == 0
    assert (tmp_path / "mission" / "mission.png").stat().st_size > 0
    pairs = tmp_path / "pairs.csv"
    main(["gen", "pairs", "--out", str(pairs)])
    code = main(["calibrate", "stiffness", "--data", str(pairs), "--particles", "5000",
                 "--kde-samples", "1000", "--plot", "--out", str(tmp_path / "stiffness")])
    assert code == 0
    manifest = json.loads((tmp_path / "stiffness" / "manifest.json").read_text())
    assert any(path.endswith("likelihood_curves.png") for path in manifest["outputs"])
