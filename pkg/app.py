"""
🛩️ Wing Digital Twin
=====================

Command-line entry point: calibrate the twin, solve the maneuver policy,
fly a closed-loop mission, and generate synthetic inputs.

사용법:
    python app.py gen pairs --e-true 1.0073 --out pairs.csv
    python app.py calibrate stiffness --data pairs.csv --seed 42 --out runs/stiffness
    python app.py plan --out runs/plan
    python app.py simulate --steps 50 --seed 42 --transport socket --out runs/mission

Exit codes: 0 ok, 2 bad input/usage, 3 numeric failure, 4 environment.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from components.artifacts import RunManifest, dumps_json, write_csv, write_json, write_text
from digital_state import GeometricParams
from mission_planner import Policy, format_policy_grid
from mission_sim import default_schedule, first_control_switch, load_schedule, run_mission, solve_policy
from modal_identification import calibrate_modal, estimate_modes, load_ringdown
from stiffness_calibration import (
    GaussianPrior,
    PairNoiseModel,
    Z95,
    calibrate_geometry,
    calibrate_stiffness,
    load_pairs,
    load_posterior,
)
from synthetic_data import (
    DEFAULT_MASSES_G,
    default_config_document,
    generate_pairs,
    generate_ringdown,
    pairs_frame,
    ringdown_frame,
    schedule_frame,
)
from twin_config import TOOL_VERSION, TwinConfig, build_config, load_config, resolve_seed, setup_logging
from twin_errors import InputError, TwinError

logger = logging.getLogger("app")

# likelihood curves are tabulated on this e grid
LIKELIHOOD_GRID = np.linspace(0.85, 1.15, 601)


# =============================================
# 공통 헬퍼 (Shared helpers)
# =============================================

def _config_with(args, overrides: Optional[dict] = None) -> TwinConfig:
    """Config file (or defaults) with CLI overrides merged on top"""
    base = load_config(args.config)
    if not overrides:
        return base
    merged = base.to_dict()
    for section, values in overrides.items():
        merged.setdefault(section, {}).update(values)
    return build_config(merged)


def _manifest(args, argv: List[str], config: TwinConfig, seed: Optional[int] = None) -> RunManifest:
    manifest = RunManifest(
        command=" ".join(["app.py", *argv]),
        tool_version=TOOL_VERSION,
        seed=seed,
        config_path=str(args.config) if args.config else None,
        config_hash=config.config_hash(),
    )
    if args.config:
        manifest.add_input(args.config)
    return manifest


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


# =============================================
# 1. calibrate
# =============================================

def cmd_calibrate_geometry(args, argv) -> int:
    config = load_config(args.config)
    prior_cfg = config.section("geometry_prior")
    measured = GeometricParams.from_dict(_read_json(args.measured))
    tolerance = float(prior_cfg["tolerance_mm"])
    prior = {
        name: GaussianPrior(float(mean), tolerance / Z95)
        for name, mean in prior_cfg.items() if name != "tolerance_mm"
    }
    result = calibrate_geometry(measured, prior, tolerance_mm=tolerance)

    out = _out_dir(args)
    manifest = _manifest(args, argv, config)
    manifest.add_input(args.measured)
    path = write_json(out / "geometry_posterior.json", result.to_dict())
    manifest.add_output(path)
    manifest.write(out)

    print(f"📐 형상 보정 완료 (geometry): reward = {result.reward:.4f}")
    print(f"   → {path}")
    return 0


def cmd_calibrate_stiffness(args, argv) -> int:
    config = load_config(args.config)
    st_cfg = config.section("stiffness")
    seed = resolve_seed(args.seed)
    pairs = load_pairs(args.data)
    noise = PairNoiseModel(
        mass_ci95_g=float(st_cfg["mass_ci95_g"]),
        displacement_ci95_mm=float(st_cfg["displacement_ci95_mm"]),
        bandwidth_floor=float(st_cfg["bandwidth_floor"]),
    )
    print(f"📏 강성 보정 중... {len(pairs)} pairs, {args.particles or st_cfg['particles']} particles")
    result = calibrate_stiffness(
        pairs,
        prior_mean=float(st_cfg["prior_mean"]),
        prior_std=float(st_cfg["prior_std"]),
        n_particles=int(args.particles or st_cfg["particles"]),
        kde_samples=int(args.kde_samples or st_cfg["kde_samples"]),
        noise_model=noise,
        seed=seed,
    )

    out = _out_dir(args)
    manifest = _manifest(args, argv, config, seed)
    manifest.add_input(args.data)
    posterior_path = write_json(out / "stiffness_posterior.json", result.to_dict(include_particles=args.keep_particles))
    curves_path = write_csv(out / "likelihood_curves.csv", pd.DataFrame(result.likelihood_curves(LIKELIHOOD_GRID)))
    manifest.add_output(posterior_path)
    manifest.add_output(curves_path)
    if args.plot:
        from components.charts import plot_likelihood_curves
        manifest.add_output(plot_likelihood_curves(
            result.likelihood_curves(LIKELIHOOD_GRID), result.posterior.mean, out / "likelihood_curves.png",
        ))
    manifest.write(out)

    post = result.posterior
    print(f"✅ e = {post.mean:.4f} ± {post.std:.4f} (95% CI {post.ci95[0]:.4f} – {post.ci95[1]:.4f})")
    print(f"   k 95% CI: {result.k_ci95[0]:.4f} – {result.k_ci95[1]:.4f} N/mm")
    print(f"   → {posterior_path}")
    return 0


def cmd_calibrate_modal(args, argv) -> int:
    config = load_config(args.config)
    modal_cfg = config.section("modal")
    seed = resolve_seed(args.seed)
    records = [load_ringdown(path) for path in args.ringdown]
    estimates = [estimate_modes(rec) for rec in records]
    for i, est in enumerate(estimates, start=1):
        logger.info("record %d: omega=%s zeta=%s", i, est.omega_hz, est.zeta)

    posterior = load_posterior(args.posterior)
    geometry = None
    if args.geometry:
        data = _read_json(args.geometry)
        geometry = GeometricParams.from_dict(data.get("posterior", data))

    print(f"〰️ 모달 보정 중... {len(records)} records, {args.samples or modal_cfg['n_samples']} samples")
    result = calibrate_modal(
        config.surrogate,
        posterior,
        estimates,
        n_samples=int(args.samples or modal_cfg["n_samples"]),
        seed=seed,
        mass_total_g=float(modal_cfg["mass_total_g"]),
        geometry=geometry,
    )

    out = _out_dir(args)
    manifest = _manifest(args, argv, config, seed)
    for path in (*args.ringdown, args.posterior, *([args.geometry] if args.geometry else [])):
        manifest.add_input(path)
    samples_path = write_json(out / "modal_samples.json", result.to_dict())
    table_path = write_csv(out / "modal_summary.csv", pd.DataFrame(result.discrepancy_table()))
    manifest.add_output(samples_path)
    manifest.add_output(table_path)
    manifest.write(out)

    summary = result.summary()
    print(f"✅ m_servo = {summary['m_servo_g']['mean']:.2f} g, m_pitot = {summary['m_pitot_g']['mean']:.2f} g")
    print(f"   alpha = {summary['alpha']['mean']:.4g}, beta = {summary['beta']['mean']:.4g}, reward = {result.reward:.3g}")
    print(f"   → {samples_path}")
    return 0


# =============================================
# 2. plan
# =============================================

def cmd_plan(args, argv) -> int:
    overrides = {"planner": {"gamma": args.gamma}} if args.gamma is not None else None
    config = _config_with(args, overrides)
    planner = config.section("planner")
    e_map = planner["e_map"]
    e_map = float(config.section("twin")["e_posterior"]["mean"]) if e_map is None else float(e_map)
    policy = solve_policy(config, e_map)

    out = _out_dir(args)
    manifest = _manifest(args, argv, config)
    path = write_json(out / "policy.json", policy.to_dict())
    manifest.add_output(path)
    manifest.write(out)

    print(f"🧭 정책 (gamma={planner['gamma']}, {policy.iterations} sweeps):")
    print(format_policy_grid(policy))
    print(f"   → {path}")
    return 0


# =============================================
# 3. simulate
# =============================================

def cmd_simulate(args, argv) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed)
    schedule = load_schedule(args.schedule) if args.schedule else default_schedule(config)
    steps = int(args.steps or config.section("mission")["steps"])
    posterior = load_posterior(args.posterior) if args.posterior else None

    out = _out_dir(args)
    log_path = out / "mission_log.jsonl"
    print(f"🛫 미션 시작: {steps} steps, transport={args.transport}, seed={seed}")
    log = run_mission(config, schedule, steps, transport=args.transport, seed=seed,
                      posterior=posterior, log_path=log_path)

    manifest = _manifest(args, argv, config, seed)
    for path in (args.schedule, args.posterior):
        if path:
            manifest.add_input(path)
    write_text(log_path, log.to_jsonl())
    csv_path = write_csv(out / "mission_summary.csv", log.summary_frame())
    manifest.add_output(log_path)
    manifest.add_output(csv_path)
    if args.plot:
        from components.charts import plot_mission
        manifest.add_output(plot_mission(log.records, [r["truth"] for r in log.records], out / "mission.png"))
    manifest.wall_time_s = log.wall_times_s
    manifest.write(out)

    switch = first_control_switch(log, "2g")
    print("🧭 Policy grid:")
    print(format_policy_grid(Policy.from_dict(log.meta["policy"])))
    if switch is None:
        print("✅ 미션 완료: 2g fallback never issued")
    else:
        print(f"✅ 미션 완료: first 2g issued at t={switch}")
    print(f"   → {csv_path}")
    return 0


# =============================================
# 4. gen
# =============================================

def _emit(args, text: str) -> int:
    if args.out:
        path = write_text(args.out, text)
        print(f"💾 {path}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args, argv) -> int:
    seed = resolve_seed(args.seed) if hasattr(args, "seed") else 0
    if args.kind == "pairs":
        masses = _parse_floats(args.masses) if args.masses else list(DEFAULT_MASSES_G)
        pairs = generate_pairs(args.e_true, masses, trials=args.trials, seed=seed,
                               mass_ci95_g=args.mass_ci95, displacement_ci95_mm=args.displacement_ci95)
        return _emit(args, pairs_frame(pairs).to_csv(index=False, lineterminator="\n"))
    if args.kind == "ringdown":
        rec = generate_ringdown(args.f1, args.f2, seconds=args.seconds, rate_hz=args.rate,
                                noise_sigma=args.noise, seed=seed)
        return _emit(args, ringdown_frame(rec).to_csv(index=False, lineterminator="\n"))
    if args.kind == "schedule":
        return _emit(args, schedule_frame().to_csv(index=False, lineterminator="\n"))
    return _emit(args, dumps_json(default_config_document()))


# =============================================
# 5. argparse
# =============================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Wing digital twin: calibrate, plan, simulate")
    parser.add_argument("--log-level", default=None, help="overrides TWIN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="calibration steps 1-3")
    cal_sub = cal.add_subparsers(dest="step", required=True)

    geo = cal_sub.add_parser("geometry")
    geo.add_argument("--measured", required=True, help="JSON with semi_span_mm, chord_root_mm, chord_tip_mm")
    stiff = cal_sub.add_parser("stiffness")
    stiff.add_argument("--data", required=True, help="CSV: applied_mass_g, tip_displacement_mm")
    stiff.add_argument("--particles", type=int, default=None)
    stiff.add_argument("--kde-samples", type=int, default=None)
    stiff.add_argument("--keep-particles", action="store_true", help="store every particle in the posterior JSON")
    stiff.add_argument("--plot", action="store_true")
    modal = cal_sub.add_parser("modal")
    modal.add_argument("--ringdown", required=True, nargs="+", help="CSV: time_s, strain_microstrain")
    modal.add_argument("--posterior", required=True, help="stiffness posterior JSON")
    modal.add_argument("--geometry", default=None, help="geometry posterior JSON")
    modal.add_argument("--samples", type=int, default=None)
    for p in (geo, stiff, modal):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)

    plan = sub.add_parser("plan", help="solve the maneuver policy")
    plan.add_argument("--config", default=None)
    plan.add_argument("--gamma", type=float, default=None)
    plan.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="closed-loop mission")
    sim.add_argument("--config", default=None)
    sim.add_argument("--schedule", default=None, help="CSV: t, z1, z2")
    sim.add_argument("--steps", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--transport", choices=("inproc", "socket"), default="inproc")
    sim.add_argument("--posterior", default=None, help="stiffness posterior or modal samples JSON for the e-ensemble")
    sim.add_argument("--plot", action="store_true")
    sim.add_argument("--out", required=True)

    gen = sub.add_parser("gen", help="synthetic inputs")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    pairs = gen_sub.add_parser("pairs")
    pairs.add_argument("--e-true", type=float, default=1.0073)
    pairs.add_argument("--trials", type=int, default=2)
    pairs.add_argument("--masses", default=None, help="comma-separated grams")
    pairs.add_argument("--mass-ci95", type=float, default=10.0)
    pairs.add_argument("--displacement-ci95", type=float, default=1.0)
    ring = gen_sub.add_parser("ringdown")
    ring.add_argument("--f1", type=float, default=7.0)
    ring.add_argument("--f2", type=float, default=43.0)
    ring.add_argument("--seconds", type=float, default=2.0)
    ring.add_argument("--rate", type=float, default=2000.0)
    ring.add_argument("--noise", type=float, default=0.0)
    schedule = gen_sub.add_parser("schedule")
    config = gen_sub.add_parser("config")
    for p in (pairs, ring, schedule, config):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


COMMANDS = {
    ("calibrate", "geometry"): cmd_calibrate_geometry,
    ("calibrate", "stiffness"): cmd_calibrate_stiffness,
    ("calibrate", "modal"): cmd_calibrate_modal,
    ("plan", None): cmd_plan,
    ("simulate", None): cmd_simulate,
    ("gen", None): cmd_gen,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    handler = COMMANDS[(args.command, getattr(args, "step", None))]
    try:
        return handler(args, argv)
    except TwinError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
