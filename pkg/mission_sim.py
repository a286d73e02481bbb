"""
🛫 Mission Simulation
=====================

Closed-loop co-simulation of the operational phase. Two endpoints talk
over a wire transport:

- asset: holds the prescribed ground-truth health, flies the most recent
  control and emits one noisy strain snapshot per timestep
- twin: assimilates the snapshot, smooths the whole history, applies the
  policy to its belief and predicts ahead, then replies with a control

The asset runs in a worker thread, the twin in the caller's thread.
"""

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from digital_state import (
    CalibrationPosterior,
    ControlInput,
    DAMAGE_LEVELS,
    HealthBelief,
    HealthState,
    Observation,
)
from health_inference import (
    Prediction,
    SmoothingResult,
    assimilation_log_likelihood,
    predict,
    smooth,
)
from mission_planner import Policy, act, build_mdp_spec, value_iteration
from surrogates import SurrogateConfig, strain_vector
from twin_config import TwinConfig
from twin_errors import InputError, TransportError
from wire_transport import (
    ControlFrame,
    InProcTransport,
    SensorFrame,
    ShutdownFrame,
    SocketTransport,
    make_transport,
)

logger = logging.getLogger(__name__)

SIGMA_ASSET = 150.0
OPERATIONAL_START_T = 4

SUMMARY_COLUMNS = ["t", "u", "map_z1", "map_z2", "r_health_mean", "r_control_mean", "r_error_mean"]

# =============================================
# 1. 실제 건전성 시나리오 (Ground truth)
# =============================================

@dataclass(frozen=True)
class GroundTruthSchedule:
    """(t, z1, z2) breakpoints; health holds between them"""
    breakpoints: Tuple[Tuple[int, int, int], ...]
    end_t: Optional[int] = None

    def __post_init__(self):
        rows = tuple((int(t), int(z1), int(z2)) for t, z1, z2 in self.breakpoints)
        if not rows:
            raise InputError("schedule needs at least one breakpoint")
        for (t0, a1, a2), (t1, b1, b2) in zip(rows, rows[1:]):
            if t1 <= t0:
                raise InputError(f"schedule times must increase strictly ({t0} then {t1})")
            if b1 < a1 or b2 < a2:
                raise InputError(f"schedule damage must not decrease (t={t1})")
        for t, z1, z2 in rows:
            if z1 not in DAMAGE_LEVELS or z2 not in DAMAGE_LEVELS:
                raise InputError(f"schedule state ({z1}, {z2}) at t={t} is off the grid")
        object.__setattr__(self, "breakpoints", rows)

    @property
    def start_t(self) -> int:
        return self.breakpoints[0][0]

    def state_at(self, t: int) -> HealthState:
        if t < self.start_t or (self.end_t is not None and t > self.end_t):
            raise InputError(f"t={t} is outside the schedule span")
        current = self.breakpoints[0]
        for row in self.breakpoints:
            if row[0] > t:
                break
            current = row
        return HealthState(current[1], current[2])

    def first_time(self, predicate) -> Optional[int]:
        """Earliest breakpoint time whose state satisfies predicate"""
        for t, z1, z2 in self.breakpoints:
            if predicate(HealthState(z1, z2)):
                return t
        return None

    def to_rows(self) -> List[dict]:
        return [{"t": t, "z1": z1, "z2": z2} for t, z1, z2 in self.breakpoints]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "GroundTruthSchedule":
        return cls(tuple(tuple(r) for r in rows))


def default_schedule(config: TwinConfig) -> GroundTruthSchedule:
    return GroundTruthSchedule.from_rows(config.section("mission")["schedule"])


def load_schedule(path: Union[str, Path]) -> GroundTruthSchedule:
    """CSV with columns t, z1, z2"""
    try:
        df = pd.read_csv(path)
        rows = df[["t", "z1", "z2"]].astype(int).values.tolist()
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read schedule {path}: {exc}") from exc
    return GroundTruthSchedule.from_rows(rows)


# =============================================
# 2. 자산 (Asset endpoint)
# =============================================

def asset_step(
    cfg: SurrogateConfig,
    schedule: GroundTruthSchedule,
    t: int,
    u: ControlInput,
    truth_e: float,
    noise_sigma: float = SIGMA_ASSET,
    seed: int = 0,
) -> Observation:
    """True strain at schedule(t) plus N(0, σ²) noise seeded by (seed, t)"""
    z = schedule.state_at(t)
    clean = strain_vector(cfg, z, truth_e, u)
    rng = np.random.default_rng([seed, t])
    noise = noise_sigma * rng.standard_normal(clean.size)
    return Observation(t=t, strains_microstrain=tuple(clean + noise))


def _asset_loop(channel, cfg, schedule, start_t, steps, u0, truth_e, noise_sigma, seed, errors):
    u = u0
    try:
        for t in range(start_t, start_t + steps):
            obs = asset_step(cfg, schedule, t, u, truth_e, noise_sigma, seed)
            channel.send(SensorFrame(t=t, strain=obs.strains_microstrain))
            reply = channel.recv()
            if isinstance(reply, ShutdownFrame):
                return
            if not isinstance(reply, ControlFrame) or reply.t != t:
                raise TransportError(f"asset expected control for t={t}, got {reply!r}")
            u = reply.control
        final = channel.recv()
        if not isinstance(final, ShutdownFrame):
            raise TransportError(f"asset expected shutdown, got {final!r}")
    except Exception as exc:
        errors.append(exc)
    finally:
        channel.close()


# =============================================
# 3. 트윈 (Twin endpoint)
# =============================================

@dataclass
class TwinState:
    """Everything the twin endpoint carries between timesteps"""
    cfg: SurrogateConfig
    policy: Policy
    e_samples: np.ndarray
    prior: HealthBelief
    start_t: int = OPERATIONAL_START_T
    initial_control: ControlInput = ControlInput.THREE_G
    sigma: float = 125.0
    horizon: int = 10
    observations: List[Observation] = field(default_factory=list)
    controls: List[ControlInput] = field(default_factory=list)
    log_likelihoods: List[np.ndarray] = field(default_factory=list)

    @property
    def next_t(self) -> int:
        return self.start_t + len(self.observations)

    @property
    def flight_control(self) -> ControlInput:
        """Control the next observation is flown under"""
        return self.controls[-1] if self.controls else self.initial_control


@dataclass(frozen=True)
class TwinStepResult:
    control: ControlInput
    smoothing: SmoothingResult
    prediction: Prediction


def twin_step(state: TwinState, obs: Observation) -> TwinStepResult:
    """Assimilate, smooth, act on the filtered belief, predict ahead"""
    if obs.t != state.next_t:
        raise InputError(f"twin expected observation for t={state.next_t}, got t={obs.t}")

    u_flown = state.flight_control
    log_likelihood = assimilation_log_likelihood(state.cfg, obs, u_flown, state.e_samples, state.sigma)
    observations = state.observations + [obs]
    log_likelihoods = state.log_likelihoods + [log_likelihood]

    smoothing = smooth(
        state.cfg,
        state.controls,
        observations,
        state.e_samples,
        sigma=state.sigma,
        initial_control=state.initial_control,
        prior=state.prior,
        log_likelihoods=log_likelihoods,
        t0=state.start_t,
    )
    belief = smoothing.filtered[-1]
    control = act(state.policy, belief)
    prediction = predict(state.cfg, belief, state.policy, horizon=state.horizon, t0=obs.t)

    # state only advances once the whole step succeeded
    state.observations.append(obs)
    state.log_likelihoods.append(log_likelihood)
    state.controls.append(control)
    return TwinStepResult(control=control, smoothing=smoothing, prediction=prediction)


# =============================================
# 4. 미션 로그 (Mission log)
# =============================================

@dataclass
class MissionLog:
    """
    One JSON record per timestep plus a final smoothed-history record.

    Wall time is kept beside the records, never inside them.
    """
    meta: dict
    records: List[dict] = field(default_factory=list)
    smoothed: List[dict] = field(default_factory=list)
    wall_times_s: List[float] = field(default_factory=list)
    complete: bool = False

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", **self.meta}, sort_keys=True)]
        lines += [json.dumps({"type": "step", **r}, sort_keys=True) for r in self.records]
        if self.smoothed:
            lines.append(json.dumps({"type": "smoothed", "steps": self.smoothed}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def summary_frame(self) -> pd.DataFrame:
        rows = [
            {
                "t": r["t"],
                "u": r["control"],
                "map_z1": r["map"]["z1"],
                "map_z2": r["map"]["z2"],
                "r_health_mean": r["rewards"]["r_health"]["mean"],
                "r_control_mean": r["rewards"]["r_control"]["mean"],
                "r_error_mean": r["rewards"]["r_error"]["mean"],
            }
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def controls(self) -> List[Tuple[int, str]]:
        return [(r["t"], r["control"]) for r in self.records]

    def write(self, jsonl_path: Union[str, Path], csv_path: Optional[Union[str, Path]] = None) -> None:
        Path(jsonl_path).write_text(self.to_jsonl(), encoding="utf-8")
        if csv_path is not None:
            self.summary_frame().to_csv(csv_path, index=False)

    @classmethod
    def read_jsonl(cls, path: Union[str, Path]) -> "MissionLog":
        log = cls(meta={})
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            entry = json.loads(line)
            kind = entry.pop("type")
            if kind == "meta":
                log.meta = entry
            elif kind == "step":
                log.records.append(entry)
            elif kind == "smoothed":
                log.smoothed = entry["steps"]
                log.complete = True
        return log


def _step_record(obs, truth, result: TwinStepResult, u_flown, frames_in, frames_out) -> dict:
    current = result.smoothing.marginals[-1]
    qoi = result.smoothing.qoi[-1]
    (m1, m2), (s1, s2) = current.mean_z(), current.std_z()
    return {
        "t": obs.t,
        "seq_in": frames_in,
        "seq_out": frames_out,
        "u_flown": u_flown.value,
        "control": result.control.value,
        "observation": list(obs.strains_microstrain),
        "truth": truth.to_dict(),
        "map": current.map_state().to_dict(),
        "mean_z": [m1, m2],
        "std_z": [s1, s2],
        "qoi_mean": [float(v) for v in qoi.mean()],
        "qoi_std": [float(v) for v in qoi.std()],
        "rewards": result.smoothing.rewards[-1].to_dict(),
        "prediction": {
            "map": [b.map_state().to_dict() for b in result.prediction.marginals],
            "controls": [u.value for u in result.prediction.map_controls],
            "p_3g": list(result.prediction.p_three_g),
        },
    }


# =============================================
# 5. 미션 실행 (Mission loop)
# =============================================

def twin_ensemble(config: TwinConfig, seed: int, posterior: Optional[CalibrationPosterior] = None) -> np.ndarray:
    """
    N e-samples for the twin: inverse-transform draws from a calibration
    posterior when one is given, else Gaussian draws from twin.e_posterior.
    """
    twin = config.section("twin")
    n = int(twin["ensemble_size"])
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    if posterior is not None:
        return posterior.sample(n, rng)
    mean, std = float(twin["e_posterior"]["mean"]), float(twin["e_posterior"]["std"])
    return mean + std * rng.standard_normal(n)


def solve_policy(config: TwinConfig, e_map: float, gamma: Optional[float] = None) -> Policy:
    planner = config.section("planner")
    spec = build_mdp_spec(
        config.surrogate,
        e_map,
        gamma=planner["gamma"] if gamma is None else gamma,
        control_weight=planner["control_weight"],
    )
    return value_iteration(spec, tol=planner["tol"], max_iter=planner["max_iter"])


def initial_belief(config: TwinConfig, e_samples: np.ndarray) -> HealthBelief:
    if config.section("twin")["initial_belief"] == "pristine":
        return HealthBelief.delta(HealthState(0, 0), e_samples)
    return HealthBelief.flat(e_samples)


def run_mission(
    config: TwinConfig,
    schedule: GroundTruthSchedule,
    steps: int,
    transport: Union[str, InProcTransport, SocketTransport] = "inproc",
    seed: int = 0,
    posterior: Optional[CalibrationPosterior] = None,
    log_path: Optional[Union[str, Path]] = None,
) -> MissionLog:
    """
    Drive `steps` sensor/control exchanges starting at the schedule start.

    Output depends only on (config, schedule, steps, seed, posterior). On a
    transport failure the partial log is flushed to log_path and the error
    re-raised.
    """
    if steps < 1:
        raise InputError(f"mission needs at least one step, got {steps}")
    if isinstance(transport, str):
        transport = make_transport(transport)

    mission = config.section("mission")
    twin_cfg = config.section("twin")
    start_t = schedule.start_t
    u0 = ControlInput.parse(mission["initial_control"])
    truth_e = float(mission["truth_e"])

    e_samples = twin_ensemble(config, seed, posterior)
    e_map = config.section("planner")["e_map"]
    e_map = float(np.mean(e_samples)) if e_map is None else float(e_map)
    policy = solve_policy(config, e_map)

    state = TwinState(
        cfg=config.surrogate,
        policy=policy,
        e_samples=e_samples,
        prior=initial_belief(config, e_samples),
        start_t=start_t,
        initial_control=u0,
        sigma=config.sigma_twin,
        horizon=int(twin_cfg["horizon"]),
    )
    log = MissionLog(meta={
        "config_hash": config.config_hash(),
        "seed": seed,
        "steps": steps,
        "start_t": start_t,
        "e_map": e_map,
        "e_samples": [float(e) for e in e_samples],
        "policy": policy.to_dict(),
        "schedule": schedule.to_rows(),
    })

    asset_channel, twin_channel = transport.open()
    errors: List[BaseException] = []
    asset = threading.Thread(
        target=_asset_loop,
        args=(asset_channel, config.surrogate, schedule, start_t, steps, u0, truth_e,
              config.sigma_asset, seed, errors),
        name="asset-endpoint",
        daemon=True,
    )
    asset.start()

    frames_in = frames_out = 0
    result = None
    try:
        for _ in range(steps):
            msg = twin_channel.recv()
            frames_in += 1
            if not isinstance(msg, SensorFrame):
                raise TransportError(f"twin expected a sensor frame, got {msg!r}")
            # sensor t+1 must not arrive before control t went out
            if msg.t != state.next_t:
                raise TransportError(f"frame order violated: expected sensor t={state.next_t}, got t={msg.t}")
            started = time.perf_counter()
            obs = Observation(t=msg.t, strains_microstrain=msg.strain)
            u_flown = state.flight_control
            result = twin_step(state, obs)
            twin_channel.send(ControlFrame(t=msg.t, control=result.control))
            frames_out += 1
            log.wall_times_s.append(time.perf_counter() - started)
            log.records.append(_step_record(
                obs, schedule.state_at(msg.t), result, u_flown, frames_in, frames_out,
            ))
            logger.debug("t=%d map=%s control=%s", msg.t, result.smoothing.marginals[-1].map_state(), result.control.value)
        twin_channel.send(ShutdownFrame())
        asset.join(timeout=30.0)
        if errors:
            raise TransportError(f"asset endpoint failed: {errors[0]}") from errors[0]
    except Exception:
        if log_path is not None:
            log.write(log_path)
        raise
    finally:
        twin_channel.close()

    log.smoothed = result.smoothing.summary_rows()
    log.complete = True
    if log_path is not None:
        log.write(log_path)
    logger.info("mission finished: %d steps", steps)
    return log


def first_control_switch(log: MissionLog, control: str = "2g") -> Optional[int]:
    """Earliest t at which the twin issued `control`"""
    for t, u in log.controls():
        if u == control:
            return t
    return None
