"""Training protocol, gust tests and the tap-count ablation campaign."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .domain import FlightConditionConfig
from .metrics import grp_timeseries, rise_time, settled_grp
from .plant import GustEnv, GustSchedule, PlantModel, neutral_action, reset as plant_reset, plant_step
from .ppo import PpoAgent, PpoHyperparams, Rollout, reward_from_lift

log = logging.getLogger(__name__)

INIT_STEPS = 10
RUNNING_WINDOW = 100


class Policy(Protocol):
    channels: int

    def act(self, obs: np.ndarray) -> int: ...


@dataclass(frozen=True)
class TrainingProtocol:
    episodes: int = 1000
    filters: int = 16
    hidden: tuple[int, int] = (512, 512)

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")


@dataclass
class TrainingResult:
    agent: PpoAgent
    episode_rewards: list[float]
    running_average: list[float]
    deflections: list[float]
    update_stats: list[dict] = field(default_factory=list)


def training_deflection(episode: int, cfg: FlightConditionConfig, rng: np.random.Generator) -> float:
    """Even episodes start in neutral flow, odd ones at a random deflection of either sign."""
    if episode % 2 == 0:
        return 0.0
    lo, hi = cfg.training_deflection_range
    magnitude = rng.uniform(lo, hi)
    return float(magnitude if rng.random() < 0.5 else -magnitude)


def running_average(values, window: int = RUNNING_WINDOW) -> list[float]:
    out, acc = [], 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def training_streams(seed) -> dict[str, np.random.Generator]:
    names = ("init", "gust", "noise", "action", "update")
    seqs = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, seqs)}


def run_training(model: PlantModel, hp: PpoHyperparams, protocol: TrainingProtocol, seed,
                 on_episode: Callable[[int, float, dict], None] | None = None) -> TrainingResult:
    """Train one controller: one PPO update per 200-step episode."""
    cfg = model.cfg
    if hp.horizon != cfg.episode_steps:
        raise ValueError(f"PPO horizon {hp.horizon} must equal episode length {cfg.episode_steps}")
    rngs = training_streams(seed)
    agent = PpoAgent.create(model.layout.channels, cfg.n_actions, hp, rngs["init"],
                            filters=protocol.filters, hidden=protocol.hidden)
    env = GustEnv(model, rngs["noise"])
    rewards, deflections, all_stats = [], [], []
    for ep in range(protocol.episodes):
        defl = training_deflection(ep, cfg, rngs["gust"])
        obs = env.reset(GustSchedule.training_hold(defl, cfg))
        rollout = Rollout()
        total = 0.0
        try:
            for _ in range(cfg.episode_steps):
                a, logp, value = agent.select_action(obs, "sample", rngs["action"])
                next_obs, lift = env.step(a)
                r = reward_from_lift(lift, cfg.baseline_lift)
                rollout.add(obs, a, logp, value, r)
                total += r
                obs = next_obs
            bootstrap = float(agent.critic.forward(obs)[0])
            stats = agent.update(rollout, bootstrap, rngs["update"])
        except (FloatingPointError, ValueError) as exc:
            raise RuntimeError(f"training aborted in episode {ep}: {exc}") from exc
        stats.update(episode=ep, deflection=defl, total_reward=total)
        rewards.append(total)
        deflections.append(defl)
        all_stats.append(stats)
        if on_episode is not None:
            on_episode(ep, total, stats)
    return TrainingResult(agent, rewards, running_average(rewards), deflections, all_stats)


# testing

@dataclass
class GustTestRecord:
    controller_id: str
    tap_count: int
    condition: str
    deflection: float
    repetition: int
    seed: int
    settled_grp: float
    rise_time: float | None
    lift_trace: list[float] = field(default=None, repr=False)
    grp_trace: list[float] = field(default=None, repr=False)
    trace_hash: str = ""
    metadata_hash: str = ""

    @property
    def key(self) -> str:
        return cell_key(self.condition, self.tap_count, self.controller_id, self.deflection, self.repetition)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("lift_trace")
        d.pop("grp_trace")
        d["key"] = self.key
        return d

    @classmethod
    def from_summary(cls, d: dict) -> "GustTestRecord":
        d = {k: v for k, v in d.items() if k != "key"}
        return cls(**d)


def cell_key(condition, tap_count, controller_id, deflection, repetition) -> str:
    return f"{condition}|{tap_count}|{controller_id}|{float(deflection):+.3f}|{repetition}"


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def gust_segment_at_wing(schedule: GustSchedule, model: PlantModel) -> tuple[int, int]:
    """Steps during which the gust is present at the wing."""
    start, stop = schedule.gust_window(model.dt)
    return start + model.delay_steps, stop + model.delay_steps


def schedule_steps(schedule: GustSchedule, model: PlantModel) -> int:
    # run past the schedule long enough for the delayed gust to clear the wing
    return schedule.total_steps(model.dt) + model.delay_steps


def baseline_trace(model: PlantModel, deflection: float) -> np.ndarray:
    """Noise-free lift of the unactuated wing over a test schedule."""
    schedule = GustSchedule.test_quarters(deflection, model.cfg)
    state = plant_reset(model, schedule, None)
    lifts = []
    for _ in range(schedule_steps(schedule, model)):
        _, lift, state, _ = plant_step(state, neutral_action(model.cfg), model, None, frozen_actuator=True)
        lifts.append(lift)
    return np.asarray(lifts)


def run_gust_test(policy: Policy, model: PlantModel, deflection: float, seed,
                  baseline: np.ndarray | None = None, controller_id: str = "",
                  repetition: int = 0, noise: bool = True) -> GustTestRecord:
    """One quarter/half/quarter gust episode with greedy actions."""
    cfg = model.cfg
    if not any(np.isclose(deflection, d) for d in cfg.testing_deflections):
        raise ValueError(f"deflection {deflection} is not a testing deflection of {cfg.name.value}")
    if getattr(policy, "channels", model.layout.channels) != model.layout.channels:
        raise ValueError(f"policy observes {policy.channels} channels, plant provides {model.layout.channels}")
    schedule = GustSchedule.test_quarters(deflection, cfg)
    if baseline is None:
        baseline = baseline_trace(model, deflection)
    rng = np.random.default_rng(seed) if noise else None
    env = GustEnv(model, rng)
    # initialization: neutral flow, trailing edge held, window filled with baseline-relative readings
    env.reset(GustSchedule.training_hold(0.0, cfg))
    for _ in range(INIT_STEPS):
        obs, _ = env.step(neutral_action(cfg), frozen_actuator=True)
    env.state = plant_reset(model, schedule, None)

    lifts = []
    for _ in range(schedule_steps(schedule, model)):
        obs, lift = env.step(policy.act(obs))
        lifts.append(lift)
    lifts = np.asarray(lifts)
    trace = grp_timeseries(lifts, baseline, cfg.baseline_lift, gust_segment_at_wing(schedule, model), model.dt)
    settled = settled_grp(trace)
    rec = GustTestRecord(
        controller_id=controller_id, tap_count=model.layout.tap_count, condition=cfg.name.value,
        deflection=float(deflection), repetition=repetition, seed=int(seed) if np.ndim(seed) == 0 else 0,
        settled_grp=settled, rise_time=rise_time(trace, settled),
        lift_trace=lifts.tolist(), grp_trace=trace.grp.tolist())
    rec.trace_hash = _hash({"lift": rec.lift_trace, "grp": rec.grp_trace})
    rec.metadata_hash = _hash({"key": rec.key, "seed": rec.seed, "model": repr(model)})
    return rec
