"""Surrogate wind-tunnel plant.

The plant is phenomenological: the gust generator's deflection reaches the wing
after a transport delay, produces the tabulated change in lift, and shows up on
the pressure taps with a chordwise, direction-dependent sensitivity. The morphing
trailing edge adds lift through the actuator model.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .actuator import ActuatorParams, ActuatorState, apply_action, lift_from_camber, step_dynamics
from .domain import (MAX_GUST_DEFLECTION, FlightConditionConfig, ObservationWindow, SensorLayout,
                     dynamic_pressure, normalize_mfc, normalize_pressure)

GENERATOR_OFFSET = 0.30  # m, gust generator distance upstream of the wing
TARGET_PEAK_SIGNAL = 2.0  # normalized tap-1 signal for the strongest training gust
PRESSURE_CP_GAIN = 0.5    # pressure coefficient change per unit gust strength at unit sensitivity


class ScheduleKind(str, enum.Enum):
    TRAINING_HOLD = "training-hold"
    TEST_QUARTERS = "test-quarters"


@dataclass(frozen=True)
class GustSchedule:
    segments: tuple[tuple[float, float], ...]  # (deflection deg, duration s)
    kind: ScheduleKind

    @classmethod
    def training_hold(cls, deflection: float, cfg: FlightConditionConfig) -> "GustSchedule":
        return cls(((float(deflection), cfg.episode_steps * cfg.timestep),), ScheduleKind.TRAINING_HOLD)

    @classmethod
    def test_quarters(cls, deflection: float, cfg: FlightConditionConfig) -> "GustSchedule":
        half = cfg.gust_duration / 2
        return cls(((0.0, half), (float(deflection), cfg.gust_duration), (0.0, half)),
                   ScheduleKind.TEST_QUARTERS)

    def __post_init__(self):
        if self.kind is ScheduleKind.TRAINING_HOLD and len(self.segments) != 1:
            raise ValueError("a training hold has exactly one segment")
        if self.kind is ScheduleKind.TEST_QUARTERS:
            if len(self.segments) != 3 or self.segments[0][0] != 0 or self.segments[2][0] != 0:
                raise ValueError("a test schedule is neutral, gust, neutral")
        for d, dur in self.segments:
            if abs(d) > MAX_GUST_DEFLECTION:
                raise ValueError(f"deflection {d} beyond the {MAX_GUST_DEFLECTION} deg limit")
            if dur <= 0:
                raise ValueError("segment durations must be positive")

    def step_counts(self, dt: float) -> list[int]:
        return [int(round(dur / dt)) for _, dur in self.segments]

    def total_steps(self, dt: float) -> int:
        return sum(self.step_counts(dt))

    def deflection_at(self, step: int, dt: float) -> float:
        """Generator deflection during simulation step ``step``; holds the last value after the end."""
        edge = 0
        for (d, _), n in zip(self.segments, self.step_counts(dt)):
            edge += n
            if step < edge:
                return d
        return self.segments[-1][0]

    @property
    def gust_deflection(self) -> float:
        if self.kind is ScheduleKind.TEST_QUARTERS:
            return self.segments[1][0]
        return self.segments[0][0]

    def gust_window(self, dt: float) -> tuple[int, int]:
        """[start, stop) generator steps of the gust segment."""
        counts = self.step_counts(dt)
        if self.kind is ScheduleKind.TRAINING_HOLD:
            return 0, counts[0]
        return counts[0], counts[0] + counts[1]


@dataclass(frozen=True)
class TapSensitivityProfile:
    up_sensitivity: tuple[float, ...] = (1.0, 0.8, 0.6, 0.3, 0.12, 0.06)
    # taps 2 and 3 carry the measured downward losses; rear ratios keep the down row monotone
    down_ratio: tuple[float, ...] = (1.0, 0.73, 0.167, 0.3, 0.5, 0.5)
    camber_coupling: tuple[float, ...] = (0.0, 0.01, 0.02, 0.04, 0.08, 0.12)  # signal units per unit camber
    noise_sigma: float = 0.05        # normalized signal units
    lift_noise_sigma: float = 0.002  # N

    def __post_init__(self):
        for name in ("up_sensitivity", "down_ratio", "camber_coupling"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} needs one entry per tap")
        up = self.up_sensitivity
        if any(b >= a for a, b in zip(up, up[1:])) or up[-1] <= 0:
            raise ValueError("up_sensitivity must be positive and strictly decreasing toward the trailing edge")
        if any(r < 0 for r in self.down_ratio):
            raise ValueError("down_ratio must be nonnegative")
        down = self.down_sensitivity
        if any(b > a for a, b in zip(down, down[1:])):
            raise ValueError("down sensitivity must not increase toward the trailing edge")
        if self.noise_sigma < 0 or self.lift_noise_sigma < 0:
            raise ValueError("noise levels must be nonnegative")

    @property
    def down_sensitivity(self) -> tuple[float, ...]:
        return tuple(u * r for u, r in zip(self.up_sensitivity, self.down_ratio))

    def without_noise(self) -> "TapSensitivityProfile":
        return replace(self, noise_sigma=0.0, lift_noise_sigma=0.0)


def gust_lift_map(deflection: float, cfg: FlightConditionConfig) -> float:
    """Gust-induced change in lift for a generator deflection.

    Piecewise linear through the origin and the tabulated anchors, extended
    linearly past the outermost anchors.
    """
    if not math.isfinite(deflection) or abs(deflection) > MAX_GUST_DEFLECTION + 1e-12:
        raise ValueError(f"deflection {deflection} beyond the {MAX_GUST_DEFLECTION} deg limit")
    pts = sorted(list(cfg.delta_lift_anchors) + [(0.0, 0.0)])
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if deflection <= xs[0]:
        i = 0
    elif deflection >= xs[-1]:
        i = len(xs) - 2
    else:
        i = int(np.searchsorted(xs, deflection, side="right")) - 1
        if xs[i] == deflection:
            return ys[i]
    slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
    return ys[i] + slope * (deflection - xs[i])


def transport_delay_steps(flow_speed: float, dt: float) -> int:
    # rounded to the nearest step but never below one, so sensing never trails the generator
    return max(1, int(round(GENERATOR_OFFSET / flow_speed / dt)))


@dataclass(frozen=True)
class PlantModel:
    """Everything constant over an episode: condition, actuator, sensors."""

    cfg: FlightConditionConfig
    actuator: ActuatorParams
    profile: TapSensitivityProfile = field(default_factory=TapSensitivityProfile)
    layout: SensorLayout = field(default_factory=SensorLayout)

    @property
    def dt(self) -> float:
        return self.cfg.timestep

    @cached_property
    def delay_steps(self) -> int:
        return transport_delay_steps(self.cfg.flow_speed, self.cfg.timestep)

    @cached_property
    def dynamic_pressure(self) -> float:
        return dynamic_pressure(self.cfg.flow_speed)

    @cached_property
    def static_pressures(self) -> np.ndarray:
        # suction at neutral flow, stronger near the leading edge and at higher incidence
        shape = np.array([2.0, 1.6, 1.2, 0.9, 0.4, 0.3])
        return -self.dynamic_pressure * shape * (0.2 + self.cfg.alpha / 10.0)

    @cached_property
    def pressure_scale(self) -> float:
        """Signal units per pascal, fixed so the strongest training gust reads 2.0 on tap 1."""
        hi = self.cfg.training_deflection_range[1]
        peak = 0.0
        for sign, sens in ((1, self.profile.up_sensitivity), (-1, self.profile.down_sensitivity)):
            strength = abs(gust_lift_map(sign * hi, self.cfg)) / self.cfg.max_anchor_lift
            peak = max(peak, sens[0] * strength)
        return TARGET_PEAK_SIGNAL / (self.dynamic_pressure * PRESSURE_CP_GAIN * peak)


@dataclass(frozen=True)
class PlantState:
    schedule: GustSchedule
    step: int
    time: float
    generator_deflection: float
    wake_deflection_at_wing: float
    delay_line: tuple[float, ...]  # generator values still in transit, oldest first
    actuator: ActuatorState
    lift: float
    baseline_pressures: tuple[float, ...]


def transport_wake(state: PlantState, model: PlantModel, new_generator: float) -> PlantState:
    """Advance the delay line one step with the generator's new deflection."""
    wake = state.delay_line[0]
    line = state.delay_line[1:] + (float(new_generator),)
    return replace(state, generator_deflection=float(new_generator),
                   wake_deflection_at_wing=wake, delay_line=line)


def raw_tap_pressures(wake_deflection: float, camber: float, model: PlantModel) -> np.ndarray:
    """Pascal-equivalent tap pressures, noise free."""
    q = model.dynamic_pressure
    strength = gust_lift_map(wake_deflection, model.cfg) / model.cfg.max_anchor_lift
    sens = model.profile.down_sensitivity if wake_deflection < 0 else model.profile.up_sensitivity
    gust = q * PRESSURE_CP_GAIN * np.asarray(sens) * strength
    coupling = np.asarray(model.profile.camber_coupling) * camber / model.pressure_scale
    return model.static_pressures + gust + coupling


def tap_signals(state: PlantState, model: PlantModel, rng: np.random.Generator | None) -> np.ndarray:
    """Six normalized tap signals relative to the captured baseline."""
    raw = raw_tap_pressures(state.wake_deflection_at_wing, state.actuator.effective_camber, model)
    delta = raw - np.asarray(state.baseline_pressures)
    if rng is not None:
        noise = rng.standard_normal(6) * model.profile.noise_sigma
        delta = delta + noise / model.pressure_scale
    return normalize_pressure(delta, model.pressure_scale)


def reset(model: PlantModel, schedule: GustSchedule, rng: np.random.Generator | None = None) -> PlantState:
    """Neutral actuator, delay line flushed to the schedule's first deflection.

    Baseline pressures are captured in neutral flow with the trailing edge undeflected.
    """
    first = schedule.deflection_at(0, model.dt)
    baseline = tuple(float(p) for p in raw_tap_pressures(0.0, 0.0, model))
    lift = model.cfg.baseline_lift + gust_lift_map(first, model.cfg)
    return PlantState(schedule=schedule, step=0, time=0.0, generator_deflection=first,
                      wake_deflection_at_wing=first, delay_line=(first,) * model.delay_steps, actuator=ActuatorState(),
                      lift=lift, baseline_pressures=baseline)


def observation_vector(signals: np.ndarray, state: PlantState, model: PlantModel) -> np.ndarray:
    taps = signals[list(model.layout.active_taps)]
    return np.append(taps, normalize_mfc(state.actuator.commanded_signal))


def plant_step(state: PlantState, action_index: int, model: PlantModel,
               rng: np.random.Generator | None = None, frozen_actuator: bool = False):
    """Apply one action and advance the plant by one timestep.

    Returns ``(observation vector, lift, new_state, tap signals)``. With ``rng`` set
    to None the sensors are noise free.
    """
    cfg = model.cfg
    if not 0 <= action_index < cfg.n_actions:
        raise IndexError(f"action index {action_index} outside [0, {cfg.n_actions})")
    act = state.actuator
    if not frozen_actuator:
        act = apply_action(act, cfg.action_deltas[action_index], cfg.action_deltas)
        act = step_dynamics(act, model.actuator, model.dt)
    state = replace(state, actuator=act)
    state = transport_wake(state, model, state.schedule.deflection_at(state.step, model.dt))

    signals = tap_signals(state, model, rng)
    lift = (cfg.baseline_lift + gust_lift_map(state.wake_deflection_at_wing, cfg)
            + lift_from_camber(act.effective_camber, model.actuator))
    if rng is not None:
        lift += rng.standard_normal() * model.profile.lift_noise_sigma
    if not math.isfinite(lift):
        raise FloatingPointError(f"non-finite lift at step {state.step}")
    state = replace(state, step=state.step + 1, time=(state.step + 1) * model.dt, lift=lift)
    return observation_vector(signals, state, model), lift, state, signals


def neutral_action(cfg: FlightConditionConfig) -> int:
    return cfg.action_deltas.index(0.0)


class GustEnv:
    """Step/reset wrapper that maintains the observation window."""

    def __init__(self, model: PlantModel, rng: np.random.Generator | None):
        self.model = model
        self.rng = rng
        self.window = ObservationWindow(model.layout.channels)
        self.state: PlantState | None = None

    def reset(self, schedule: GustSchedule) -> np.ndarray:
        self.state = reset(self.model, schedule, self.rng)
        self.window.reset()
        return self.window.network_input()

    def step(self, action_index: int, frozen_actuator: bool = False):
        vec, lift, self.state, _ = plant_step(self.state, action_index, self.model, self.rng,
                                               frozen_actuator=frozen_actuator)
        self.window.push(vec)
        return self.window.network_input(), lift
