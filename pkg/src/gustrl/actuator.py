"""Camber-morphing trailing edge: command integration, backlash hysteresis, creep, lag."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

CREEP_SATURATION = 0.1  # 5% of the [-1, 1] signal range
AUTHORITY_MARGIN = 1.2


@dataclass(frozen=True)
class ActuatorParams:
    play_width: float = 0.1
    lag_time_constant: float = 0.1  # s
    creep_rate: float = 0.01        # signal units / s
    camber_lift_gain: float = 0.204  # N per unit camber

    def __post_init__(self):
        if not 0 <= self.play_width < 0.5:
            raise ValueError("play_width must lie in [0, 0.5)")
        if not self.lag_time_constant > 0:
            raise ValueError("lag_time_constant must be positive")
        if self.creep_rate < 0:
            raise ValueError("creep_rate must be nonnegative")
        if self.camber_lift_gain < 0:
            raise ValueError("camber_lift_gain must be nonnegative")


def calibrated_gain(max_anchor_lift: float, margin: float = AUTHORITY_MARGIN) -> float:
    """Smallest camber gain giving full authority over the largest tabulated gust."""
    return margin * max_anchor_lift


def params_for(cfg, **overrides) -> ActuatorParams:
    gain = overrides.pop("camber_lift_gain", None)
    if gain is None:
        gain = calibrated_gain(cfg.max_anchor_lift)
    return ActuatorParams(camber_lift_gain=gain, **overrides)


@dataclass(frozen=True)
class ActuatorState:
    commanded_signal: float = 0.0
    play_memory: float = 0.0
    effective_camber: float = 0.0
    creep_accumulator: float = 0.0


def apply_action(state: ActuatorState, delta_v: float, action_deltas=None) -> ActuatorState:
    """Add a signal increment to the command, clamped to [-1, 1]."""
    if action_deltas is not None and not any(math.isclose(delta_v, a, abs_tol=1e-12)
                                             for a in action_deltas):
        raise ValueError(f"delta_v {delta_v} is not in the action set {tuple(action_deltas)}")
    cmd = min(1.0, max(-1.0, state.commanded_signal + delta_v))
    return replace(state, commanded_signal=cmd)


def play_operator(memory: float, command: float, width: float) -> float:
    return min(command + width, max(command - width, memory))


def step_dynamics(state: ActuatorState, params: ActuatorParams, dt: float) -> ActuatorState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    memory = play_operator(state.play_memory, state.commanded_signal, params.play_width)

    # creep relaxes toward a bounded offset in the direction of the held deflection
    target = CREEP_SATURATION * float(np.sign(memory))
    step = params.creep_rate * dt
    creep = state.creep_accumulator
    creep = min(target, creep + step) if creep < target else max(target, creep - step)

    # zero-order-hold discretization of the first-order lag
    alpha = -math.expm1(-dt / params.lag_time_constant)
    camber = state.effective_camber + alpha * (memory + creep - state.effective_camber)
    camber = min(1.0, max(-1.0, camber))
    return ActuatorState(state.commanded_signal, memory, camber, creep)


def lift_from_camber(camber: float, params: ActuatorParams) -> float:
    if abs(camber) > 1.0 + 1e-12:
        raise ValueError(f"camber {camber} outside [-1, 1]")
    return params.camber_lift_gain * camber
