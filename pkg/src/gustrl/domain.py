"""Flight conditions, sensor layout, signal normalization and the observation window.

All lift values are newtons, deflections degrees, times seconds. Signals fed to the
networks are dimensionless after normalization.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

PRESSURE_LIMIT = 2.5
MFC_LIMIT = 1.0
WINDOW_LENGTH = 10
MAX_GUST_DEFLECTION = 13.5  # deg, largest deflection the gust generator is driven to

TAP_POSITIONS = (0.0, 0.015, 0.05, 0.10, 0.40, 0.50)  # fraction of chord
TAP_COUNTS = (1, 3, 6)


class Condition(str, enum.Enum):
    HIGH_LIFT = "high-lift"
    MED_LIFT = "med-lift"
    LOW_LIFT = "low-lift"

    @classmethod
    def parse(cls, value: "str | Condition") -> "Condition":
        if isinstance(value, Condition):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"high": "high-lift", "highlift": "high-lift", "medium-lift": "med-lift",
                   "med": "med-lift", "medlift": "med-lift", "medium": "med-lift",
                   "low": "low-lift", "lowlift": "low-lift"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown flight condition {value!r}; "
                             f"expected one of {[c.value for c in cls]}") from None


@dataclass(frozen=True)
class FlightConditionConfig:
    name: Condition
    baseline_lift: float                            # N
    flow_speed: float                               # m/s
    alpha: float                                    # deg
    training_deflection_range: tuple[float, float]  # (min, max) magnitude, deg, both signs
    testing_deflections: tuple[float, ...]          # signed, deg
    delta_lift_anchors: tuple[tuple[float, float], ...]  # (deflection deg, delta lift N)
    gust_duration: float                            # s
    action_deltas: tuple[float, ...]                # MFC signal increments
    timestep: float = 0.05
    episode_steps: int = 200

    def __post_init__(self):
        errors = validate_flight_condition(self)
        if errors:
            raise ValueError("invalid flight condition: " + "; ".join(errors))

    @property
    def max_anchor_lift(self) -> float:
        return max(abs(dl) for _, dl in self.delta_lift_anchors)

    @property
    def n_actions(self) -> int:
        return len(self.action_deltas)

    @property
    def gust_steps(self) -> int:
        return int(round(self.gust_duration / self.timestep))


def validate_flight_condition(cfg: FlightConditionConfig) -> list[str]:
    errors = []
    lo, hi = cfg.training_deflection_range
    if not 0 <= lo <= hi <= MAX_GUST_DEFLECTION:
        errors.append(f"training range {cfg.training_deflection_range} must satisfy "
                      f"0 <= min <= max <= {MAX_GUST_DEFLECTION}")
    if len(cfg.testing_deflections) != 6:
        errors.append("testing_deflections must hold three magnitudes in two directions")
    if sorted(cfg.testing_deflections) != sorted(-d for d in cfg.testing_deflections):
        errors.append("testing_deflections must be symmetric about zero")
    if cfg.testing_deflections and max(abs(d) for d in cfg.testing_deflections) > hi:
        errors.append("testing deflections exceed the training range")
    defl = [d for d, _ in cfg.delta_lift_anchors]
    if any(b <= a for a, b in zip(defl, defl[1:])):
        errors.append("delta_lift_anchors must be strictly increasing in deflection")
    for d, dl in cfg.delta_lift_anchors:
        if d == 0 or np.sign(d) != np.sign(dl):
            errors.append(f"anchor ({d}, {dl}) must have matching nonzero signs")
    lifts = [dl for _, dl in cfg.delta_lift_anchors]
    if any(b < a for a, b in zip(lifts, lifts[1:])):
        errors.append("delta_lift_anchors must be monotone in lift")
    acts = sorted(cfg.action_deltas)
    if 0.0 not in acts or not np.allclose(acts, sorted(-a for a in acts)):
        errors.append("action_deltas must be symmetric about 0 and contain 0")
    if len(set(acts)) != len(acts):
        errors.append("action_deltas must be distinct")
    if cfg.timestep <= 0 or cfg.episode_steps <= 0 or cfg.gust_duration <= 0:
        errors.append("timestep, episode_steps and gust_duration must be positive")
    if cfg.flow_speed <= 0:
        errors.append("flow_speed must be positive")
    return errors


def _pair_anchors(deflections, lifts):
    # anchors are paired with deflections in ascending signed order
    return tuple(zip(sorted(deflections), sorted(lifts)))


def _symmetric(mags):
    return tuple(sorted({-m for m in mags} | set(mags)))


_TABLE = {
    Condition.HIGH_LIFT: dict(
        baseline_lift=3.5, flow_speed=10.0, alpha=10.0,
        training_deflection_range=(3.5, 13.5),
        testing_deflections=_symmetric((7.5, 10.0, 12.5)),
        lifts=(-0.17, -0.15, -0.08, 0.09, 0.10, 0.14),
        gust_duration=10.0,
        action_deltas=_symmetric((0.0, 0.1, 0.2, 0.6)),
    ),
    Condition.MED_LIFT: dict(
        baseline_lift=2.5, flow_speed=15.0, alpha=4.0,
        training_deflection_range=(0.5, 7.5),
        testing_deflections=_symmetric((3.0, 4.5, 6.0)),
        lifts=(-0.61, -0.43, -0.26, 0.21, 0.36, 0.51),
        gust_duration=5.0,
        action_deltas=_symmetric((0.0, 0.25)),
    ),
    Condition.LOW_LIFT: dict(
        baseline_lift=1.2, flow_speed=10.0, alpha=4.0,
        training_deflection_range=(1.0, 9.0),
        testing_deflections=_symmetric((4.0, 6.0, 8.0)),
        lifts=(-0.35, -0.24, -0.14, 0.13, 0.22, 0.28),
        gust_duration=5.0,
        action_deltas=_symmetric((0.0, 0.25)),
    ),
}


def builtin_flight_condition(name: "str | Condition") -> FlightConditionConfig:
    """Return the tabulated operating point for ``name``."""
    cond = Condition.parse(name)
    row = dict(_TABLE[cond])
    lifts = row.pop("lifts")
    return FlightConditionConfig(
        name=cond,
        delta_lift_anchors=_pair_anchors(row["testing_deflections"], lifts),
        **row,
    )


@dataclass(frozen=True)
class SensorLayout:
    """Chordwise tap positions plus the active prefix used for observation."""

    tap_count: int = 6
    tap_positions: tuple[float, ...] = TAP_POSITIONS

    def __post_init__(self):
        if self.tap_count not in TAP_COUNTS:
            raise ValueError(f"tap count must be one of {TAP_COUNTS}, got {self.tap_count}")
        pos = self.tap_positions
        if any(b <= a for a, b in zip(pos, pos[1:])) or pos[0] < 0 or pos[-1] >= 1:
            raise ValueError("tap positions must be strictly increasing in [0, 1)")

    @property
    def active_taps(self) -> tuple[int, ...]:
        return tuple(range(self.tap_count))

    @property
    def channels(self) -> int:
        return self.tap_count + 1


def _check_finite(x, what):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite {what}: {x!r}")
    return arr


def normalize_pressure(raw, scale: float):
    """Scale a raw tap pressure into signal units and clamp to +-2.5."""
    if not scale > 0:
        raise ValueError(f"pressure scale must be positive, got {scale}")
    arr = _check_finite(raw, "pressure")
    out = np.clip(arr * scale, -PRESSURE_LIMIT, PRESSURE_LIMIT)
    return float(out) if out.ndim == 0 else out


def normalize_mfc(signal):
    arr = _check_finite(signal, "MFC signal")
    out = np.clip(arr, -MFC_LIMIT, MFC_LIMIT)
    return float(out) if out.ndim == 0 else out


@dataclass
class ObservationWindow:
    """FIFO of the ten most recent per-step vectors, oldest first.

    Each vector is (normalized pressure per active tap..., normalized MFC signal).
    """

    channels: int
    length: int = WINDOW_LENGTH
    _buf: deque = field(init=False, repr=False)

    def __post_init__(self):
        self.reset()

    def reset(self, baseline=None):
        fill = np.zeros(self.channels) if baseline is None else np.asarray(baseline, float)
        if fill.shape != (self.channels,):
            raise ValueError(f"baseline must have {self.channels} entries")
        self._buf = deque((fill.copy() for _ in range(self.length)), maxlen=self.length)

    def push(self, vector) -> None:
        v = np.asarray(vector, dtype=float)
        if v.shape != (self.channels,):
            raise ValueError(f"expected vector of length {self.channels}, got shape {v.shape}")
        v = v.copy()
        v[:-1] = np.clip(v[:-1], -PRESSURE_LIMIT, PRESSURE_LIMIT)
        v[-1] = np.clip(v[-1], -MFC_LIMIT, MFC_LIMIT)
        self._buf.append(v)

    def array(self) -> np.ndarray:
        """Window as a (length, channels) array."""
        return np.stack(self._buf)

    def network_input(self) -> np.ndarray:
        """Window laid out channels-first, as the convolution expects."""
        return self.array().T.copy()


def dynamic_pressure(flow_speed: float, density: float = 1.225) -> float:
    return 0.5 * density * flow_speed ** 2
