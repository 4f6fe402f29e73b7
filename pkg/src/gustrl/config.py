"""Run configuration: typed sections, YAML loading, presets and the seed tree.

Resolution order is built-in defaults < preset < config file < ``--set`` overrides.
Unknown keys and ill-typed values are collected and reported together.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from .actuator import params_for
from .domain import TAP_COUNTS, Condition, SensorLayout, builtin_flight_condition
from .plant import PlantModel, TapSensitivityProfile
from .ppo import PpoHyperparams


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class TrainingSection:
    episodes: int = 200
    filters: int = 16
    hidden: list[int] = field(default_factory=lambda: [512, 512])


@dataclass
class PpoSection:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    horizon: int = 200
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    learning_rate: float = 3e-5


@dataclass
class PlantSection:
    noise_sigma: float = 0.05
    lift_noise_sigma: float = 0.002
    play_width: float = 0.1
    lag_time_constant: float = 0.1
    creep_rate: float = 0.01
    camber_lift_gain: float | None = None  # None: calibrated from the condition's largest gust


@dataclass
class CampaignSection:
    conditions: list[str] = field(default_factory=lambda: ["high-lift"])
    controllers: dict[str, int] = field(default_factory=lambda: {"high-lift": 2, "med-lift": 2, "low-lift": 2})
    repetitions: int = 3
    tap_counts: list[int] = field(default_factory=lambda: [1, 3, 6])
    resamples: int = 10000
    workers: int = 1


@dataclass
class RunConfig:
    condition: str = "high-lift"
    taps: int = 6
    seed: int = 0
    training: TrainingSection = field(default_factory=TrainingSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    plant: PlantSection = field(default_factory=PlantSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self)

    def hyperparams(self) -> PpoHyperparams:
        return PpoHyperparams(**asdict(self.ppo))

    def condition_list(self) -> list[str]:
        return [Condition.parse(c).value for c in self.campaign.conditions]

    def controllers_for(self, condition: str) -> int:
        return int(self.campaign.controllers[Condition.parse(condition).value])


PRESETS: dict[str, dict] = {
    # minutes on one CPU: HighLift only, 2 controllers x 6 gusts x 3 reps x 3 tap configs = 108 tests
    "desk": {
        "training": {"episodes": 200},
        "campaign": {"conditions": ["high-lift"], "controllers": {"high-lift": 2, "med-lift": 2, "low-lift": 2},
                     "repetitions": 3, "tap_counts": [1, 3, 6]},
    },
    # full matrix: (10 + 5 + 5) controllers x 6 gusts x 10 reps x 3 tap configs = 3600 tests
    "paper": {
        "training": {"episodes": 1000},
        "campaign": {"conditions": ["high-lift", "med-lift", "low-lift"],
                     "controllers": {"high-lift": 10, "med-lift": 5, "low-lift": 5},
                     "repetitions": 10, "tap_counts": [1, 3, 6]},
    },
}


def _expected_type(f) -> str:
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    return t.replace(" ", "")


def _check_value(path: str, kind: str, value, errors: list[str]):
    """Coerce ``value`` to ``kind`` (a type annotation string) or record an error."""
    def bad(what):
        errors.append(f"{path}: expected {what}, got {value!r}")
        return None

    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return bad("an integer")
        return value
    if kind in ("float", "float|None"):
        if value is None and kind == "float|None":
            return None
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms such as 1e-4 as strings
            try:
                value = float(value)
            except ValueError:
                return bad("a number")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return bad("a number")
        return float(value)
    if kind == "str":
        return value if isinstance(value, str) else bad("a string")
    if kind == "list[int]":
        if not isinstance(value, (list, tuple)) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            return bad("a list of integers")
        return list(value)
    if kind == "list[str]":
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)) or any(not isinstance(v, str) for v in value):
            return bad("a list of strings")
        return list(value)
    if kind == "dict[str,int]":
        if not isinstance(value, dict) or any(isinstance(v, bool) or not isinstance(v, int) for v in value.values()):
            return bad("a mapping of names to integers")
        return {str(k): v for k, v in value.items()}
    raise TypeError(f"unsupported config field type {kind}")


def _build(cls, data, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
        return cls()
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            errors.append(f"{path}{key}: unknown key")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        sub = f.default_factory() if f.default_factory is not MISSING else None
        if is_dataclass(sub):
            kwargs[name] = _build(type(sub), data[name], f"{path}{name}.", errors)
        else:
            value = _check_value(f"{path}{name}", _expected_type(f), data[name], errors)
            if value is not None or data[name] is None:
                kwargs[name] = value
    return cls(**kwargs)


def validate(cfg: RunConfig) -> list[str]:
    errors = []
    try:
        Condition.parse(cfg.condition)
    except ValueError as exc:
        errors.append(f"condition: {exc}")
    if cfg.taps not in TAP_COUNTS:
        errors.append(f"taps: must be one of {list(TAP_COUNTS)}, got {cfg.taps}")
    if cfg.seed < 0:
        errors.append("seed: must be nonnegative")
    t = cfg.training
    if t.episodes < 0:
        errors.append("training.episodes: must be nonnegative")
    if t.filters < 1:
        errors.append("training.filters: must be positive")
    if len(t.hidden) != 2 or any(h < 1 for h in t.hidden):
        errors.append("training.hidden: need exactly two positive layer widths")
    try:
        cfg.hyperparams()
    except ValueError as exc:
        errors.append(f"ppo: {exc}")
    if cfg.ppo.horizon != 200:
        errors.append("ppo.horizon: must equal the 200-step episode length")
    p = cfg.plant
    for name in ("noise_sigma", "lift_noise_sigma", "creep_rate"):
        if getattr(p, name) < 0:
            errors.append(f"plant.{name}: must be nonnegative")
    for name in ("play_width", "lag_time_constant"):
        if getattr(p, name) <= 0:
            errors.append(f"plant.{name}: must be positive")
    if p.camber_lift_gain is not None and p.camber_lift_gain < 0:
        errors.append("plant.camber_lift_gain: must be nonnegative")
    c = cfg.campaign
    for cond in c.conditions:
        try:
            value = Condition.parse(cond).value
        except ValueError as exc:
            errors.append(f"campaign.conditions: {exc}")
            continue
        if c.controllers.get(value, 0) < 1:
            errors.append(f"campaign.controllers: need a positive count for {value}")
    for name in c.controllers:
        try:
            Condition.parse(name)
        except ValueError as exc:
            errors.append(f"campaign.controllers: {exc}")
    if not c.conditions:
        errors.append("campaign.conditions: at least one condition required")
    if c.repetitions < 1:
        errors.append("campaign.repetitions: must be positive")
    if not c.tap_counts or any(t not in TAP_COUNTS for t in c.tap_counts) or len(set(c.tap_counts)) != len(c.tap_counts):
        errors.append(f"campaign.tap_counts: distinct values from {list(TAP_COUNTS)} required")
    if c.resamples < 1:
        errors.append("campaign.resamples: must be positive")
    if c.workers < 1:
        errors.append("campaign.workers: must be positive")
    return errors


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "controllers":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> dict:
    """``a.b=value`` -> ``{"a": {"b": value}}`` with the value parsed as YAML."""
    if "=" not in text:
        raise ConfigError([f"override {text!r}: expected key=value"])
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError([f"override {text!r}: empty key"])
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError([f"override {text!r}: {exc}"]) from None
    out: dict = value
    for p in reversed(parts):
        out = {p: out}
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    if path.suffix == ".json":
        data = json.loads(text)
        # run manifests embed the resolved configuration
        return data.get("config", data)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def resolve(preset: str | None = None, path=None, overrides: dict | None = None,
            sets: list[str] = ()) -> RunConfig:
    data: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}"])
        data = _merge(data, PRESETS[preset])
    if path is not None:
        data = _merge(data, read_config_file(path))
    if overrides:
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    for s in sets:
        data = _merge(data, parse_override(s))
    return from_dict(data)


def from_dict(data: dict) -> RunConfig:
    errors: list[str] = []
    cfg = _build(RunConfig, data, "", errors)
    errors += validate(cfg)  # fields that failed to parse keep their defaults here
    if errors:
        raise ConfigError(errors)
    cfg.condition = Condition.parse(cfg.condition).value
    cfg.campaign.conditions = cfg.condition_list()
    cfg.campaign.controllers = {Condition.parse(k).value: v for k, v in cfg.campaign.controllers.items()}
    return cfg


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_model(cfg: RunConfig, condition: str | None = None, taps: int | None = None) -> PlantModel:
    flight = builtin_flight_condition(condition or cfg.condition)
    p = cfg.plant
    actuator = params_for(flight, play_width=p.play_width, lag_time_constant=p.lag_time_constant,
                          creep_rate=p.creep_rate, camber_lift_gain=p.camber_lift_gain)
    profile = TapSensitivityProfile(noise_sigma=p.noise_sigma, lift_noise_sigma=p.lift_noise_sigma)
    return PlantModel(flight, actuator, profile, SensorLayout(taps or cfg.taps))


# seed tree: every stream is addressed by its position in the experiment, never by enumeration order

_CONDITION_INDEX = {c.value: i for i, c in enumerate(Condition)}


def derived_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(int(p) for p in path)).generate_state(1)[0])


def controller_seed(master: int, condition: str, taps: int, index: int) -> int:
    return derived_seed(master, 0, _CONDITION_INDEX[Condition.parse(condition).value], taps, index)


def gust_test_seed(master: int, condition: str, taps: int, index: int, deflection_index: int, repetition: int) -> int:
    return derived_seed(master, 1, _CONDITION_INDEX[Condition.parse(condition).value], taps, index,
                        deflection_index, repetition)


def bootstrap_seed(master: int) -> int:
    return derived_seed(master, 2)
