import numpy as np
import pytest
from hypothesis import given, strategies as st

from gustrl.actuator import params_for
from gustrl.domain import Condition, SensorLayout, builtin_flight_condition
from gustrl.plant import (GustEnv, GustSchedule, PlantModel, ScheduleKind, TapSensitivityProfile,
                          gust_lift_map, neutral_action, plant_step, reset, tap_signals,
                          transport_delay_steps)

HIGH = builtin_flight_condition("high-lift")


def model(cond="high-lift", taps=6, **profile):
    cfg = builtin_flight_condition(cond)
    return PlantModel(cfg, params_for(cfg), TapSensitivityProfile(**profile), SensorLayout(taps))


def test_gust_lift_map_examples():
    assert gust_lift_map(0.0, HIGH) == 0.0
    assert gust_lift_map(7.5, HIGH) == 0.09
    assert gust_lift_map(11.25, HIGH) == pytest.approx(0.12, abs=1e-15)
    # extrapolation continues the outer segment's slope
    assert gust_lift_map(13.5, HIGH) == pytest.approx(0.14 + 0.016, abs=1e-15)
    assert gust_lift_map(-13.5, HIGH) == pytest.approx(-0.17 - 0.008, abs=1e-15)
    with pytest.raises(ValueError):
        gust_lift_map(14.0, HIGH)


@pytest.mark.parametrize("cond", list(Condition))
def test_gust_lift_map_hits_anchors(cond):
    cfg = builtin_flight_condition(cond)
    for d, dl in cfg.delta_lift_anchors:
        assert gust_lift_map(d, cfg) == dl


@given(st.floats(-13.5, 13.5), st.floats(-13.5, 13.5))
def test_gust_lift_map_monotone(a, b):
    lo, hi = sorted((a, b))
    assert gust_lift_map(lo, HIGH) <= gust_lift_map(hi, HIGH)


def test_gust_lift_map_keeps_asymmetry():
    assert gust_lift_map(-12.5, HIGH) != -gust_lift_map(12.5, HIGH)


def test_transport_delay():
    assert transport_delay_steps(10.0, 0.05) == 1
    assert transport_delay_steps(15.0, 0.05) == 1
    assert transport_delay_steps(1.0, 0.05) == 6


def test_wake_follows_generator_after_delay():
    m = model()
    sched = GustSchedule.test_quarters(10.0, HIGH)
    s = reset(m, sched)
    wakes = []
    for _ in range(sched.total_steps(m.dt)):
        _, _, s, _ = plant_step(s, neutral_action(HIGH), m, None)
        wakes.append(s.wake_deflection_at_wing)
    assert wakes[100] == 0.0 and wakes[101] == 10.0 and wakes[300] == 10.0 and wakes[301] == 0.0


def test_schedules():
    t = GustSchedule.test_quarters(-7.5, HIGH)
    assert t.segments == ((0.0, 5.0), (-7.5, 10.0), (0.0, 5.0))
    assert t.step_counts(0.05) == [100, 200, 100]
    assert t.gust_window(0.05) == (100, 300)
    h = GustSchedule.training_hold(4.0, HIGH)
    assert h.kind is ScheduleKind.TRAINING_HOLD and h.total_steps(0.05) == 200
    with pytest.raises(ValueError):
        GustSchedule(((0.0, 1.0),), ScheduleKind.TEST_QUARTERS)
    with pytest.raises(ValueError):
        GustSchedule.training_hold(14.0, HIGH)


def test_reset_test_schedule_starts_neutral():
    m = model()
    s = reset(m, GustSchedule.test_quarters(12.5, HIGH))
    assert s.generator_deflection == 0.0 and s.wake_deflection_at_wing == 0.0
    assert s.actuator.effective_camber == 0.0 and s.time == 0.0


def test_neutral_observation_is_zero():
    m = model(noise_sigma=0.0, lift_noise_sigma=0.0)
    env = GustEnv(m, None)
    obs = env.reset(GustSchedule.training_hold(0.0, HIGH))
    assert np.array_equal(obs, np.zeros((7, 10)))
    for _ in range(50):
        obs, lift = env.step(neutral_action(HIGH))
        assert lift == 3.5
    assert np.array_equal(obs, np.zeros((7, 10)))


def _signals(m, deflection):
    s = reset(m, GustSchedule.training_hold(deflection, m.cfg))
    return tap_signals(s, m, None)


def test_downward_tap3_sensitivity_ratio():
    m = model()
    # equal-magnitude strengths: compare per unit of normalized gust strength
    up = _signals(m, 12.5) / gust_lift_map(12.5, HIGH)
    down = _signals(m, -12.5) / gust_lift_map(-12.5, HIGH)
    assert abs(down[2]) / abs(up[2]) == pytest.approx(0.167, abs=1e-6)
    assert abs(down[1]) / abs(up[1]) == pytest.approx(0.73, abs=1e-6)


@pytest.mark.parametrize("deflection", [-13.5, -10.0, -3.5, 3.5, 7.5, 13.5])
def test_signal_magnitude_decreases_chordwise(deflection):
    sig = np.abs(_signals(model(), deflection))
    assert np.all(np.diff(sig) <= 0)


def test_strongest_training_gust_reads_two():
    for cond in Condition:
        m = model(cond)
        hi = m.cfg.training_deflection_range[1]
        peak = max(abs(_signals(m, hi)[0]), abs(_signals(m, -hi)[0]))
        assert peak == pytest.approx(2.0)


def test_frozen_actuator_reproduces_anchor():
    m = model()
    s = reset(m, GustSchedule.training_hold(12.5, HIGH))
    for _ in range(20):
        _, lift, s, _ = plant_step(s, 6, m, None, frozen_actuator=True)
    assert lift == pytest.approx(3.5 + 0.14, abs=1e-12)


def test_step_determinism():
    m = model()
    s = reset(m, GustSchedule.training_hold(-9.0, HIGH))
    a = plant_step(s, 2, m, np.random.default_rng(5))
    b = plant_step(s, 2, m, np.random.default_rng(5))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1] and a[2] == b[2]


def test_lift_bounded_noise_off():
    m = model(noise_sigma=0.0, lift_noise_sigma=0.0)
    rng = np.random.default_rng(0)
    s = reset(m, GustSchedule.test_quarters(-12.5, HIGH))
    bound = 0.178 + m.actuator.camber_lift_gain + 1e-12
    for _ in range(420):
        _, lift, s, _ = plant_step(s, int(rng.integers(7)), m, None)
        assert abs(lift - 3.5) <= bound


def test_observation_channels_follow_tap_count():
    for taps, ch in ((1, 2), (3, 4), (6, 7)):
        m = model(taps=taps)
        s = reset(m, GustSchedule.training_hold(5.0, HIGH))
        vec, *_ = plant_step(s, 3, m, np.random.default_rng(0))
        assert vec.shape == (ch,)


def test_bad_action_index():
    m = model()
    s = reset(m, GustSchedule.training_hold(0.0, HIGH))
    with pytest.raises(IndexError):
        plant_step(s, 7, m, None)
