from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gustrl.domain import (Condition, ObservationWindow, SensorLayout, builtin_flight_condition,
                           normalize_mfc, normalize_pressure)


@pytest.mark.parametrize("cond", list(Condition))
def test_table_invariants(cond):
    cfg = builtin_flight_condition(cond)
    assert len(cfg.testing_deflections) == 6
    assert sum(cfg.action_deltas) == pytest.approx(0.0)
    assert 0.0 in cfg.action_deltas
    defl = [d for d, _ in cfg.delta_lift_anchors]
    assert defl == sorted(defl) == sorted(cfg.testing_deflections)
    for d, dl in cfg.delta_lift_anchors:
        assert np.sign(d) == np.sign(dl)
    lo, hi = cfg.training_deflection_range
    assert max(abs(d) for d in cfg.testing_deflections) <= hi
    assert cfg.timestep == 0.05 and cfg.episode_steps == 200


def test_high_lift_row():
    cfg = builtin_flight_condition("high-lift")
    assert (cfg.baseline_lift, cfg.flow_speed, cfg.alpha, cfg.gust_duration) == (3.5, 10.0, 10.0, 10.0)
    assert cfg.action_deltas == (-0.6, -0.2, -0.1, 0.0, 0.1, 0.2, 0.6)
    assert cfg.delta_lift_anchors == ((-12.5, -0.17), (-10.0, -0.15), (-7.5, -0.08),
                                      (7.5, 0.09), (10.0, 0.10), (12.5, 0.14))
    assert cfg.training_deflection_range == (3.5, 13.5)


def test_med_and_low_rows():
    med = builtin_flight_condition("med-lift")
    assert med.action_deltas == (-0.25, 0.0, 0.25)
    assert (med.baseline_lift, med.flow_speed, med.gust_duration) == (2.5, 15.0, 5.0)
    assert dict(med.delta_lift_anchors)[6.0] == 0.51
    low = builtin_flight_condition("low-lift")
    assert dict(low.delta_lift_anchors)[-8.0] == -0.35
    assert low.training_deflection_range == (1.0, 9.0)


def test_builtin_is_pure():
    assert builtin_flight_condition("high-lift") == builtin_flight_condition(Condition.HIGH_LIFT)


def test_invalid_condition_rejected():
    cfg = builtin_flight_condition("high-lift")
    with pytest.raises(ValueError, match="symmetric"):
        replace(cfg, action_deltas=(0.0, 0.1, 0.3, -0.1))
    with pytest.raises(ValueError):
        replace(cfg, delta_lift_anchors=((-12.5, 0.17),) + cfg.delta_lift_anchors[1:])
    with pytest.raises(ValueError):
        Condition.parse("stall")


def test_sensor_layout():
    assert SensorLayout(1).active_taps == (0,)
    assert SensorLayout(3).active_taps == (0, 1, 2)
    assert SensorLayout(6).channels == 7
    with pytest.raises(ValueError):
        SensorLayout(2)


def test_normalize_pressure_examples():
    assert normalize_pressure(0.0, 3.7) == 0.0
    assert normalize_pressure(1e9, 1.0) == 2.5
    assert normalize_pressure(1.0, 0.5) == 0.5
    with pytest.raises(ValueError):
        normalize_pressure(float("nan"), 1.0)
    with pytest.raises(ValueError):
        normalize_pressure(1.0, 0.0)


def test_normalize_mfc_examples():
    assert normalize_mfc(0.0) == 0.0
    assert normalize_mfc(1.1) == 1.0
    assert normalize_mfc(-0.25) == -0.25
    with pytest.raises(ValueError):
        normalize_mfc(float("inf"))


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
def test_normalize_pressure_bounded(raw, scale):
    assert -2.5 <= normalize_pressure(raw, scale) <= 2.5


def test_window_fifo():
    w = ObservationWindow(channels=2)
    assert np.array_equal(w.array(), np.zeros((10, 2)))
    for i in range(11):
        w.push([i * 0.1, 0.0])
    arr = w.array()
    assert arr.shape == (10, 2)
    assert arr[0, 0] == pytest.approx(0.1)  # first push evicted
    assert arr[-1, 0] == pytest.approx(1.0)
    assert w.network_input().shape == (2, 10)


def test_window_clamps():
    w = ObservationWindow(channels=4)
    w.push([9.0, -9.0, 1.0, 3.0])
    assert w.array()[-1].tolist() == [2.5, -2.5, 1.0, 1.0]
