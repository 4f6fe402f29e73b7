import warnings
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gustrl.metrics import (DegenerateGustError, GrpTrace, compare_tap_configs, consistency_deviation,
                            consistency_stds, grp_from_deltas, grp_timeseries, rise_time, settled_grp,
                            summarize)

DT = 0.05


@dataclass
class Rec:
    controller_id: str
    deflection: float
    settled_grp: float
    tap_count: int = 6
    condition: str = "high-lift"
    rise_time: float | None = 0.5
    repetition: int = 0


def test_perfect_rejection():
    tr = grp_from_deltas(np.zeros(20), np.full(20, 0.1), DT)
    assert np.array_equal(tr.grp, np.full(20, 100.0))


def test_unactuated_is_zero():
    tr = grp_from_deltas(np.full(20, 0.09), np.full(20, 0.09), DT)
    assert np.allclose(tr.grp, 0.0, atol=1e-12)


def test_overcompensation_is_negative():
    tr = grp_from_deltas(np.full(20, -0.2), np.full(20, 0.1), DT)
    assert np.allclose(tr.grp, -100.0, rtol=1e-12)


def test_denominator_is_mean_of_baseline():
    base = np.linspace(0.0, 0.2, 21)  # mean 0.1
    tr = grp_from_deltas(np.full(21, 0.05), base, DT)
    assert np.allclose(tr.grp, 50.0, rtol=1e-12)
    assert tr.baseline_delta == pytest.approx(0.1)


def test_degenerate_gust():
    with pytest.raises(DegenerateGustError):
        grp_from_deltas(np.zeros(5), np.full(5, 1e-8), DT)


def test_grp_timeseries_slices_segment():
    L_B = 3.5
    controlled = np.r_[np.full(5, L_B), np.full(10, L_B + 0.02), np.full(5, L_B)]
    baseline = np.r_[np.full(5, L_B), np.full(10, L_B + 0.1), np.full(5, L_B)]
    tr = grp_timeseries(controlled, baseline, L_B, (5, 15), DT)
    assert len(tr.grp) == 10 and np.allclose(tr.grp, 80.0, rtol=1e-12)
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(9 * DT)
    with pytest.raises(ValueError):
        grp_timeseries(controlled, baseline[:-1], L_B, (5, 15), DT)


@given(hnp.arrays(float, 30, elements=st.floats(-0.3, 0.3)),
       hnp.arrays(float, 30, elements=st.floats(0.05, 0.3)),
       st.floats(1e-3, 1e3))
def test_grp_scale_invariant(dc, db, k):
    L_B = 3.5
    a = grp_timeseries(L_B + dc, L_B + db, L_B, (0, 30), DT).grp
    b = grp_timeseries(k * (L_B + dc), k * (L_B + db), k * L_B, (0, 30), DT).grp
    assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


def test_settled_examples():
    assert settled_grp(np.full(40, 37.5)) == pytest.approx(37.5, rel=1e-12)
    assert settled_grp(np.r_[np.zeros(100), np.full(100, 84.0)]) == pytest.approx(84.0, rel=1e-12)
    assert settled_grp(np.linspace(0, 100, 201)) == pytest.approx(75.0, rel=1e-12)
    with pytest.raises(ValueError):
        settled_grp(np.array([]))


@given(hnp.arrays(float, st.integers(1, 60), elements=st.floats(-200, 100)))
def test_settled_within_second_half_range(g):
    half = g[len(g) // 2:]
    assert half.min() - 1e-9 <= settled_grp(g) <= half.max() + 1e-9


def test_rise_time_instant_step():
    rt = rise_time(np.full(50, 80.0), 80.0, DT)
    assert 0 < rt <= DT
    assert rt == pytest.approx(0.8 * DT, rel=1e-12)


def test_rise_time_linear_ramp():
    t = np.arange(0, 2.0 + 1e-9, DT)
    g = np.minimum(t, 1.0) * 60.0
    assert rise_time(g, 60.0, DT) == pytest.approx(0.8, rel=1e-9)


def test_rise_time_unmeasurable():
    assert rise_time(np.full(10, 5.0), 0.0, DT) is None
    assert rise_time(np.full(10, 5.0), -3.0, DT) is None
    assert rise_time(np.r_[np.zeros(5), np.full(5, 40.0)], 80.0, DT) is None


@given(hnp.arrays(float, st.integers(2, 40), elements=st.floats(0, 10)), st.floats(0.01, 100))
def test_rise_time_scale_invariant_for_monotone(steps, k):
    g = np.cumsum(steps)
    s = settled_grp(g)
    if s <= 0:
        return
    a, b = rise_time(g, s, DT), rise_time(g * k, s * k, DT)
    assert (a is None) == (b is None)
    if a is not None:
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_rise_time_time_shift_invariant():
    g = np.r_[np.zeros(3), np.linspace(0, 90, 20), np.full(20, 90.0)]
    base = GrpTrace(np.arange(len(g)) * DT, g, 0.1, np.zeros(len(g)))
    shifted = GrpTrace(np.arange(len(g)) * DT + 7.3, g, 0.1, np.zeros(len(g)))
    assert rise_time(base, 90.0) == pytest.approx(rise_time(shifted, 90.0), abs=1e-12)


def test_consistency_identical_records():
    recs = [Rec(c, d, 70.0) for c in "ab" for d in (1.0, 2.0) for _ in range(3)]
    s = consistency_stds(recs)
    assert (s.within_tests, s.across_conditions, s.across_controllers) == (0.0, 0.0, 0.0)


def test_consistency_two_repetitions():
    recs = [Rec("a", 1.0, 80.0), Rec("a", 1.0, 90.0)]
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        s = consistency_stds(recs)
    assert s.within_tests == pytest.approx(5.0)
    assert np.isnan(s.across_conditions) and s.excluded_groups == 2


def test_consistency_hand_computed():
    recs = [Rec("a", 1.0, 80), Rec("a", 1.0, 90), Rec("a", 2.0, 60), Rec("a", 2.0, 60),
            Rec("b", 1.0, 70), Rec("b", 1.0, 70), Rec("b", 2.0, 50), Rec("b", 2.0, 70)]
    s = consistency_stds(recs)
    # cell stds: 5, 0, 0, 10 -> 3.75; controller means: a (85, 60) b (70, 60) -> stds 12.5, 5
    # condition means: d1 (85, 70) d2 (60, 60) -> stds 7.5, 0
    assert s.within_tests == pytest.approx(3.75)
    assert s.across_conditions == pytest.approx(8.75)
    assert s.across_controllers == pytest.approx(3.75)


def test_consistency_deviation():
    recs = [Rec("a", 1.0, 80), Rec("b", 1.0, 90), Rec("a", 2.0, 10)]
    assert consistency_deviation(recs) == {0: 5.0, 1: 5.0, 2: 0.0}


def population(tap, shift, n_ctrl=4, seed=0):
    rng = np.random.default_rng(seed)
    return [Rec(f"{tap}-{c}", d, 70 + shift + rng.normal(scale=3), tap_count=tap,
                rise_time=float(rng.uniform(0.2, 1.0)))
            for c in range(n_ctrl) for d in (-1.0, 1.0) for _ in range(3)]


def test_bootstrap_identical_groups():
    a = population(3, 0.0)
    b = [Rec(r.controller_id.replace("3-", "6-"), r.deflection, r.settled_grp, tap_count=6) for r in a]
    res = compare_tap_configs(a + b, 3, 6, resamples=2000, seed=1)
    assert res.p_value > 0.9


def test_bootstrap_separated_groups_hit_floor():
    recs = population(1, -40.0) + population(6, 0.0, seed=1)
    res = compare_tap_configs(recs, 1, 6, resamples=2000, seed=1)
    assert res.p_value <= 1 / 2000
    assert res.difference < 0 and res.effect_size < 0


def test_bootstrap_deterministic_and_symmetric():
    recs = population(1, -3.0) + population(6, 0.0, seed=1)
    for metric in ("settled_grp", "consistency", "rise_time"):
        a = compare_tap_configs(recs, 1, 6, metric=metric, resamples=3000, seed=4)
        b = compare_tap_configs(recs, 1, 6, metric=metric, resamples=3000, seed=4)
        c = compare_tap_configs(recs, 6, 1, metric=metric, resamples=3000, seed=4)
        assert a.p_value == b.p_value == c.p_value
        assert a.difference == -c.difference


def test_bootstrap_needs_two_clusters():
    recs = population(1, 0.0, n_ctrl=1) + population(6, 0.0)
    with pytest.raises(ValueError, match="tap count 1"):
        compare_tap_configs(recs, 1, 6, resamples=100)


def test_bootstrap_labels_method():
    res = compare_tap_configs(population(3, 0.0) + population(6, 1.0, seed=2), 3, 6, resamples=200)
    assert "bootstrap" in res.method and "GLMM" in res.method


def test_summary_rows():
    recs = population(1, 0.0) + population(6, 10.0, seed=1)
    recs[0].rise_time = None
    rows = summarize(recs)
    assert [r["tap_count"] for r in rows] == [1, 6]
    assert rows[0]["n"] == 24 and rows[0]["unmeasurable"] == 1
