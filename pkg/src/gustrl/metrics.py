"""Gust rejection metrics, consistency statistics and tap-configuration comparisons."""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

DEGENERATE_GUST = 1e-6  # N
BOOTSTRAP_METHOD = "hierarchical cluster bootstrap (controllers, then tests); substitutes for a GLMM"


class DegenerateGustError(ValueError):
    pass


@dataclass(frozen=True)
class GrpTrace:
    times: np.ndarray            # s from gust arrival
    grp: np.ndarray              # percent
    baseline_delta: float        # N, mean baseline lift change over the gust
    controlled_delta: np.ndarray  # N

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float("nan")


def grp_from_deltas(controlled_delta, baseline_delta, dt: float) -> GrpTrace:
    controlled_delta = np.asarray(controlled_delta, dtype=np.float64)
    baseline_delta = np.asarray(baseline_delta, dtype=np.float64)
    den = abs(float(np.mean(baseline_delta)))
    if den < DEGENERATE_GUST:
        raise DegenerateGustError(f"mean baseline lift change {den:.3g} N is too small to normalize by")
    grp = (1.0 - np.abs(controlled_delta) / den) * 100.0
    times = np.arange(len(controlled_delta)) * dt
    return GrpTrace(times, grp, float(np.mean(baseline_delta)), controlled_delta)


def grp_timeseries(controlled_lift, baseline_lift, goal_lift: float, segment: tuple[int, int],
                   dt: float) -> GrpTrace:
    """Pointwise rejection over ``segment`` = [start, stop) sample indices.

    Both traces share the timestep grid; the baseline trace comes from the
    unactuated wing under the same gust.
    """
    controlled_lift = np.asarray(controlled_lift, dtype=np.float64)
    baseline_lift = np.asarray(baseline_lift, dtype=np.float64)
    if controlled_lift.shape != baseline_lift.shape:
        raise ValueError("controlled and baseline traces are not aligned")
    start, stop = segment
    if not 0 <= start < stop <= len(controlled_lift):
        raise ValueError(f"segment {segment} outside trace of length {len(controlled_lift)}")
    return grp_from_deltas(controlled_lift[start:stop] - goal_lift,
                           baseline_lift[start:stop] - goal_lift, dt)


def _values(trace) -> np.ndarray:
    return np.asarray(trace.grp if isinstance(trace, GrpTrace) else trace, dtype=np.float64)


def settled_grp(trace) -> float:
    """Mean GRP over the last half of the gust (midpoint sample included for odd counts)."""
    grp = _values(trace)
    window = grp[len(grp) // 2:]
    if len(window) == 0:
        raise ValueError("empty settling window")
    return float(window.mean())


def _first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float | None:
    above = np.nonzero(y >= level)[0]
    if len(above) == 0:
        return None
    i = int(above[0])
    if i == 0:
        return float(t[0])
    y0, y1 = y[i - 1], y[i]
    return float(t[i - 1] + (level - y0) / (y1 - y0) * (t[i] - t[i - 1]))


def rise_time(trace, settled: float, dt: float | None = None) -> float | None:
    """Time for GRP to climb from 10% to 90% of ``settled``; None when unmeasurable.

    The trace is taken to start from the unrejected state, one sample before its
    first point, so an immediate jump still spans a fraction of a step.
    """
    if not (math.isfinite(settled) and settled > 0):
        return None
    if isinstance(trace, GrpTrace):
        t, y = np.asarray(trace.times, float), trace.grp
        dt = trace.dt if dt is None else dt
    else:
        y = np.asarray(trace, dtype=np.float64)
        if dt is None:
            raise ValueError("dt is required for a bare GRP array")
        t = np.arange(len(y)) * dt
    if len(y) == 0:
        return None
    step = dt if math.isfinite(dt) else 1.0
    t = np.concatenate([[t[0] - step], t])
    y = np.concatenate([[0.0], y])
    lo = _first_crossing(t, y, 0.1 * settled)
    hi = _first_crossing(t, y, 0.9 * settled)
    if lo is None or hi is None:
        return None
    return hi - lo


# consistency

@dataclass(frozen=True)
class ConsistencySummary:
    within_tests: float         # STD across repetitions, per (controller, condition)
    across_conditions: float    # STD of per-condition means, per controller
    across_controllers: float   # STD of per-controller means, per condition
    excluded_groups: int


def _pop_std(values) -> float:
    return float(np.std(np.asarray(values, dtype=np.float64)))


def _mean_std(groups: dict, label: str) -> tuple[float, int]:
    stds, excluded = [], 0
    for key, vals in groups.items():
        if len(vals) < 2:
            excluded += 1
            continue
        stds.append(_pop_std(vals))
    if excluded:
        warnings.warn(f"{excluded} {label} group(s) with fewer than two members excluded", stacklevel=3)
    return (float(np.mean(stds)) if stds else float("nan")), excluded


def consistency_stds(records) -> ConsistencySummary:
    """The three averaged population standard deviations of settled GRP.

    Records should share flight condition and tap count.
    """
    cells = defaultdict(list)
    for r in records:
        cells[(r.controller_id, r.deflection)].append(r.settled_grp)
    within, ex1 = _mean_std(cells, "repetition")

    per_controller = defaultdict(list)
    per_condition = defaultdict(list)
    for (ctrl, defl), vals in cells.items():
        m = float(np.mean(vals))
        per_controller[ctrl].append(m)
        per_condition[defl].append(m)
    across_cond, ex2 = _mean_std(per_controller, "controller")
    across_ctrl, ex3 = _mean_std(per_condition, "gust condition")
    return ConsistencySummary(within, across_cond, across_ctrl, ex1 + ex2 + ex3)


def consistency_deviation(records) -> dict[int, float]:
    """Absolute deviation of each test from its (flight condition, gust, taps) cell mean, by record index."""
    cells = defaultdict(list)
    for i, r in enumerate(records):
        cells[(r.condition, r.deflection, r.tap_count)].append(i)
    out = {}
    for idx in cells.values():
        m = float(np.mean([records[i].settled_grp for i in idx]))
        for i in idx:
            out[i] = abs(records[i].settled_grp - m)
    return out


# significance

@dataclass(frozen=True)
class ComparisonResult:
    metric: str
    group_a: int
    group_b: int
    mean_a: float
    mean_b: float
    difference: float   # mean_a - mean_b
    effect_size: float  # difference over pooled test-level STD
    p_value: float
    resamples: int
    clusters_a: int
    clusters_b: int
    method: str = BOOTSTRAP_METHOD


METRICS = ("settled_grp", "consistency", "rise_time")


def _metric_values(records, metric: str):
    if metric == "settled_grp":
        return [r.settled_grp for r in records]
    if metric == "rise_time":
        return [r.rise_time for r in records]
    if metric == "consistency":
        dev = consistency_deviation(records)
        return [dev[i] for i in range(len(records))]
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _clusters(records, values, key: str) -> list[np.ndarray]:
    groups = defaultdict(list)
    for r, v in zip(records, values):
        if v is None or not math.isfinite(v):
            continue
        groups[getattr(r, key)].append(v)
    return [np.asarray(groups[k], dtype=np.float64) for k in sorted(groups)]


def _resampled_means(clusters: list[np.ndarray], resamples: int, rng: np.random.Generator) -> np.ndarray:
    """Mean over tests after resampling clusters, then tests within each cluster."""
    k = len(clusters)
    sizes = np.array([len(c) for c in clusters])
    width = int(sizes.max())
    padded = np.zeros((k, width))
    for i, c in enumerate(clusters):
        padded[i, :len(c)] = c
    pick = rng.integers(0, k, size=(resamples, k))
    m = sizes[pick]                                             # (R, k)
    inner = (rng.random((resamples, k, width)) * m[..., None]).astype(np.int64)
    mask = np.arange(width)[None, None, :] < m[..., None]
    vals = padded[pick[..., None], inner]
    return (vals * mask).sum((1, 2)) / mask.sum((1, 2))


def compare_tap_configs(records, tap_a: int, tap_b: int, metric: str = "settled_grp",
                        cluster_key: str = "controller_id", resamples: int = 10000,
                        seed: int = 0) -> ComparisonResult:
    """Two-sided test for a difference in mean ``metric`` between two tap counts.

    Under the null both groups are shifted to the pooled mean, then controllers
    (clusters) and their tests are resampled with replacement. The p-value is
    (1 + #{|D*| >= |D|}) / (1 + resamples).
    """
    if tap_a == tap_b:
        raise ValueError("compare two different tap counts")
    lo, hi = sorted((tap_a, tap_b))
    values = _metric_values(records, metric)
    clusters = {}
    for tap in (lo, hi):
        sel = [i for i, r in enumerate(records) if r.tap_count == tap]
        clusters[tap] = _clusters([records[i] for i in sel], [values[i] for i in sel], cluster_key)
        if len(clusters[tap]) < 2:
            raise ValueError(f"tap count {tap}: need at least two {cluster_key} clusters, "
                             f"found {len(clusters[tap])}")
    flat = {t: np.concatenate(c) for t, c in clusters.items()}
    pooled = float(np.concatenate(list(flat.values())).mean())
    observed = float(flat[lo].mean() - flat[hi].mean())

    rng = np.random.default_rng(seed)
    centered = {t: [c - flat[t].mean() + pooled for c in clusters[t]] for t in (lo, hi)}
    diff = _resampled_means(centered[lo], resamples, rng) - _resampled_means(centered[hi], resamples, rng)
    exceed = int(np.sum(np.abs(diff) >= abs(observed) - 1e-12))
    p = (1 + exceed) / (1 + resamples)

    sd = float(np.std(np.concatenate([flat[lo] - flat[lo].mean(), flat[hi] - flat[hi].mean()])))
    mean = {tap_a: flat[tap_a].mean(), tap_b: flat[tap_b].mean()}
    d = float(mean[tap_a] - mean[tap_b])
    return ComparisonResult(metric, tap_a, tap_b, float(mean[tap_a]), float(mean[tap_b]), d,
                            d / sd if sd > 0 else 0.0, p, resamples,
                            len(clusters[tap_a]), len(clusters[tap_b]))


# summaries

SUMMARY_COLUMNS = ("condition", "tap_count", "n", "mean_settled_grp", "std_settled_grp",
                   "mean_rise_time", "median_rise_time", "unmeasurable")


def summarize(records) -> list[dict]:
    """One row per (flight condition, tap count)."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.condition, r.tap_count)].append(r)
    rows = []
    for (cond, taps) in sorted(groups):
        rs = groups[(cond, taps)]
        g = np.array([r.settled_grp for r in rs])
        rt = np.array([r.rise_time for r in rs if r.rise_time is not None], dtype=float)
        rows.append({
            "condition": cond, "tap_count": taps, "n": len(rs),
            "mean_settled_grp": float(g.mean()), "std_settled_grp": _pop_std(g),
            "mean_rise_time": float(rt.mean()) if len(rt) else float("nan"),
            "median_rise_time": float(np.median(rt)) if len(rt) else float("nan"),
            "unmeasurable": len(rs) - len(rt),
        })
    return rows
