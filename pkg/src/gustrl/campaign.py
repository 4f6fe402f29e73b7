"""Artifact store and the tap-count ablation campaign.

Layout of an output directory::

    manifest.json            resolved config, seeds, counts, failures
    records.jsonl            one gust-test summary per line, keyed by cell
    traces/<hash>.json       lift and GRP traces referenced by records
    policies/<name>.pol      trained actor/critic pairs
    curves/<name>.jsonl      per-episode training reward
    baselines/<cond>.json    unactuated lift traces per test deflection
    summary.csv, consistency.csv, significance.csv
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, bootstrap_seed, build_model, controller_seed, gust_test_seed
from .harness import (GustTestRecord, TrainingProtocol, TrainingResult, _hash, baseline_trace, cell_key,
                      run_gust_test, run_training)
from .metrics import METRICS, compare_tap_configs, consistency_stds, summarize
from .nn import load_networks, save_networks
from .ppo import PpoAgent

log = logging.getLogger(__name__)

TAP_PAIRS = ((1, 6), (3, 6), (1, 3))


def atomic_write(path, data: bytes | str) -> None:
    """Write through a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def controller_name(condition: str, taps: int, index: int) -> str:
    return f"{condition}_{taps}tap_c{index:02d}"


class ResultStore:
    """Append-only record log with trace sidecars; one line is written per record in a single call."""

    def __init__(self, root):
        self.root = Path(root)
        self.records_path = self.root / "records.jsonl"
        self.trace_dir = self.root / "traces"
        self._checked_tail = False

    def keys(self) -> set[str]:
        return {r["key"] for r in self._rows()}

    def _rows(self) -> list[dict]:
        if not self.records_path.exists():
            return []
        rows = []
        with open(self.records_path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError:
                    # a torn final line from an interrupted append; its test is simply rerun
                    log.warning("ignoring unreadable line %d of %s", n, self.records_path)
        return rows

    def records(self) -> list[GustTestRecord]:
        seen, out = set(), []
        for row in self._rows():
            if row["key"] in seen:
                continue
            seen.add(row["key"])
            out.append(GustTestRecord.from_summary(row))
        return out

    def append(self, record: GustTestRecord) -> None:
        if record.lift_trace is not None:
            atomic_write(self.trace_dir / f"{record.trace_hash}.json",
                         dumps({"lift": record.lift_trace, "grp": record.grp_trace}))
        self.root.mkdir(parents=True, exist_ok=True)
        line = (dumps(record.summary()) + "\n").encode()
        if not self._checked_tail:
            # terminate a torn line left by an interrupted writer so it cannot swallow this record
            if self.records_path.exists() and self.records_path.stat().st_size:
                with open(self.records_path, "rb") as fh:
                    fh.seek(-1, os.SEEK_END)
                    if fh.read(1) != b"\n":
                        line = b"\n" + line
            self._checked_tail = True
        fd = os.open(self.records_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, line)
            os.fsync(fd)
        finally:
            os.close(fd)

    def trace(self, trace_hash: str) -> dict:
        return json.loads((self.trace_dir / f"{trace_hash}.json").read_text())


# training artifacts

def training_key(cfg: RunConfig, condition: str, taps: int, seed: int) -> str:
    return _hash({"condition": condition, "taps": taps, "seed": seed, "training": asdict(cfg.training),
                  "ppo": asdict(cfg.ppo), "plant": asdict(cfg.plant)})


def curve_lines(result: TrainingResult) -> str:
    rows = [dumps({"episode": i, "reward": r, "running_average": a, "deflection": d})
            for i, (r, a, d) in enumerate(zip(result.episode_rewards, result.running_average, result.deflections))]
    return "".join(line + "\n" for line in rows)


def train_and_save(cfg: RunConfig, condition: str, taps: int, seed: int, policy_path, curve_path) -> str:
    """Train one controller and write its policy and curve; returns the policy file hash."""
    model = build_model(cfg, condition, taps)
    protocol = TrainingProtocol(cfg.training.episodes, cfg.training.filters, tuple(cfg.training.hidden))
    result = run_training(model, cfg.hyperparams(), protocol, seed)
    blob = save_networks({"actor": result.agent.actor, "critic": result.agent.critic},
                         training_key(cfg, condition, taps, seed))
    atomic_write(curve_path, curve_lines(result))
    atomic_write(policy_path, blob)
    return hashlib.sha256(blob).hexdigest()


def load_agent(path, cfg: RunConfig) -> tuple[PpoAgent, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"policy file not found: {path}")
    nets, key = load_networks(path.read_bytes())
    if set(nets) != {"actor", "critic"}:
        raise ValueError(f"{path}: expected actor and critic networks, found {sorted(nets)}")
    return PpoAgent(nets["actor"], nets["critic"], cfg.hyperparams()), key


# matrix

@dataclass(frozen=True)
class MatrixCell:
    condition: str
    taps: int
    controller: int
    deflection_index: int
    deflection: float
    repetition: int

    @property
    def controller_id(self) -> str:
        return controller_name(self.condition, self.taps, self.controller)

    @property
    def key(self) -> str:
        return cell_key(self.condition, self.taps, self.controller_id, self.deflection, self.repetition)


def controller_cells(cfg: RunConfig) -> list[tuple[str, int, int]]:
    return [(cond, taps, i) for cond in cfg.campaign.conditions for taps in cfg.campaign.tap_counts
            for i in range(cfg.controllers_for(cond))]


def enumerate_matrix(cfg: RunConfig) -> list[MatrixCell]:
    cells = []
    for cond, taps, i in controller_cells(cfg):
        deflections = build_model(cfg, cond, taps).cfg.testing_deflections
        for j, d in enumerate(deflections):
            for rep in range(cfg.campaign.repetitions):
                cells.append(MatrixCell(cond, taps, i, j, float(d), rep))
    return cells


def matrix_size(cfg: RunConfig) -> int:
    return len(enumerate_matrix(cfg))


# campaign

@dataclass
class CampaignResult:
    root: Path
    records: list[GustTestRecord]
    expected: int
    failures: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    significance: list[dict] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures and len(self.records) == self.expected


def write_manifest(root, cfg: RunConfig, extra: dict) -> None:
    path = Path(root) / "manifest.json"
    manifest = {"tool_version": __version__, "config": cfg.to_dict(), "config_hash": cfg.hash(),
                "master_seed": cfg.seed, **extra}
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def check_manifest(root, cfg: RunConfig) -> dict | None:
    path = Path(root) / "manifest.json"
    if not path.exists():
        return None
    old = json.loads(path.read_text())
    if old.get("config_hash") != cfg.hash():
        raise ValueError(f"{root} holds results for config {old.get('config_hash')}, "
                         f"not {cfg.hash()}; use a fresh output directory")
    return old


def write_baselines(root, cfg: RunConfig, condition: str) -> dict[float, np.ndarray]:
    model = build_model(cfg, condition, cfg.campaign.tap_counts[0])
    traces = {float(d): baseline_trace(model, d) for d in model.cfg.testing_deflections}
    body = {"condition": condition, "dt": model.dt, "baseline_lift": model.cfg.baseline_lift,
            "traces": {f"{d:+.3f}": t.tolist() for d, t in traces.items()}}
    atomic_write(Path(root) / "baselines" / f"{condition}.json", dumps(body))
    return traces


def _train_job(args):
    cfg, cond, taps, index, root = args
    name = controller_name(cond, taps, index)
    seed = controller_seed(cfg.seed, cond, taps, index)
    t0 = time.perf_counter()
    digest = train_and_save(cfg, cond, taps, seed, Path(root) / "policies" / f"{name}.pol",
                            Path(root) / "curves" / f"{name}.jsonl")
    return name, digest, time.perf_counter() - t0


def _train_missing(cfg: RunConfig, root: Path, failures: list[dict], progress) -> dict[str, float]:
    """Train controllers without a policy file; returns wall-clock seconds per trained controller."""
    jobs = [(cfg, c, t, i, root) for c, t, i in controller_cells(cfg)
            if not (root / "policies" / f"{controller_name(c, t, i)}.pol").exists()]
    timings: dict[str, float] = {}

    def done(job, outcome, exc=None):
        name = controller_name(*job[1:4])
        if exc is not None:
            log.error("training %s failed: %s", name, exc)
            failures.append({"stage": "training", "controller": name, "error": str(exc)})
        else:
            timings[name] = outcome[2]
            if progress:
                progress(f"trained {name} in {outcome[2]:.0f} s")

    if cfg.campaign.workers > 1:
        with ProcessPoolExecutor(cfg.campaign.workers) as pool:
            futures = [(job, pool.submit(_train_job, job)) for job in jobs]
            for job, fut in futures:
                try:
                    done(job, fut.result())
                except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the campaign
                    done(job, None, exc)
    else:
        for job in jobs:
            try:
                done(job, _train_job(job))
            except Exception as exc:  # noqa: BLE001
                done(job, None, exc)
    return timings


def run_ablation_campaign(cfg: RunConfig, root, progress=None) -> CampaignResult:
    """Train every controller, run every gust test, then write summaries. Safe to rerun."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    previous = check_manifest(root, cfg) or {}
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    cells = enumerate_matrix(cfg)
    write_manifest(root, cfg, {"status": "running", "expected_records": len(cells), "started": started})

    failures: list[dict] = []
    timings = {**previous.get("training_seconds", {}), **_train_missing(cfg, root, failures, progress)}

    store = ResultStore(root)
    have = store.keys()
    baselines = {c: write_baselines(root, cfg, c) for c in cfg.campaign.conditions}
    agents: dict[str, PpoAgent | None] = {}
    models = {}
    for cell in cells:
        if cell.key in have:
            continue
        name = cell.controller_id
        if name not in agents:
            try:
                agents[name] = load_agent(root / "policies" / f"{name}.pol", cfg)[0]
            except Exception as exc:  # noqa: BLE001
                agents[name] = None
                if not any(f["controller"] == name for f in failures):
                    failures.append({"stage": "loading", "controller": name, "error": str(exc)})
        agent = agents[name]
        if agent is None:
            continue
        model = models.setdefault((cell.condition, cell.taps), build_model(cfg, cell.condition, cell.taps))
        seed = gust_test_seed(cfg.seed, cell.condition, cell.taps, cell.controller, cell.deflection_index,
                              cell.repetition)
        try:
            rec = run_gust_test(agent, model, cell.deflection, seed, baselines[cell.condition][cell.deflection],
                                controller_id=name, repetition=cell.repetition)
        except Exception as exc:  # noqa: BLE001
            failures.append({"stage": "testing", "controller": name, "cell": cell.key, "error": str(exc)})
            continue
        store.append(rec)
    if progress:
        progress("gust tests done")

    records = [r for r in store.records() if r.key in {c.key for c in cells}]
    result = CampaignResult(root, records, len(cells), failures)
    result.summary, consistency = write_summaries(root, records)
    result.significance = write_significance(root, records, cfg.campaign.resamples, bootstrap_seed(cfg.seed))
    write_manifest(root, cfg, {
        "status": "complete" if result.complete else "partial",
        "expected_records": len(cells), "records": len(records), "failures": failures,
        "seeds": {controller_name(c, t, i): controller_seed(cfg.seed, c, t, i) for c, t, i in controller_cells(cfg)},
        "bootstrap_seed": bootstrap_seed(cfg.seed), "training_seconds": timings,
        "artifacts": sorted(str(p.relative_to(root)) for p in root.rglob("*")
                            if p.is_file() and (p.suffix in (".pol", ".csv") or p.parent.name == "curves")),
        "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
    })
    return result


# summaries

def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_summaries(root, records) -> tuple[list[dict], list[dict]]:
    rows = summarize(records)
    cons = []
    cells = sorted({(r.condition, r.tap_count) for r in records})
    for cond, taps in cells:
        sub = [r for r in records if r.condition == cond and r.tap_count == taps]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = consistency_stds(sub)
        cons.append({"condition": cond, "tap_count": taps, "within_tests": s.within_tests,
                     "across_conditions": s.across_conditions, "across_controllers": s.across_controllers})
    if rows:
        atomic_write(Path(root) / "summary.csv", _csv(rows, rows[0].keys()))
        atomic_write(Path(root) / "consistency.csv", _csv(cons, cons[0].keys()))
    return rows, cons


SIGNIFICANCE_COLUMNS = ("condition", "metric", "tap_a", "tap_b", "mean_a", "mean_b", "difference",
                        "effect_size", "p_value", "resamples", "clusters_a", "clusters_b", "method", "note")


def significance_rows(records, resamples: int, seed: int) -> list[dict]:
    rows = []
    for cond in sorted({r.condition for r in records}):
        sub = [r for r in records if r.condition == cond]
        present = {r.tap_count for r in sub}
        for a, b in TAP_PAIRS:
            if a not in present or b not in present:
                continue
            for metric in METRICS:
                row = {"condition": cond, "metric": metric, "tap_a": a, "tap_b": b}
                try:
                    res = compare_tap_configs(sub, a, b, metric, resamples=resamples, seed=seed)
                except ValueError as exc:
                    row.update(note=str(exc), p_value=math.nan)
                else:
                    row.update({k: v for k, v in asdict(res).items() if k not in ("group_a", "group_b")},
                               note="")
                rows.append(row)
    return rows


def write_significance(root, records, resamples: int, seed: int) -> list[dict]:
    rows = significance_rows(records, resamples, seed)
    full = [{c: r.get(c, "") for c in SIGNIFICANCE_COLUMNS} for r in rows]
    atomic_write(Path(root) / "significance.csv", _csv(full, SIGNIFICANCE_COLUMNS))
    return rows
