import hashlib
import json

import pytest

from gustrl.campaign import ResultStore, atomic_write, run_ablation_campaign
from gustrl.harness import GustTestRecord


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    from gustrl.config import resolve
    from conftest import TINY
    cfg = resolve(overrides=TINY)
    root = tmp_path_factory.mktemp("camp")
    return cfg, root, run_ablation_campaign(cfg, root)


def test_counts_and_outputs(finished):
    cfg, root, res = finished
    assert res.complete and len(res.records) == res.expected == 2 * 6 * 1 * 3
    for name in ("manifest.json", "records.jsonl", "summary.csv", "consistency.csv", "significance.csv",
                 "baselines/high-lift.json"):
        assert (root / name).exists(), name
    assert len(list((root / "policies").glob("*.pol"))) == 6
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["records"] == 36
    assert manifest["config_hash"] == cfg.hash()


def test_traces_are_referenced(finished):
    _, root, res = finished
    store = ResultStore(root)
    rec = res.records[0]
    tr = store.trace(rec.trace_hash)
    assert len(tr["grp"]) > 0 and len(tr["lift"]) > len(tr["grp"])


def test_rerun_is_idempotent_and_leaves_policies_alone(finished):
    cfg, root, res = finished
    before = {p.name: digest(p) for p in (root / "policies").glob("*.pol")}
    lines = (root / "records.jsonl").read_text()
    again = run_ablation_campaign(cfg, root)
    assert again.complete and (root / "records.jsonl").read_text() == lines
    assert {p.name: digest(p) for p in (root / "policies").glob("*.pol")} == before


def test_resume_after_interruption(tmp_path, tiny_config):
    cfg = tiny_config()
    full = run_ablation_campaign(cfg, tmp_path / "a")
    # simulate a crash mid-campaign: half the records and one policy survive, plus a torn line
    root = tmp_path / "b"
    (root / "policies").mkdir(parents=True)
    src = sorted((tmp_path / "a" / "policies").glob("*.pol"))[0]
    (root / "policies" / src.name).write_bytes(src.read_bytes())
    keep = (tmp_path / "a" / "records.jsonl").read_text().splitlines()[:5]
    (root / "records.jsonl").write_text("\n".join(keep) + '\n{"key": "tor')
    resumed = run_ablation_campaign(cfg, root)
    keys = [r.key for r in resumed.records]
    assert len(keys) == len(set(keys)) == full.expected
    assert sorted(r.summary()["trace_hash"] for r in resumed.records) == \
        sorted(r.summary()["trace_hash"] for r in full.records)


def test_partial_failure_is_reported(tmp_path, tiny_config):
    cfg = tiny_config()
    root = tmp_path / "p"
    (root / "policies").mkdir(parents=True)
    (root / "policies" / "high-lift_3tap_c01.pol").write_bytes(b"not a policy")
    res = run_ablation_campaign(cfg, root)
    assert not res.complete
    assert [f["controller"] for f in res.failures] == ["high-lift_3tap_c01"]
    assert len(res.records) == res.expected - 6
    assert json.loads((root / "manifest.json").read_text())["status"] == "partial"


def test_config_mismatch_refused(tmp_path, tiny_config):
    run_ablation_campaign(tiny_config(campaign={"tap_counts": [6], "repetitions": 1}), tmp_path)
    with pytest.raises(ValueError, match="fresh output directory"):
        run_ablation_campaign(tiny_config(seed=3), tmp_path)


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "x" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]


def test_record_summary_roundtrip():
    rec = GustTestRecord("c", 3, "high-lift", -7.5, 1, 42, 71.5, None, [1.0], [2.0], "h", "m")
    back = GustTestRecord.from_summary(json.loads(json.dumps(rec.summary())))
    assert back.key == rec.key and back.settled_grp == 71.5 and back.rise_time is None
