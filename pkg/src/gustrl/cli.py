"""Command-line entry point: ``gustrl {train,eval,campaign,baseline,metrics}``.

Exit codes: 0 success, 2 invalid input, 3 runtime or I/O failure, 4 campaign finished with failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import (ResultStore, atomic_write, check_manifest, curve_lines, load_agent,
                       run_ablation_campaign, training_key, write_baselines, write_significance,
                       write_summaries)
from .config import ConfigError, RunConfig, bootstrap_seed, build_model, gust_test_seed, resolve
from .domain import Condition
from .harness import TrainingProtocol, baseline_trace, gust_segment_at_wing, run_gust_test, run_training

from .nn import NetworkSpec, PolicyFileError, SpecMismatchError, check_spec, save_networks
from .plant import GustSchedule

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_PARTIAL = 0, 2, 3, 4
OUTPUT_ENV = "GUSTRL_OUTPUT_ROOT"

log = logging.getLogger("gustrl")


def default_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S")


def _manifest(out: Path, command: str, cfg: RunConfig, artifacts: list[str], **extra) -> None:
    body = {"command": command, "tool_version": __version__, "config": cfg.to_dict(),
            "config_hash": cfg.hash(), "master_seed": cfg.seed, "artifacts": artifacts,
            "written": _now(), **extra}
    atomic_write(out / "manifest.json", json.dumps(body, indent=2, sort_keys=True) + "\n")


def _config(args, **flags) -> RunConfig:
    sets = list(getattr(args, "set", None) or [])
    return resolve(getattr(args, "preset", None), getattr(args, "config", None), flags, sets)


# subcommands

def cmd_train(args) -> int:
    cfg = _config(args, condition=args.condition, taps=args.taps, seed=args.seed,
                  training={"episodes": args.episodes} if args.episodes is not None else {})
    out = Path(args.out) if args.out else default_root() / f"train_{cfg.condition}_{cfg.taps}tap_s{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    protocol = TrainingProtocol(cfg.training.episodes, cfg.training.filters, tuple(cfg.training.hidden))

    def report(ep, total, _stats):
        if (ep + 1) % max(1, cfg.training.episodes // 10) == 0:
            log.info("episode %d/%d reward %.3f", ep + 1, cfg.training.episodes, total)

    result = run_training(model, cfg.hyperparams(), protocol, cfg.seed, on_episode=report)
    atomic_write(out / "policy.pol", save_networks({"actor": result.agent.actor, "critic": result.agent.critic},
                                                   training_key(cfg, cfg.condition, cfg.taps, cfg.seed)))
    atomic_write(out / "curve.jsonl", curve_lines(result))
    _manifest(out, "train", cfg, ["policy.pol", "curve.jsonl"])
    print(f"wrote {out}/policy.pol, curve.jsonl, manifest.json")
    return EXIT_OK


def _parse_deflections(text: str, model) -> list[tuple[int, float]]:
    options = list(model.cfg.testing_deflections)
    if text == "all":
        return list(enumerate(options))
    chosen = []
    for part in text.split(","):
        try:
            d = float(part)
        except ValueError:
            raise ConfigError([f"--conditions: {part!r} is not a number or 'all'"]) from None
        matches = [i for i, o in enumerate(options) if np.isclose(o, d)]
        if not matches:
            raise ConfigError([f"--conditions: {d} is not a testing deflection; choose from {options}"])
        chosen.append((matches[0], options[matches[0]]))
    return chosen


def cmd_eval(args) -> int:
    flags = {"condition": args.condition, "taps": args.taps, "seed": args.seed}
    if args.zero_authority:
        flags["plant"] = {"camber_lift_gain": 0.0}
    cfg = _config(args, **flags)
    agent, _ = load_agent(args.policy, cfg)
    if args.taps is None:
        # take the tap count from the policy when not given explicitly
        cfg = _config(args, **{**flags, "taps": agent.channels - 1})
    check_spec(agent.actor.spec, NetworkSpec(cfg.taps + 1, agent.actor.spec.outputs,
                                             filters=agent.actor.spec.filters, hidden=agent.actor.spec.hidden))
    model = build_model(cfg)
    if agent.actor.spec.outputs != model.cfg.n_actions:
        raise SpecMismatchError(f"policy has {agent.actor.spec.outputs} actions, "
                                f"{cfg.condition} uses {model.cfg.n_actions}")
    out = Path(args.out) if args.out else default_root() / f"eval_{Path(args.policy).stem}_{cfg.hash()}"
    out.mkdir(parents=True, exist_ok=True)
    store = ResultStore(out)
    have = store.keys()
    cid = args.controller_id or Path(args.policy).stem
    for j, d in _parse_deflections(args.conditions, model):
        base = baseline_trace(model, d)
        for rep in range(args.reps):
            seed = gust_test_seed(cfg.seed, cfg.condition, cfg.taps, 0, j, rep)
            rec = run_gust_test(agent, model, d, seed, base, controller_id=cid, repetition=rep)
            if rec.key not in have:
                store.append(rec)
    records = store.records()
    rows, _ = write_summaries(out, records)
    _manifest(out, "eval", cfg, ["records.jsonl", "summary.csv", "consistency.csv"],
              policy=str(args.policy), records=len(records))
    for r in rows:
        print(f"{r['condition']} {r['tap_count']} taps: n={r['n']} mean settled GRP {r['mean_settled_grp']:.2f}%")
    return EXIT_OK


def cmd_campaign(args) -> int:
    flags = {"seed": args.seed, "campaign": {"workers": args.workers} if args.workers else {}}
    cfg = _config(args, **flags)
    out = Path(args.out) if args.out else default_root() / f"campaign_{args.preset or 'custom'}_{cfg.hash()}"
    res = run_ablation_campaign(cfg, out, progress=lambda msg: log.info(msg))
    for r in res.summary:
        print(f"{r['condition']:9s} {r['tap_count']} taps  n={r['n']:4d}  settled GRP {r['mean_settled_grp']:6.2f}%"
              f"  (std {r['std_settled_grp']:.2f})  median rise {r['median_rise_time']:.3f} s")
    print(f"{len(res.records)}/{res.expected} records in {out}")
    if not res.complete:
        print(f"campaign incomplete: {len(res.failures)} failure(s), see manifest.json", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config(args, seed=args.seed, condition=None if args.condition == "all" else args.condition)
    conditions = [c.value for c in Condition] if args.condition == "all" else [cfg.condition]
    out = Path(args.out) if args.out else default_root()
    for cond in conditions:
        model = build_model(cfg, cond)
        for d, trace in write_baselines(out, cfg, cond).items():
            start, stop = gust_segment_at_wing(GustSchedule.test_quarters(d, model.cfg), model)
            settled = trace[(start + stop) // 2:stop].mean() - model.cfg.baseline_lift
            print(f"{cond} {d:+6.1f} deg: settled baseline dL = {settled:+.4f} N")
    _manifest(out, "baseline", cfg, [f"baselines/{c}.json" for c in conditions])
    return EXIT_OK


def cmd_metrics(args) -> int:
    root = Path(args.dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {root}")
    cfg = resolve(path=manifest_path)
    check_manifest(root, cfg)
    records = ResultStore(root).records()
    if not records:
        raise FileNotFoundError(f"no records in {root}")
    rows, _ = write_summaries(root, records)
    sig = write_significance(root, records, args.resamples or cfg.campaign.resamples, bootstrap_seed(cfg.seed))
    for r in rows:
        print(f"{r['condition']:9s} {r['tap_count']} taps  settled GRP {r['mean_settled_grp']:6.2f}%")
    for s in sig:
        if s["metric"] == "settled_grp":
            print(f"{s['condition']:9s} {s['tap_a']} vs {s['tap_b']} taps: p = {s['p_value']:.4f}")
    return EXIT_OK


# parser

def _common(p, condition=True):
    p.add_argument("--config", help="YAML config file or a run manifest (JSON)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value, e.g. ppo.clip=0.1")
    p.add_argument("--out", help=f"output directory (default under ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--seed", type=int, help="master seed")
    if condition:
        p.add_argument("--condition", help="high-lift, med-lift or low-lift")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gustrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one controller")
    _common(p)
    p.add_argument("--taps", type=int, choices=(1, 3, 6))
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run gust tests with a trained policy")
    _common(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--taps", type=int, choices=(1, 3, 6))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--conditions", default="all", help="'all' or comma-separated test deflections")
    p.add_argument("--controller-id", default="")
    p.add_argument("--zero-authority", action="store_true", help="set the camber-to-lift gain to zero")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("campaign", help="train and test the tap-count ablation matrix")
    _common(p, condition=False)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("baseline", help="write unactuated lift traces for every test deflection")
    _common(p, condition=False)
    p.add_argument("--condition", default="all")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("metrics", help="recompute summaries and significance from stored records")
    p.add_argument("dir")
    p.add_argument("--resamples", type=int)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "reps", 1) < 1:
        print("error: --reps must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, SpecMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PolicyFileError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
