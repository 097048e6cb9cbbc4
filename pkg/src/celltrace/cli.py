"""Command-line front end.

Two subcommands:

  run     simulate a scenario config, write scenario.jsonl + summary.json,
          optionally run the attack suite and the replay checker
  replay  re-derive a recorded scenario with the independent checker and
          report any divergence

Exit status is nonzero on bad configs, replay divergence, or attack
outcomes that do not match the documented expectations.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import attacks as attacks_mod
from .config import ConfigError, load_config
from .oracle import replay
from .simnet import ScenarioLog, World


def _apply_overrides(config, args):
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.insecure_fast_crypto:
        updates["envelope"] = "transparent"
        updates["rsa_bits"] = 512
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _counters(world: World) -> dict:
    alerts = [rec for rec in world.log.events("alert")]
    return {
        "agents": len(world.config.agents),
        "slots": world.config.duration_slots,
        "reports_emitted": world.emitted_reports,
        "reports_received": world.server.received,
        "reports_dropped": world.server.dropped,
        "drop_reasons": dict(world.server.drop_reasons),
        "guard_drops": world.guard_drops,
        "bursts": len(world.server.bursts),
        "positives_accepted": sum(
            1 for rec in world.log.events("positive") if rec["accepted"]
        ),
        "alerts_delivered": len(alerts),
        "agents_alerted": sorted({rec["a"] for rec in alerts if rec["alerted"]}),
    }


def _run(args) -> int:
    try:
        config = _apply_overrides(load_config(args.config), args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    world = World(config)
    world.run()
    sim_seconds = time.perf_counter() - t0

    log_path = out_dir / "scenario.jsonl"
    world.log.dump(log_path)

    summary = {
        "schema_version": 1,
        "config": config.to_dict(),
        "counters": _counters(world),
        "timings": {"simulate_seconds": sim_seconds, **world.timings},
    }
    status = 0

    if args.check:
        t0 = time.perf_counter()
        result = replay(ScenarioLog.load(log_path))
        summary["replay"] = {
            "ok": result.ok,
            "seconds": time.perf_counter() - t0,
            "counts": result.counts,
            "diffs": result.diffs[:20],
        }
        if not result.ok:
            status = 1
            for diff in result.diffs[:20]:
                print(f"replay diff: {diff}", file=sys.stderr)

    if args.attacks:
        wanted = (
            list(attacks_mod.ATTACK_ORDER)
            if args.attacks.strip().lower() == "all"
            else [name.strip() for name in args.attacks.split(",") if name.strip()]
        )
        try:
            t0 = time.perf_counter()
            reports = attacks_mod.run_attacks(
                wanted, seed=config.seed, fast=args.insecure_fast_crypto
            )
        except KeyError as exc:
            print(f"attack error: {exc.args[0]}", file=sys.stderr)
            return 2
        table = attacks_mod.render_table(reports)
        print(table)
        summary["attacks"] = {
            "seconds": time.perf_counter() - t0,
            "table": [rep.to_dict() for rep in reports],
        }
        if not all(rep.matches_expected and rep.control_ok for rep in reports):
            status = 1

    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"scenario log: {log_path}")
    print(f"summary: {out_dir / 'summary.json'}")
    return status


def _replay(args) -> int:
    try:
        log = ScenarioLog.load(args.log)
    except (OSError, ValueError, KeyError) as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return 2
    result = replay(log)
    print(json.dumps(result.counts, sort_keys=True))
    if result.ok:
        print("replay ok: no divergence")
        return 0
    for diff in result.diffs:
        print(f"replay diff: {diff}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="celltrace",
        description="privacy-preserving proximity tracing simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario config")
    run_p.add_argument("--config", required=True, help="scenario INI file")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument(
        "--attacks",
        default=None,
        help="comma-separated attack names, or 'all'",
    )
    run_p.add_argument(
        "--check",
        action="store_true",
        help="replay the produced log with the independent checker",
    )
    run_p.add_argument(
        "--insecure-fast-crypto",
        action="store_true",
        help="transparent envelopes and small RSA keys; never for real data",
    )
    run_p.set_defaults(func=_run)

    replay_p = sub.add_parser("replay", help="verify a recorded scenario log")
    replay_p.add_argument("--log", required=True, help="scenario.jsonl to verify")
    replay_p.set_defaults(func=_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
