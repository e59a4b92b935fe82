"""Command-line entry point: run scenarios, validate configs, re-emit
reports, and replay runs for determinism checks.

Exit codes: 0 success, 1 domain error (bad config values, failed replay),
2 usage error (unknown verb, missing flag).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import load_config, scenario_overrides, system_config_from
from .errors import SdcpsError
from .scenarios import (MetricsRecord, ScenarioSpec, SystemConfig,
                        default_scenario, emit_report, run_scenario)

log = logging.getLogger("sdcps")


def _setup_logging() -> None:
    level = os.environ.get("SDCPS_LOG", "off").lower()
    if level == "off":
        logging.disable(logging.CRITICAL)
    else:
        logging.basicConfig(
            level=logging.DEBUG if level == "trace" else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s")


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        return list(range(int(lo), int(hi) + 1))
    return [args.seed]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcps")
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write a report")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--scenario", required=True,
                       choices=["Sc1", "Sc2", "Sc3", "Sc4"])
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--seeds", help="inclusive range N..M")
    run_p.add_argument("--out", default="-")
    run_p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    run_p.add_argument("--trace", help="path for the trace-digest sidecar")

    val_p = sub.add_parser("validate", help="check a config file only")
    val_p.add_argument("--config", required=True)

    rep_p = sub.add_parser("report", help="re-emit a saved jsonl report")
    rep_p.add_argument("--trace", required=True,
                       help="jsonl records file from a previous run")
    rep_p.add_argument("--out", default="-")
    rep_p.add_argument("--format", choices=["csv", "jsonl"], default="csv")

    rpl_p = sub.add_parser("replay", help="re-run and compare trace digests")
    rpl_p.add_argument("--config", required=True)
    rpl_p.add_argument("--scenario", required=True,
                       choices=["Sc1", "Sc2", "Sc3", "Sc4"])
    rpl_p.add_argument("--seed", type=int, default=0)
    rpl_p.add_argument("--seeds", help="inclusive range N..M")
    rpl_p.add_argument("--trace", required=True,
                       help="digest sidecar recorded by a previous run")
    return parser


def _build_spec(raw: dict, scenario: str, seeds: list[int]) -> ScenarioSpec:
    spec = default_scenario(scenario, seeds=seeds)
    ov = scenario_overrides(raw, scenario)
    if "sweep" in ov:
        key = next(iter(spec.sweep))
        values = [tuple(v) if isinstance(v, list) else v for v in ov["sweep"]]
        spec.sweep = {key: values}
    if "sim_time" in ov:
        spec.sim_time = ov["sim_time"]
    if "requests" in ov:
        spec.requests = ov["requests"]
    return spec


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _digest_lines(records: list[MetricsRecord]) -> str:
    return "".join(
        f"{r.scenario},{r.n_local},{r.hosts_per_switch},{r.seed},{r.trace_digest}\n"
        for r in records)


def _cmd_run(args) -> int:
    raw = load_config(args.config)
    seeds = _parse_seeds(args)
    base = system_config_from(raw)
    spec = _build_spec(raw, args.scenario, seeds)
    log.info("running %s over %s, seeds %s", spec.id, spec.sweep, seeds)
    records = run_scenario(spec, base)
    _write(args.out, emit_report(records, args.format))
    digest_path = args.trace or (args.out + ".digest" if args.out != "-" else None)
    if digest_path:
        _write(digest_path, _digest_lines(records))
    return 0


def _cmd_validate(args) -> int:
    raw = load_config(args.config)
    system_config_from(raw)
    print("config ok")
    return 0


def _cmd_report(args) -> int:
    with open(args.trace, "r", encoding="utf-8") as fh:
        records = [MetricsRecord(**json.loads(line))
                   for line in fh if line.strip()]
    _write(args.out, emit_report(records, args.format))
    return 0


def _cmd_replay(args) -> int:
    raw = load_config(args.config)
    seeds = _parse_seeds(args)
    base = system_config_from(raw)
    spec = _build_spec(raw, args.scenario, seeds)
    records = run_scenario(spec, base)
    fresh = _digest_lines(records)
    with open(args.trace, "r", encoding="utf-8") as fh:
        recorded = fh.read()
    if fresh == recorded:
        print("replay ok: digests identical")
        return 0
    print("replay MISMATCH", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "validate":
            return _cmd_validate(args)
        if args.verb == "report":
            return _cmd_report(args)
        if args.verb == "replay":
            return _cmd_replay(args)
    except SdcpsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
