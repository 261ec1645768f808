"""Command line entry point: ``gen``, ``run`` and ``report``.

Exit codes: 0 clean run, 3 an attack was detected or suspected,
4 a scripted scenario's expectation did not hold, 1 harness error,
2 usage or config error.
"""

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from ..core import write_records
from ..cost import IncompleteLog, aggregate, read_events
from .config import ConfigError, ScenarioConfig, load_config
from .workload import generate

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_ATTACK, EXIT_EXPECTATION = 0, 1, 2, 3, 4


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def write_lines(path: Path, rows) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(_dump(r) + "\n")


def write_csv(path: Path, rows) -> None:
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _dump(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})


def write_table(out: Path, stem: str, rows, fmt: str) -> Path:
    path = out / f"{stem}.{fmt}"
    (write_lines if fmt == "jsonl" else write_csv)(path, rows)
    return path


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    return cfg.with_seed(args.seed)


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = generate(cfg.workload.spec(), cfg.seed)
    path = write_table(out, "trace", [asdict(op) for op in trace], args.format)
    print(f"wrote {len(trace)} operations to {path}")
    return EXIT_OK


def _verdict_rows(verdicts, truth) -> list:
    return [{"epoch": e, "status": v.status, "effective": v.effective, "codes": list(v.codes),
             "revision": v.revision, "truth": truth.get(e)} for e, v in sorted(verdicts.items())]


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.scenario == "simulation":
        from .sim import Simulation
        res = Simulation(cfg).run()
        events, report = res.events, res.report
        rows = _verdict_rows(res.verdicts, res.truth)
        server = res.sim.server
        write_records(out / "history.bin",
                      [server.epoch_ops[e][n] for e in sorted(server.exec_order) for n in server.exec_order[e]])
        attacked, ok, headline = res.attacked, True, {}
    else:
        from .scenarios import SCRIPTED
        outcome = SCRIPTED[cfg.scenario](cfg)
        events = outcome.events
        report = aggregate(events) if events and events[-1].get("event") == "end" else None
        rows = outcome.records
        attacked, ok, headline = outcome.attacked, outcome.ok, outcome.summary

    with open(out / "events.jsonl", "w") as fh:
        for ev in events:
            fh.write(_dump(ev) + "\n")
    if rows:
        write_table(out, "verdicts" if cfg.scenario == "simulation" else "records", rows, args.format)
    lines = [f"scenario {cfg.scenario} seed {cfg.seed}"]
    if cfg.scenario == "simulation":
        counts: dict = {}
        for r in rows:
            counts[r["status"]] = counts.get(r["status"], 0) + 1
        lines.append("verdicts " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    else:
        lines.append(f"expectation {'held' if ok else 'FAILED'}")
        lines += [f"  {k}: {v}" for k, v in headline.items()]
    if report is not None:
        write_table(out, "metrics", report.records(), args.format)
        lines.append(report.summary())
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    if not ok:
        return EXIT_EXPECTATION
    return EXIT_ATTACK if attacked else EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    path = Path(args.events) if args.events else out / "events.jsonl"
    events = read_events(path)
    report = aggregate(events)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out, "metrics", report.records(), args.format)
    verdicts = [{k: v for k, v in ev.items() if k not in ("seq", "tick", "event")}
                for ev in events if ev.get("event") == "verdict"]
    if verdicts:
        write_table(out, "verdicts", verdicts, args.format)
    text = report.summary() + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contractchecker", description="Audit simulation runner")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="scenario config (JSON, schema version 1)")
            sp.add_argument("--seed", type=int, help="override the config seed (u64)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    common(sub.add_parser("gen", help="generate a workload trace"))
    common(sub.add_parser("run", help="run a scenario"))
    rp = sub.add_parser("report", help="rebuild metrics from an event log")
    common(rp, config=False)
    rp.add_argument("events", nargs="?", help="event log (default: OUT/events.jsonl)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    seed = getattr(args, "seed", None)
    if seed is not None and not 0 <= seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    handler = {"gen": cmd_gen, "run": cmd_run, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, IncompleteLog, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001 - any other failure is a harness error
        print(f"harness error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
