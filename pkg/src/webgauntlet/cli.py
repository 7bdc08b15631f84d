"""Command-line entry points: run suites, build reports, serve sessions."""

from __future__ import annotations

import argparse
import json
import sys

from . import catalog, metrics, protocol
from .agents import AGENT_KINDS, ScriptedAgent
from .episode import DEFAULT_MAX_STEPS, run_episode
from .perturb import MODES
from .suite import build_config, dump_records, load_records, record_sort_key, run_suite


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="webgauntlet",
        description="Deterministic web-environment simulator and stress harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an episode suite and write records")
    run_p.add_argument("--tasks", default="all",
                       help="comma-separated task ids, or 'all' (default)")
    run_p.add_argument("--mode", default="all", dest="mode",
                       help=f"one of {', '.join(MODES)}, or 'all' (default)")
    run_p.add_argument("--agent", default="oracle",
                       choices=[*AGENT_KINDS, "external"],
                       help="agent to drive episodes (default oracle)")
    run_p.add_argument("--script", default=None,
                       help="JSON action script for --agent external")
    run_p.add_argument("--seed", type=int, default=0, dest="suite_seed",
                       help="suite seed (default 0)")
    run_p.add_argument("--seeds-per-cell", type=int, default=1,
                       help="episodes per (task, mode) cell (default 1)")
    run_p.add_argument("--fail-prob", type=float, default=0.35,
                       help="silent-drop probability in failure mode")
    run_p.add_argument("--popup-freq", type=float, default=0.30,
                       help="pop-up spawn probability in popup mode")
    run_p.add_argument("--chaos", type=float, default=0.5,
                       help="style-distortion magnitude in chaos mode")
    run_p.add_argument("--noise-density", type=float, default=0.5,
                       help="junk/fragmentation density in noise mode")
    run_p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS,
                       help="per-episode step budget (default 100)")
    run_p.add_argument("--parallel", type=int, default=1,
                       help="worker processes (default 1)")
    run_p.add_argument("--out", default="records.jsonl",
                       help="output JSONL path (default records.jsonl)")

    report_p = sub.add_parser("report", help="aggregate a records file")
    report_p.add_argument("--records", required=True, help="records JSONL path")
    report_p.add_argument("--format", default="table", choices=("table", "csv"))
    report_p.add_argument(
        "--analysis",
        default="summary",
        choices=("summary", "retention", "calibration", "repetition", "all"),
    )

    serve_p = sub.add_parser("serve", help="serve episodes over HTTP")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8321)

    sub.add_parser("list", help="list bundled sites and tasks")

    return parser.parse_args(argv)


def _cmd_run(args) -> int:
    sites = catalog.bundled_sites()
    tasks = catalog.bundled_tasks()
    task_ids = sorted(tasks) if args.tasks == "all" else args.tasks.split(",")
    missing = [t for t in task_ids if t not in tasks]
    if missing:
        print(f"unknown tasks: {', '.join(missing)}", file=sys.stderr)
        return 2
    if args.mode == "all":
        modes = MODES
    elif args.mode in MODES:
        modes = (args.mode,)
    else:
        print(f"unknown mode {args.mode!r}", file=sys.stderr)
        return 2
    overrides = {
        "failure_p": args.fail_prob,
        "popup_f": args.popup_freq,
        "chaos_magnitude": args.chaos,
        "noise_density": args.noise_density,
    }

    if args.agent == "external":
        records = _run_external(args, sites, tasks, task_ids, modes, overrides)
        if records is None:
            return 2
    else:
        records = run_suite(
            sites,
            tasks,
            agent_kind=args.agent,
            suite_seed=args.suite_seed,
            task_ids=task_ids,
            modes=modes,
            seeds_per_cell=args.seeds_per_cell,
            max_steps=args.max_steps,
            overrides=overrides,
            parallel=args.parallel,
        )
    dump_records(records, args.out)
    summary = metrics.summarize(records)
    print(metrics.emit_report(summary, fmt="table"))
    print(f"{len(records)} records -> {args.out}")
    return 0


def _run_external(args, sites, tasks, task_ids, modes, overrides):
    """Replay a fixed action script (wire-form messages) as the agent."""
    if args.script is None:
        print("--agent external requires --script", file=sys.stderr)
        return None
    if len(task_ids) != 1 or len(modes) != 1:
        print("--agent external runs one task in one mode", file=sys.stderr)
        return None
    with open(args.script, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, list):
        print("script must be a JSON array of action messages", file=sys.stderr)
        return None
    messages = [protocol.parse_agent_message(item) for item in payload]
    task = tasks[task_ids[0]]
    config = build_config(modes[0], args.suite_seed, overrides)
    record = run_episode(
        sites[task.site_id],
        task,
        ScriptedAgent(messages, name="external"),
        config,
        max_steps=args.max_steps,
    )
    records = [record.to_wire()]
    records.sort(key=record_sort_key)
    return records


def _cmd_report(args) -> int:
    records = load_records(args.records)
    if not records:
        print(metrics.emit_report(metrics.SuiteSummary(cells={}), fmt=args.format))
        return 0
    which = args.analysis
    summary = metrics.summarize(records) if which in ("summary", "retention", "all") else None
    kwargs = {}
    if which in ("summary", "all"):
        kwargs["summary"] = summary
    if which in ("retention", "all"):
        kwargs["retention_report"] = metrics.retention(summary)
    if which in ("calibration", "all"):
        kwargs["calibration_report"] = metrics.calibration(records)
    if which in ("repetition", "all"):
        kwargs["repetition_report"] = metrics.repetition(records)
    print(metrics.emit_report(fmt=args.format, **kwargs))
    return 0


def _cmd_list(args) -> int:
    sites = catalog.bundled_sites()
    tasks = catalog.bundled_tasks()
    for site_id in sorted(sites):
        site = sites[site_id]
        print(f"{site_id}: routes {', '.join(sorted(site.pages))}")
        for task_id in sorted(tasks):
            task = tasks[task_id]
            if task.site_id == site_id:
                print(f"  {task_id}: {task.instruction}")
    return 0


def main(argv=None) -> int:
    args = _parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    if args.command == "serve":
        from .service import serve

        serve(args.host, args.port)
        return 0
    if args.command == "list":
        return _cmd_list(args)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
