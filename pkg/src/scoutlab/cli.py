"""Operator command line.

Subcommands:
  campaign run <config.json>     run a campaign from a config document
  campaign resume <log>          continue a campaign from its event log
  stats funnel <log>             funnel statistics table
  stats scaling <dir>            scaling curve over campaign report files
  export timeline <log>          best-metric step series (table | plot-data)
  memory merge <logs...>         merge findings logs into one store
  serve <log-or-config>          HTTP control/status API (static log or live)

Exit status: 0 success, 1 runtime failure (final line `ERROR: <code>: <message>`),
2 usage errors. --addr falls back to the DS_ADDR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from scoutlab import analysis
from scoutlab.errors import ScoutlabError
from scoutlab.memory import FindingsMemory
from scoutlab.orchestrator import (
    CampaignConfig,
    CampaignEngine,
    load_campaign_events,
    resume_campaign,
    run_campaign,
)

DEFAULT_ADDR = "127.0.0.1:8765"


def _resolve(workdir: str, path: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(workdir, path)


def _print_report(report: dict):
    print(f"workers: {report['workers']}")
    print(f"records: {report['record_count']}")
    print(f"best_metric: {report['best_metric']}")
    for category, amount in sorted(report["budget_spent"].items()):
        print(f"spent[{category}]: {amount}")
    if report["partial_failure"]:
        print(f"dead_workers: {','.join(report['deaths'])}")
    if report["pending_approvals"]:
        print(f"pending_approvals: {','.join(report['pending_approvals'])}")
    print(f"PROGRESS_FINDINGS: {report['progress_count']}")


def cmd_campaign_run(args) -> int:
    cfg = CampaignConfig.from_file(_resolve(args.workdir, args.config))
    log_path = _resolve(args.workdir, args.log) if args.log else None
    engine, report = run_campaign(cfg, log_path=log_path)
    if args.report:
        with open(_resolve(args.workdir, args.report), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _print_report(report)
    return 0


def cmd_campaign_resume(args) -> int:
    engine = resume_campaign(_resolve(args.workdir, args.log))
    report = engine.run()
    if args.report:
        with open(_resolve(args.workdir, args.report), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _print_report(report)
    return 0


def cmd_stats_funnel(args) -> int:
    stats = analysis.funnel_stats(_resolve(args.workdir, args.log))
    sys.stdout.write(stats.to_table())
    return 0


def cmd_stats_scaling(args) -> int:
    directory = _resolve(args.workdir, args.dir)
    reports = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(directory, name), "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError:
                continue
        if isinstance(data, dict) and "workers" in data and "progress_count" in data:
            reports.append(data)
    curve = analysis.scaling_curve(analysis.collect_scaling_groups(reports))
    sys.stdout.write(curve.to_table())
    print(f"monotone: {str(curve.monotone).lower()}")
    return 0


def cmd_export_timeline(args) -> int:
    text = analysis.export_timeline(
        _resolve(args.workdir, args.log),
        args.format,
        path=_resolve(args.workdir, args.out) if args.out else None,
    )
    if not args.out:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}")
    return 0


def cmd_memory_merge(args) -> int:
    merged: Optional[FindingsMemory] = None
    for path in args.logs:
        loaded = FindingsMemory.import_log(_resolve(args.workdir, path))
        if merged is None:
            merged = loaded
        else:
            merged.merge_records(loaded.snapshot())
    assert merged is not None
    count = merged.export_log(_resolve(args.workdir, args.out))
    print(f"merged {len(args.logs)} logs: {count} records -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from scoutlab.api import serve_campaign  # deferred: keeps CLI import light

    addr = args.addr or os.environ.get("DS_ADDR") or DEFAULT_ADDR
    host, _, port_text = addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise ScoutlabError(f"bad --addr {addr!r}, expected host:port")
    source = _resolve(args.workdir, args.source)
    engine = None
    events = None
    with open(source, "r", encoding="utf-8") as fh:
        head = fh.read(1024).lstrip()
    if head.startswith("{") and '"config_version"' in head.split("\n", 1)[0]:
        cfg = CampaignConfig.from_file(source)
        log_path = _resolve(args.workdir, args.log) if args.log else None
        engine = CampaignEngine(cfg, log_path=log_path)
        engine.start()
    else:
        events = load_campaign_events(source)
    server = serve_campaign((host, int(port_text)), engine=engine, events=events)
    print(f"serving on http://{host}:{port_text}/ (Ctrl-C to stop)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown_campaign()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoutlab",
        description="Discovery campaign engine: findings memory, UCB selection, sandboxed evaluation.",
    )
    parser.add_argument(
        "--workdir", default=".", help="root for relative file paths (default: cwd)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    campaign = sub.add_parser("campaign", help="run or resume campaigns")
    campaign_sub = campaign.add_subparsers(dest="subcommand", required=True)
    run_p = campaign_sub.add_parser("run", help="run a campaign from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--log", help="write the campaign event log here")
    run_p.add_argument("--report", help="write the final report JSON here")
    run_p.set_defaults(func=cmd_campaign_run)
    resume_p = campaign_sub.add_parser("resume", help="resume a campaign from its log")
    resume_p.add_argument("log")
    resume_p.add_argument("--report", help="write the final report JSON here")
    resume_p.set_defaults(func=cmd_campaign_resume)

    stats = sub.add_parser("stats", help="statistics over campaign logs")
    stats_sub = stats.add_subparsers(dest="subcommand", required=True)
    funnel_p = stats_sub.add_parser("funnel", help="funnel counts and rates")
    funnel_p.add_argument("log")
    funnel_p.set_defaults(func=cmd_stats_funnel)
    scaling_p = stats_sub.add_parser("scaling", help="scaling curve over report files")
    scaling_p.add_argument("dir")
    scaling_p.set_defaults(func=cmd_stats_scaling)

    export = sub.add_parser("export", help="export derived artifacts")
    export_sub = export.add_subparsers(dest="subcommand", required=True)
    timeline_p = export_sub.add_parser("timeline", help="best-metric step series")
    timeline_p.add_argument("log")
    timeline_p.add_argument("--format", choices=analysis.TIMELINE_FORMATS, default="table")
    timeline_p.add_argument("--out", help="write to a file instead of stdout")
    timeline_p.set_defaults(func=cmd_export_timeline)

    memory = sub.add_parser("memory", help="findings store operations")
    memory_sub = memory.add_subparsers(dest="subcommand", required=True)
    merge_p = memory_sub.add_parser("merge", help="merge findings logs")
    merge_p.add_argument("logs", nargs="+")
    merge_p.add_argument("--out", required=True)
    merge_p.set_defaults(func=cmd_memory_merge)

    serve_p = sub.add_parser("serve", help="HTTP control/status API")
    serve_p.add_argument("source", help="a campaign log (static) or config file (live)")
    serve_p.add_argument("--addr", help=f"host:port (default {DEFAULT_ADDR}, env DS_ADDR)")
    serve_p.add_argument("--log", help="live mode: write the campaign log here")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScoutlabError as exc:
        code = type(exc).__name__
        print(f"ERROR: {code}: {exc}")
        return 1
    except OSError as exc:
        print(f"ERROR: IoFailure: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
