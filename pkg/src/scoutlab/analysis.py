"""Offline analysis over campaign logs: funnel, scaling, timelines.

Everything here is a pure function of the log bytes — analysis never reads
live state, so results are replayable. The scanner is deliberately
independent of the findings-memory replay machinery (simple per-id
counters), which lets tests cross-check the two implementations.

Table exports are delimiter-separated with a one-line header; column order
is part of the contract and documented on each function.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from scoutlab.errors import CorruptLog, InsufficientGroups, UnknownFormat
from scoutlab.records import Direction, Stage, Verdict

EventSource = Union[str, Sequence[dict]]

_STAGE_ORDER = {"idea": 0, "implement": 1, "progress": 2}


def _load_events(source: EventSource) -> list[dict]:
    if not isinstance(source, str):
        return list(source)
    try:
        fh = open(source, "r", encoding="utf-8")
    except OSError as exc:
        raise CorruptLog(f"cannot read {source}: {exc}") from exc
    events = []
    with fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                ev = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise CorruptLog(f"line {line_no}: {exc.msg}")
            if not isinstance(ev, dict) or "event" not in ev:
                raise CorruptLog(f"line {line_no}: not an event object")
            events.append(ev)
    return events


@dataclass
class FunnelStats:
    """Counts and rates of the idea -> implement -> progress pipeline."""

    ideas: int = 0
    implemented: int = 0
    progress: int = 0
    implement_rate: Optional[float] = None
    progress_rate_of_implemented: Optional[float] = None
    progress_rate_of_ideas: Optional[float] = None
    verdict_histogram: dict = field(default_factory=dict)
    wall_time_quantiles: Optional[dict] = None  # {"p10","p50","p90"} seconds

    def to_dict(self) -> dict:
        return {
            "ideas": self.ideas,
            "implemented": self.implemented,
            "progress": self.progress,
            "implement_rate": self.implement_rate,
            "progress_rate_of_implemented": self.progress_rate_of_implemented,
            "progress_rate_of_ideas": self.progress_rate_of_ideas,
            "verdict_histogram": dict(self.verdict_histogram),
            "wall_time_quantiles": self.wall_time_quantiles,
        }

    def to_table(self) -> str:
        """One header line + one row.

        Columns: ideas, implemented, progress, implement_rate,
        progress_rate_of_implemented, progress_rate_of_ideas, one column per
        verdict (improvement, no_improvement, implementation_error, timeout,
        verification_mismatch), wall_p10, wall_p50, wall_p90.
        """
        verdict_cols = [v.value for v in Verdict]
        header = (
            ["ideas", "implemented", "progress", "implement_rate",
             "progress_rate_of_implemented", "progress_rate_of_ideas"]
            + verdict_cols
            + ["wall_p10", "wall_p50", "wall_p90"]
        )
        q = self.wall_time_quantiles or {}

        def fmt(value) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return f"{value:.6g}"
            return str(value)

        row = (
            [self.ideas, self.implemented, self.progress, self.implement_rate,
             self.progress_rate_of_implemented, self.progress_rate_of_ideas]
            + [self.verdict_histogram.get(c, 0) for c in verdict_cols]
            + [q.get("p10"), q.get("p50"), q.get("p90")]
        )
        return ",".join(header) + "\n" + ",".join(fmt(v) for v in row) + "\n"


def _percentile(values: list[float], pct: float) -> float:
    """Linear-interpolation percentile over the sorted sample."""
    if not values:
        raise ValueError("empty sample")
    data = sorted(values)
    if len(data) == 1:
        return data[0]
    pos = (len(data) - 1) * pct / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(data) - 1)
    frac = pos - lo
    return data[lo] * (1 - frac) + data[hi] * frac


def funnel_stats(source: EventSource) -> FunnelStats:
    """Exact funnel counts from the log's record and promotion events.

    Evaluations are deduplicated by evaluation id across the event kinds
    that can carry them, so the verdict histogram totals equal the number
    of distinct evaluation events.
    """
    events = _load_events(source)
    max_stage: dict[str, int] = {}
    verdicts: dict[str, str] = {}
    walls: dict[str, float] = {}

    def see_record(rec: dict):
        try:
            rid = rec["id"]
            stage = _STAGE_ORDER[rec["stage"]]
        except (KeyError, TypeError) as exc:
            raise CorruptLog(f"malformed record payload: {exc}")
        max_stage[rid] = max(max_stage.get(rid, 0), stage)
        for entry in rec.get("evidence", []):
            see_evaluation(entry)

    def see_evaluation(entry: dict):
        try:
            eid = entry["evaluation_id"]
            verdict = entry["verdict"]
        except (KeyError, TypeError) as exc:
            raise CorruptLog(f"malformed evaluation payload: {exc}")
        verdicts[eid] = verdict
        walls[eid] = float(entry.get("wall_seconds", 0.0))

    for ev in events:
        kind = ev.get("event")
        if kind in ("record_created", "record_merged"):
            see_record(ev.get("record", {}))
        elif kind == "promoted":
            rid = ev.get("id")
            stage = _STAGE_ORDER.get(ev.get("to_stage"), None)
            if rid is None or stage is None:
                raise CorruptLog(f"malformed promoted event: {ev}")
            max_stage[rid] = max(max_stage.get(rid, 0), stage)
        elif kind == "evidence_appended":
            see_evaluation(ev.get("evaluation", {}))

    stats = FunnelStats(
        ideas=len(max_stage),
        implemented=sum(1 for s in max_stage.values() if s >= 1),
        progress=sum(1 for s in max_stage.values() if s >= 2),
    )
    if stats.ideas > 0:
        stats.implement_rate = stats.implemented / stats.ideas
        stats.progress_rate_of_ideas = stats.progress / stats.ideas
    if stats.implemented > 0:
        stats.progress_rate_of_implemented = stats.progress / stats.implemented
    hist: dict[str, int] = {}
    for verdict in verdicts.values():
        hist[verdict] = hist.get(verdict, 0) + 1
    stats.verdict_histogram = hist
    if walls:
        samples = list(walls.values())
        stats.wall_time_quantiles = {
            "p10": _percentile(samples, 10),
            "p50": _percentile(samples, 50),
            "p90": _percentile(samples, 90),
        }
    return stats


@dataclass
class ScalingPoint:
    workers: int
    mean_progress: float
    stdev_progress: float
    replicates: int


@dataclass
class ScalingCurve:
    points: list[ScalingPoint]
    monotone: bool

    def to_table(self) -> str:
        """Columns: workers, mean_progress, stdev_progress, replicates."""
        lines = ["workers,mean_progress,stdev_progress,replicates"]
        for p in self.points:
            lines.append(
                f"{p.workers},{p.mean_progress:.6g},{p.stdev_progress:.6g},{p.replicates}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "points": [
                {
                    "workers": p.workers,
                    "mean_progress": p.mean_progress,
                    "stdev_progress": p.stdev_progress,
                    "replicates": p.replicates,
                }
                for p in self.points
            ],
            "monotone": self.monotone,
        }


def scaling_curve(groups: Mapping[int, Sequence[float]]) -> ScalingCurve:
    """Mean and spread of progress counts per worker-count group.

    The monotone flag reports whether mean progress is non-decreasing in
    the worker count.
    """
    if len(groups) < 2:
        raise InsufficientGroups(f"need >= 2 worker-count groups, got {len(groups)}")
    points = []
    for workers in sorted(groups):
        values = [float(v) for v in groups[workers]]
        if not values:
            raise InsufficientGroups(f"group {workers} has no replicates")
        points.append(
            ScalingPoint(
                workers=workers,
                mean_progress=statistics.fmean(values),
                stdev_progress=statistics.pstdev(values),
                replicates=len(values),
            )
        )
    monotone = all(
        points[i + 1].mean_progress >= points[i].mean_progress
        for i in range(len(points) - 1)
    )
    return ScalingCurve(points=points, monotone=monotone)


def collect_scaling_groups(reports: Iterable[dict]) -> dict[int, list[float]]:
    """Group campaign reports (final_report dicts) by worker count."""
    groups: dict[int, list[float]] = {}
    for report in reports:
        try:
            workers = int(report["workers"])
            progress = float(report["progress_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLog(f"malformed campaign report: {exc}")
        groups.setdefault(workers, []).append(progress)
    return groups


TIMELINE_FORMATS = ("table", "plot-data")


def timeline_steps(source: EventSource) -> list[dict]:
    """Best-metric step series from the log's Progress promotions.

    Starts with a baseline step when a campaign_started event is present;
    each later step is a Progress promotion that improved the best metric
    in the baseline's direction, so the series is monotone by construction.
    """
    events = _load_events(source)
    steps: list[dict] = []
    direction = Direction.HIGHER_IS_BETTER
    best: Optional[float] = None
    for ev in events:
        kind = ev.get("event")
        if kind == "campaign_started":
            baseline = ev.get("baseline") or {}
            metric = baseline.get("metric_value")
            if metric is not None:
                direction = Direction(baseline.get("direction", "higher"))
                best = float(metric)
                steps.append(
                    {
                        "timestamp": float(ev.get("ts", 0.0)),
                        "best_metric": best,
                        "finding_id": baseline.get("name", "baseline"),
                    }
                )
        elif kind == "promoted" and ev.get("to_stage") == Stage.PROGRESS.wire:
            metric = (ev.get("justification") or {}).get("metric_value")
            if metric is None:
                continue
            metric = float(metric)
            improved = (
                best is None
                or (direction is Direction.HIGHER_IS_BETTER and metric > best)
                or (direction is Direction.LOWER_IS_BETTER and metric < best)
            )
            if improved:
                best = metric
                steps.append(
                    {
                        "timestamp": float(ev.get("ts", 0.0)),
                        "best_metric": metric,
                        "finding_id": ev.get("id", ""),
                    }
                )
    return steps


def render_timeline(steps: Sequence[dict], fmt: str) -> str:
    """table columns: timestamp, best_metric, finding_id.
    plot-data columns: x, y (same numbers, ids dropped)."""
    if fmt not in TIMELINE_FORMATS:
        raise UnknownFormat(f"unknown timeline format {fmt!r}")
    if fmt == "table":
        lines = ["timestamp,best_metric,finding_id"]
        for s in steps:
            lines.append(f"{s['timestamp']:.6g},{s['best_metric']:.6g},{s['finding_id']}")
    else:
        lines = ["x,y"]
        for s in steps:
            lines.append(f"{s['timestamp']:.6g},{s['best_metric']:.6g}")
    return "\n".join(lines) + "\n"


def export_timeline(source: EventSource, fmt: str, path: Optional[str] = None) -> str:
    """Render the timeline; optionally write it to a file. Returns the text."""
    text = render_timeline(timeline_steps(source), fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
