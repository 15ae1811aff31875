"""Campaign orchestration: the three-stage discovery cycle at scale.

Each worker runs retrieve -> generate -> valuate -> select -> evaluate ->
(verify) -> promote against its own memory replica, and merges with the
shared store every sync_period_cycles. The campaign log is the single
append-ordered event stream: shared-store record events plus campaign
events (selection, budget, sync, approvals, worker status, cycle reports).
The live CampaignState is maintained by folding exactly those events, so
replaying the log reconstructs it bit for bit after a crash.

Execution modes: "threads" runs one OS thread per worker; "interleaved"
runs workers round-robin on the caller's thread, which makes multi-worker
campaigns exactly reproducible (all randomness is keyed by seed/worker/
cycle, never by scheduling).
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

from scoutlab.acquisition import AcquisitionConfig, select_candidate
from scoutlab.errors import (
    AlreadyResolved,
    BudgetExhausted,
    ConfigInvalid,
    CorruptLog,
    NotPending,
    ScoutlabError,
    StorageFailure,
    UnknownId,
)
from scoutlab.generation import (
    DEFAULT_BATCH_SIZE,
    Draft,
    EvaluatedPoint,
    ExternalBackend,
    GeneratorContext,
    MemorySummary,
    SyntheticBackend,
)
from scoutlab import harness
from scoutlab.harness import EvaluationLimiter, SandboxSpec
from scoutlab.landscape import SyntheticConceptSpace
from scoutlab.memory import (
    FindingsMemory,
    RetrievalConfig,
    RetrievalScorer,
    dumps_canonical,
)
from scoutlab.records import (
    SCHEMA_VERSION,
    BaselineSpec,
    EvaluationResult,
    FindingRecord,
    Hypothesis,
    Stage,
    ValuationVector,
    Verdict,
    make_evaluation_id,
    make_finding_id,
    stable_seed,
)

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

BUDGET_CATEGORIES = ("idea", "implement", "implement_compute", "progress")


class SimClock:
    """Deterministic event clock for synthetic campaigns (one tick per call)."""

    def __init__(self, start: float = 0.0, tick: float = 1.0):
        self._t = start
        self._tick = tick
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            self._t += self._tick
            return self._t


class WallClock:
    def now(self) -> float:
        return time.time()


@dataclass
class BudgetLedger:
    """Per-stage unit costs and hard limits; charging is refused before the
    action starts whenever it would cross a limit."""

    idea_cost: float = 5.0
    implement_cost: float = 20.0
    implement_compute_cost: float = 1.0
    progress_cost: float = 150.0
    idea_limit: Optional[float] = None
    implement_limit: Optional[float] = None
    implement_compute_limit: Optional[float] = None
    progress_limit: Optional[float] = None

    def __post_init__(self):
        self._lock = threading.Lock()
        self._spent = {cat: 0.0 for cat in BUDGET_CATEGORIES}

    def unit_cost(self, category: str) -> float:
        return getattr(self, f"{category}_cost")

    def limit(self, category: str) -> Optional[float]:
        return getattr(self, f"{category}_limit")

    def spent(self, category: str) -> float:
        with self._lock:
            return self._spent[category]

    def spent_snapshot(self) -> dict:
        with self._lock:
            return dict(self._spent)

    def preload(self, spent: dict):
        """Restore accumulators when resuming from a log."""
        with self._lock:
            for cat, amount in spent.items():
                if cat in self._spent:
                    self._spent[cat] = float(amount)

    def charge(self, category: str, units: float = 1.0) -> float:
        if category not in BUDGET_CATEGORIES:
            raise ConfigInvalid(f"unknown budget category {category}")
        amount = self.unit_cost(category) * units
        with self._lock:
            limit = self.limit(category)
            if limit is not None and self._spent[category] + amount > limit:
                raise BudgetExhausted(
                    f"{category}: spent {self._spent[category]} + {amount} would exceed {limit}"
                )
            self._spent[category] += amount
            return amount

    def to_dict(self) -> dict:
        return {
            "idea_cost": self.idea_cost,
            "implement_cost": self.implement_cost,
            "implement_compute_cost": self.implement_compute_cost,
            "progress_cost": self.progress_cost,
            "idea_limit": self.idea_limit,
            "implement_limit": self.implement_limit,
            "implement_compute_limit": self.implement_compute_limit,
            "progress_limit": self.progress_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BudgetLedger":
        return cls(
            idea_cost=float(d.get("idea_cost", 5.0)),
            implement_cost=float(d.get("implement_cost", 20.0)),
            implement_compute_cost=float(d.get("implement_compute_cost", 1.0)),
            progress_cost=float(d.get("progress_cost", 150.0)),
            idea_limit=d.get("idea_limit"),
            implement_limit=d.get("implement_limit"),
            implement_compute_limit=d.get("implement_compute_limit"),
            progress_limit=d.get("progress_limit"),
        )


@dataclass
class CampaignConfig:
    workers: int
    limitations: tuple[str, ...]
    max_cycles: int
    sync_period_cycles: int = 5
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    reselect_losing_ideas: bool = True
    human_gate: str = "off"  # off | gate_progress
    selection_policy: str = "ucb"  # ucb | random
    execution: str = "threads"  # threads | interleaved
    verify_reruns: bool = True
    rerun_rel_tolerance: float = 0.01
    p_fail: float = 0.0
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    budget: BudgetLedger = field(default_factory=BudgetLedger)
    baseline: BaselineSpec = None  # required
    space: Optional[SyntheticConceptSpace] = None
    sandbox: Optional[SandboxSpec] = None
    external_backend_url: Optional[str] = None
    backend_options: dict = field(default_factory=dict)
    max_concurrent_evaluations: int = 0
    clock: str = "auto"  # auto | sim | wall

    def validate(self):
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if len(self.limitations) < self.workers:
            raise ConfigInvalid("need at least one limitation per worker")
        if self.max_cycles < 1:
            raise ConfigInvalid("max_cycles must be >= 1")
        if self.sync_period_cycles < 1:
            raise ConfigInvalid("sync_period_cycles must be >= 1")
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size must be >= 1")
        if self.human_gate not in ("off", "gate_progress"):
            raise ConfigInvalid(f"unknown human_gate {self.human_gate}")
        if self.selection_policy not in ("ucb", "random"):
            raise ConfigInvalid(f"unknown selection_policy {self.selection_policy}")
        if self.execution not in ("threads", "interleaved"):
            raise ConfigInvalid(f"unknown execution mode {self.execution}")
        if self.clock not in ("auto", "sim", "wall"):
            raise ConfigInvalid(f"unknown clock {self.clock}")
        if self.baseline is None:
            raise ConfigInvalid("baseline is required")
        if self.sandbox is None and self.space is None:
            raise ConfigInvalid("either a synthetic space or a sandbox is required")
        if self.external_backend_url is None and self.space is None:
            raise ConfigInvalid("the synthetic generator needs a space")

    def to_dict(self) -> dict:
        return {
            "config_version": CONFIG_VERSION,
            "workers": self.workers,
            "limitations": list(self.limitations),
            "max_cycles": self.max_cycles,
            "sync_period_cycles": self.sync_period_cycles,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "reselect_losing_ideas": self.reselect_losing_ideas,
            "human_gate": self.human_gate,
            "selection_policy": self.selection_policy,
            "execution": self.execution,
            "verify_reruns": self.verify_reruns,
            "rerun_rel_tolerance": self.rerun_rel_tolerance,
            "p_fail": self.p_fail,
            "retrieval": self.retrieval.to_dict(),
            "acquisition": self.acquisition.to_dict(),
            "budget": self.budget.to_dict(),
            "baseline": self.baseline.to_dict(),
            "space": self.space.to_dict() if self.space else None,
            "sandbox": self.sandbox.to_dict() if self.sandbox else None,
            "external_backend_url": self.external_backend_url,
            "backend_options": dict(self.backend_options),
            "max_concurrent_evaluations": self.max_concurrent_evaluations,
            "clock": self.clock,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        version = d.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigInvalid(f"config_version {version!r} not supported")
        if "baseline" not in d:
            raise ConfigInvalid("baseline is required")
        cfg = cls(
            workers=int(d["workers"]),
            limitations=tuple(d["limitations"]),
            max_cycles=int(d["max_cycles"]),
            sync_period_cycles=int(d.get("sync_period_cycles", 5)),
            batch_size=int(d.get("batch_size", DEFAULT_BATCH_SIZE)),
            seed=int(d.get("seed", 0)),
            reselect_losing_ideas=bool(d.get("reselect_losing_ideas", True)),
            human_gate=d.get("human_gate", "off"),
            selection_policy=d.get("selection_policy", "ucb"),
            execution=d.get("execution", "threads"),
            verify_reruns=bool(d.get("verify_reruns", True)),
            rerun_rel_tolerance=float(d.get("rerun_rel_tolerance", 0.01)),
            p_fail=float(d.get("p_fail", 0.0)),
            retrieval=RetrievalConfig.from_dict(d.get("retrieval", {})),
            acquisition=AcquisitionConfig.from_dict(d.get("acquisition", {})),
            budget=BudgetLedger.from_dict(d.get("budget", {})),
            baseline=BaselineSpec.from_dict(d["baseline"]),
            space=SyntheticConceptSpace.from_dict(d["space"]) if d.get("space") else None,
            sandbox=SandboxSpec.from_dict(d["sandbox"]) if d.get("sandbox") else None,
            external_backend_url=d.get("external_backend_url"),
            backend_options=dict(d.get("backend_options", {})),
            max_concurrent_evaluations=int(d.get("max_concurrent_evaluations", 0)),
            clock=d.get("clock", "auto"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "CampaignConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


# --------------------------------------------------------------------------
# Campaign state: a pure fold over the event log
# --------------------------------------------------------------------------


@dataclass
class WorkerView:
    worker_id: str
    limitation: str = ""
    cycle: int = 0
    status: str = "idle"
    best_metric: Optional[float] = None
    best_finding_id: Optional[str] = None
    sync_epoch: int = 0

    def fingerprint(self) -> tuple:
        return (
            self.worker_id,
            self.limitation,
            self.cycle,
            self.status,
            self.best_metric,
            self.best_finding_id,
            self.sync_epoch,
        )


class CampaignState:
    """Materialized view of the campaign log; every field folds from events."""

    def __init__(self):
        self.seq = 0
        self.started = False
        self.finished = False
        self.finish_reason: Optional[str] = None
        self.config_dict: Optional[dict] = None
        self.baseline: Optional[BaselineSpec] = None
        self.workers: dict[str, WorkerView] = {}
        self.spent = {cat: 0.0 for cat in BUDGET_CATEGORIES}
        self.global_sync_count = 0
        self.best_metric: Optional[float] = None
        self.best_finding_id: Optional[str] = None
        self.pending_approvals: dict[str, dict] = {}
        self.resolved_approvals: dict[str, str] = {}
        self.memory = FindingsMemory()

    def progress_count(self) -> int:
        return self.memory.count_stage(Stage.PROGRESS)

    def apply(self, ev: dict):
        kind = ev.get("event")
        self.seq = ev.get("seq", self.seq)
        if kind == "campaign_started":
            self.started = True
            self.config_dict = ev.get("config")
            if ev.get("baseline"):
                self.baseline = BaselineSpec.from_dict(ev["baseline"])
            for wid, limitation in ev.get("assignments", {}).items():
                self.workers[wid] = WorkerView(worker_id=wid, limitation=limitation)
        elif kind in ("record_created", "record_merged", "valuation_set", "promoted", "evidence_appended"):
            self.memory._apply_event(ev)
            self.memory._events.append(ev)
            if kind in ("record_created", "record_merged", "evidence_appended"):
                self._track_best(ev)
        elif kind == "budget_charged":
            self.spent[ev["category"]] = self.spent.get(ev["category"], 0.0) + ev["amount"]
        elif kind == "sync":
            view = self._worker(ev["worker"])
            view.sync_epoch = ev["epoch"]
            self.global_sync_count += 1
        elif kind == "approval_pending":
            self.pending_approvals[ev["finding_id"]] = {
                "finding_id": ev["finding_id"],
                "evaluation_id": ev["evaluation_id"],
                "worker": ev.get("worker", ""),
                "metric_value": ev.get("metric_value"),
                "ts": ev.get("ts", 0.0),
            }
        elif kind == "approval_resolved":
            self.pending_approvals.pop(ev["finding_id"], None)
            key = f"{ev['finding_id']}:{ev['evaluation_id']}"
            self.resolved_approvals[key] = ev["decision"]
        elif kind == "worker_status":
            self._worker(ev["worker"]).status = ev["status"]
        elif kind == "cycle_report":
            self._worker(ev["worker"]).cycle = ev["cycle"]
        elif kind == "campaign_finished":
            self.finished = True
            self.finish_reason = ev.get("reason")

    def _worker(self, worker_id: str) -> WorkerView:
        if worker_id not in self.workers:
            self.workers[worker_id] = WorkerView(worker_id=worker_id)
        return self.workers[worker_id]

    def _track_best(self, ev: dict):
        if self.baseline is None:
            return
        results = []
        if ev["event"] == "evidence_appended":
            results.append((ev["evaluation"], ev.get("worker", "")))
        else:
            for entry in ev["record"].get("evidence", []):
                results.append((entry, ev.get("worker", "")))
        for entry, worker in results:
            if entry.get("verdict") != Verdict.IMPROVEMENT.value:
                continue
            metric = entry.get("metric_value")
            if metric is None:
                continue
            finding_id = entry.get("finding_id")
            if self.best_metric is None or self.baseline.better(metric, self.best_metric):
                self.best_metric = metric
                self.best_finding_id = finding_id
            if worker in self.workers:
                view = self.workers[worker]
                if view.best_metric is None or self.baseline.better(metric, view.best_metric):
                    view.best_metric = metric
                    view.best_finding_id = finding_id

    def fingerprint(self) -> tuple:
        return (
            self.seq,
            self.started,
            self.finished,
            self.finish_reason,
            tuple(sorted((wid, v.fingerprint()) for wid, v in self.workers.items())),
            tuple(sorted(self.spent.items())),
            self.global_sync_count,
            self.best_metric,
            self.best_finding_id,
            tuple(sorted(self.pending_approvals)),
            tuple(sorted(self.resolved_approvals.items())),
            tuple(sorted(self.memory.state_fingerprint().items())),
            self.progress_count(),
        )


def replay_campaign_state(events) -> CampaignState:
    """Rebuild CampaignState by folding a sequence of logged events."""
    state = CampaignState()
    for ev in events:
        state.apply(ev)
    return state


def load_campaign_events(path: str, drop_torn_tail: bool = False) -> list[dict]:
    """Parse a campaign log. With drop_torn_tail a final line cut off by a
    hard kill is discarded instead of failing the load (mid-file corruption
    still raises)."""
    events = []
    try:
        fh = open(path, "r", encoding="utf-8")
        raw_lines = fh.read().splitlines()
        fh.close()
    except OSError as exc:
        raise StorageFailure(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(raw_lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            ev = json.loads(stripped)
        except json.JSONDecodeError as exc:
            if drop_torn_tail and line_no == len(raw_lines):
                logger.warning("%s: dropped torn final line %d", path, line_no)
                break
            raise CorruptLog(f"line {line_no}: {exc.msg}")
        if not isinstance(ev, dict) or "event" not in ev:
            raise CorruptLog(f"line {line_no}: not an event object")
        events.append(ev)
    return events


class CampaignLog:
    """Append-ordered event stream with sequence numbers and a folded state.

    The fold happens under the same lock as the append, so any state
    snapshot is consistent with the event stream (no stage is ever visible
    before its promotion event).
    """

    def __init__(self, path: Optional[str] = None, preloaded: Optional[list[dict]] = None):
        self._cond = threading.Condition()
        self._events: list[dict] = []
        self._state = CampaignState()
        self._worker_ctx = threading.local()
        self._path = path
        self._file = None
        self.post_append_hook: Optional[Callable[[dict], None]] = None
        if preloaded:
            for ev in preloaded:
                self._events.append(ev)
                self._state.apply(ev)
        if path is not None:
            try:
                self._file = open(path, "a", encoding="utf-8")
            except OSError as exc:
                raise StorageFailure(f"cannot open campaign log {path}: {exc}") from exc

    @property
    def seq(self) -> int:
        with self._cond:
            return self._state.seq

    def set_worker(self, worker_id: Optional[str]):
        self._worker_ctx.value = worker_id

    def append(self, ev: dict) -> dict:
        hook = None
        with self._cond:
            ev = dict(ev)
            ev["seq"] = self._state.seq + 1
            worker = getattr(self._worker_ctx, "value", None)
            if worker is not None:
                ev.setdefault("worker", worker)
            self._state.apply(ev)
            self._events.append(ev)
            if self._file is not None:
                try:
                    self._file.write(dumps_canonical(ev) + "\n")
                    self._file.flush()
                except OSError as exc:
                    raise StorageFailure(f"campaign log write failed: {exc}") from exc
            self._cond.notify_all()
            hook = self.post_append_hook
        if hook is not None:
            hook(ev)
        return ev

    def close(self):
        with self._cond:
            if self._file is not None:
                self._file.close()
                self._file = None

    def events_after(self, after_seq: int, wait_seconds: float = 0.0) -> list[dict]:
        deadline = time.monotonic() + wait_seconds
        with self._cond:
            while True:
                out = [ev for ev in self._events if ev.get("seq", 0) > after_seq]
                if out or wait_seconds <= 0:
                    return [dict(ev) for ev in out]
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._cond.wait(timeout=remaining)

    def all_events(self) -> list[dict]:
        with self._cond:
            return [dict(ev) for ev in self._events]

    def with_state(self, fn):
        """Run fn against the folded state under the log lock."""
        with self._cond:
            return fn(self._state)

    def state_fingerprint(self) -> tuple:
        with self._cond:
            return self._state.fingerprint()


# --------------------------------------------------------------------------
# Worker runtime and the engine
# --------------------------------------------------------------------------


@dataclass
class _WorkerRuntime:
    worker_id: str
    limitation: str
    memory: FindingsMemory
    cycle: int = 0
    finding_counter: int = 0
    eval_counter: int = 0
    announced_pause: bool = False

    def next_finding_id(self) -> str:
        self.finding_counter += 1
        return make_finding_id(self.worker_id, self.finding_counter)

    def next_eval_id(self) -> str:
        self.eval_counter += 1
        return make_evaluation_id(self.worker_id, self.eval_counter)


class CampaignEngine:
    """Runs one campaign: N workers, a shared store, budgets, and controls."""

    def __init__(
        self,
        cfg: CampaignConfig,
        log_path: Optional[str] = None,
        _preloaded: Optional[list[dict]] = None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.log = CampaignLog(log_path, preloaded=_preloaded)
        use_sim = cfg.clock == "sim" or (cfg.clock == "auto" and cfg.sandbox is None)
        self.clock = SimClock() if use_sim else WallClock()
        self.limiter = EvaluationLimiter(cfg.max_concurrent_evaluations)
        self.shared = FindingsMemory(event_sink=self.log.append)
        if cfg.external_backend_url:
            self.backend = ExternalBackend(cfg.external_backend_url)
        else:
            self.backend = SyntheticBackend(
                cfg.space, seed_salt=cfg.seed, **cfg.backend_options
            )
        self.workers: dict[str, _WorkerRuntime] = {}
        self._threads: list[threading.Thread] = []
        self._run_event = threading.Event()
        self._run_event.set()
        self._stop = False
        self._control_lock = threading.Lock()
        self._approval_lock = threading.Lock()
        self._started = False
        self._start_wall = time.monotonic()
        # test/chaos hook: called at step boundaries inside run_cycle with
        # (worker_id, step_tag); raising kills the worker mid-cycle
        self.crash_hook: Optional[Callable[[str, str], None]] = None
        for i in range(cfg.workers):
            wid = f"w{i:02d}"
            self.workers[wid] = _WorkerRuntime(
                worker_id=wid,
                limitation=cfg.limitations[i],
                memory=FindingsMemory(),
            )

    # -- event helpers ---------------------------------------------------------

    def _emit(self, ev: dict):
        ev.setdefault("schema_version", SCHEMA_VERSION)
        ev.setdefault("ts", self.clock.now())
        self.log.append(ev)

    def _charge(self, category: str, units: float = 1.0) -> float:
        amount = self.cfg.budget.charge(category, units)
        self._emit(
            {
                "event": "budget_charged",
                "category": category,
                "units": units,
                "amount": amount,
            }
        )
        return amount

    # -- campaign lifecycle ------------------------------------------------------

    def start(self):
        if self._started:
            return
        self._started = True
        self._start_wall = time.monotonic()
        if not self.log.all_events():
            self._emit(
                {
                    "event": "campaign_started",
                    "config": self.cfg.to_dict(),
                    "baseline": self.cfg.baseline.to_dict(),
                    "assignments": {
                        w.worker_id: w.limitation for w in self.workers.values()
                    },
                }
            )
        if self.cfg.execution == "threads":
            for w in self.workers.values():
                t = threading.Thread(
                    target=self._worker_thread, args=(w,), name=f"scoutlab-{w.worker_id}"
                )
                t.start()
                self._threads.append(t)
        else:
            t = threading.Thread(target=self._interleaved_driver, name="scoutlab-driver")
            t.start()
            self._threads.append(t)

    def join(self):
        for t in self._threads:
            t.join()
        if not self.log.with_state(lambda s: s.finished):
            reason = "stopped" if self._stop else "completed"
            self._emit(
                {
                    "event": "campaign_finished",
                    "reason": reason,
                    "progress_count": self.log.with_state(lambda s: s.progress_count()),
                }
            )

    def run(self) -> dict:
        """Run to completion and return the final report."""
        self.start()
        self.join()
        return self.final_report()

    # -- execution modes -----------------------------------------------------------

    def _worker_thread(self, w: _WorkerRuntime):
        self.log.set_worker(w.worker_id)
        try:
            self._status(w, "running")
            ended = None
            while self._worker_should_continue(w):
                if not self._wait_if_paused(w):
                    break
                try:
                    self.run_cycle(w)
                except BudgetExhausted as exc:
                    ended = ("budget_exhausted", str(exc))
                    break
                if w.cycle % self.cfg.sync_period_cycles == 0:
                    self._sync(w)
            self._sync(w, final=True)
            if ended is not None:
                self._status(w, ended[0], reason=ended[1])
            elif self._stop:
                self._status(w, "stopped")
            else:
                self._status(w, "finished")
        except Exception as exc:  # worker death must not kill the campaign
            logger.exception("worker %s died", w.worker_id)
            try:
                self._status(w, "dead", reason=repr(exc))
            except Exception:
                pass
        finally:
            self.log.set_worker(None)

    def _interleaved_driver(self):
        """Deterministic round-robin over workers on a single thread."""
        live = dict(self.workers)
        for wid in sorted(live):
            self.log.set_worker(wid)
            self._status(live[wid], "running")
        self.log.set_worker(None)
        while live and not self._stop:
            if not self._run_event.is_set():
                for wid in sorted(live):
                    self.log.set_worker(wid)
                    self._status(live[wid], "paused")
                self.log.set_worker(None)
                while not self._run_event.is_set() and not self._stop:
                    self._run_event.wait(timeout=0.05)
                if self._stop:
                    break
                for wid in sorted(live):
                    self.log.set_worker(wid)
                    self._status(live[wid], "running")
                self.log.set_worker(None)
            ran = []
            for wid in sorted(live):
                w = live[wid]
                if w.cycle >= self.cfg.max_cycles:
                    continue
                self.log.set_worker(wid)
                try:
                    self.run_cycle(w)
                    ran.append(wid)
                except BudgetExhausted as exc:
                    self._status(w, "budget_exhausted", reason=str(exc))
                    self._sync(w, final=True)
                    del live[wid]
                except Exception as exc:
                    logger.exception("worker %s died", wid)
                    self._status(w, "dead", reason=repr(exc))
                    del live[wid]
                finally:
                    self.log.set_worker(None)
            # push-all then pull-all at the barrier: replicas converge exactly
            due = [
                wid
                for wid in sorted(live)
                if wid in ran and live[wid].cycle % self.cfg.sync_period_cycles == 0
            ]
            for wid in due:
                self.log.set_worker(wid)
                self._push(live[wid])
                self.log.set_worker(None)
            for wid in due:
                w = live[wid]
                self.log.set_worker(wid)
                self._pull(w)
                self._emit(
                    {"event": "sync", "epoch": w.cycle // self.cfg.sync_period_cycles}
                )
                self.log.set_worker(None)
            if not ran:
                break
        for wid in sorted(live):
            w = live[wid]
            self.log.set_worker(wid)
            self._sync(w, final=True)
            self._status(w, "stopped" if self._stop else "finished")
            self.log.set_worker(None)

    def _worker_should_continue(self, w: _WorkerRuntime) -> bool:
        return not self._stop and w.cycle < self.cfg.max_cycles

    def _wait_if_paused(self, w: Optional[_WorkerRuntime]) -> bool:
        """Block while paused; returns False when the campaign should stop."""
        while not self._run_event.is_set():
            if self._stop:
                return True
            if w is not None and not w.announced_pause:
                self._status(w, "paused")
                w.announced_pause = True
            self._run_event.wait(timeout=0.05)
        if w is not None and w.announced_pause:
            w.announced_pause = False
            self._status(w, "running")
        return not self._stop

    def _status(self, w: _WorkerRuntime, status: str, reason: str = ""):
        ev = {"event": "worker_status", "worker": w.worker_id, "status": status}
        if reason:
            ev["reason"] = reason
        self._emit(ev)

    # -- sync ---------------------------------------------------------------------

    def _push(self, w: _WorkerRuntime):
        self.shared.merge_records(w.memory.snapshot(), ts=self.clock.now())

    def _pull(self, w: _WorkerRuntime):
        w.memory.merge_records(self.shared.snapshot(), ts=self.clock.now())

    def _sync(self, w: _WorkerRuntime, final: bool = False):
        self._push(w)
        self._pull(w)
        epoch = (w.cycle // self.cfg.sync_period_cycles) if not final else -1
        self._emit({"event": "sync", "epoch": epoch, "final": final})

    # -- one cycle ------------------------------------------------------------------

    def _step(self, w: _WorkerRuntime, tag: str):
        if self.crash_hook is not None:
            self.crash_hook(w.worker_id, tag)

    def run_cycle(self, w: _WorkerRuntime) -> dict:
        """retrieve -> generate -> valuate -> append -> select -> evaluate ->
        verify -> promote; returns the cycle report (also logged)."""
        cfg = self.cfg
        cycle = w.cycle + 1
        report: dict[str, Any] = {
            "worker": w.worker_id,
            "cycle": cycle,
            "created": [],
            "selected": None,
            "verdicts": [],
            "progressed": False,
            "parked": False,
            "errors": [],
        }

        # Strategize & hypothesize: the idea batch is charged before it starts.
        self._step(w, "cycle_start")
        self._charge("idea", units=cfg.batch_size)
        context = self._build_context(w, cycle)
        try:
            drafts = self.backend.generate(context)
            valuations = self.backend.valuate(drafts, context)
        except ScoutlabError as exc:
            report["errors"].append(f"backend: {exc}")
            self._finish_cycle(w, report)
            return report

        created_ids = []
        ts = self.clock.now()
        for draft, valuation in zip(drafts, valuations):
            record = FindingRecord(
                id=w.next_finding_id(),
                hypothesis=draft.hypothesis,
                stage=Stage.IDEA,
                valuation=valuation,
                embedding=draft.embedding,
                lineage=tuple(pid for pid in draft.lineage if pid in w.memory),
                baseline_ref=cfg.baseline.name,
                created_cycle=cycle,
                created_worker=w.worker_id,
                created_ts=ts,
                updated_ts=ts,
                latent=draft.latent,
            )
            w.memory.append_record(record)
            created_ids.append(record.id)
        report["created"] = created_ids
        self._step(w, "ideas_appended")

        # Implement & verify: select one candidate and spend an evaluation on it.
        pool = self._selection_pool(w, created_ids)
        if not pool:
            self._finish_cycle(w, report)
            return report
        chosen_id, ranking = self._select(w, cycle, pool)
        report["selected"] = chosen_id
        self._emit(
            {
                "event": "selected",
                "finding_id": chosen_id,
                "cycle": cycle,
                "policy": cfg.selection_policy,
                "pool_size": len(pool),
                "ranking_head": [
                    {
                        "finding_id": c.finding_id,
                        "ucb_score": c.ucb_score,
                        "exploitation_part": c.exploitation_part,
                        "exploration_part": c.exploration_part,
                    }
                    for c in ranking[:5]
                ],
            }
        )

        self._step(w, "selected")
        self._charge("implement")
        self._charge("implement_compute")
        w.memory.promote(
            chosen_id,
            Stage.IMPLEMENT,
            {"kind": "selection", "policy": cfg.selection_policy, "cycle": cycle},
            ts=self.clock.now(),
        )
        record = w.memory.get(chosen_id)

        self._step(w, "implement_promoted")
        first = self._evaluate(w, record)
        w.memory.append_evidence(chosen_id, first, ts=self.clock.now())
        self._step(w, "evaluated")
        report["verdicts"].append(first.verdict.value)

        confirmed: Optional[EvaluationResult] = None
        if first.verdict is Verdict.IMPROVEMENT:
            if cfg.verify_reruns:
                second = self._verify(w, record, first)
                w.memory.append_evidence(chosen_id, second, ts=self.clock.now())
                report["verdicts"].append(second.verdict.value)
                if second.verdict is Verdict.IMPROVEMENT:
                    confirmed = second
            else:
                confirmed = first

        if confirmed is not None:
            # share the finding and its evidence before promoting or parking
            self._push_record(w, chosen_id)
            self._step(w, "pushed")
            if cfg.human_gate == "gate_progress":
                self._emit(
                    {
                        "event": "approval_pending",
                        "finding_id": chosen_id,
                        "evaluation_id": confirmed.evaluation_id,
                        "metric_value": confirmed.metric_value,
                        "cycle": cycle,
                    }
                )
                report["parked"] = True
            else:
                self._charge("progress")
                self.shared.promote(
                    chosen_id,
                    Stage.PROGRESS,
                    confirmed,
                    ts=self.clock.now(),
                )
                w.memory.promote(chosen_id, Stage.PROGRESS, confirmed, ts=self.clock.now())
                report["progressed"] = True
        else:
            # share the attempt (and its failure evidence) with the store
            self._push_record(w, chosen_id)

        self._step(w, "cycle_end")
        self._finish_cycle(w, report)
        return report

    def _finish_cycle(self, w: _WorkerRuntime, report: dict):
        w.cycle = report["cycle"]
        self._emit({"event": "cycle_report", **report})

    def _build_context(self, w: _WorkerRuntime, cycle: int) -> GeneratorContext:
        cfg = self.cfg
        if cfg.retrieval.scorer is RetrievalScorer.LEXICAL_OVERLAP:
            query = w.limitation
        else:
            best = self._best_evaluated_point(w)
            query = best if best is not None else (0.5,) * (cfg.space.dimension if cfg.space else 2)
        top_k = w.memory.retrieve_top_k(query, cfg.retrieval)
        evaluated = []
        for rec in w.memory.records_view():
            if rec.latent is None or not rec.evidence:
                continue
            evaluated.append(
                EvaluatedPoint(
                    finding_id=rec.id, point=rec.latent, metric=rec.best_metric()
                )
            )
        summary = MemorySummary(
            idea_count=w.memory.count_stage(Stage.IDEA),
            implement_count=w.memory.count_stage(Stage.IMPLEMENT),
            progress_count=w.memory.count_stage(Stage.PROGRESS),
            best_metric=self.log.with_state(lambda s: s.best_metric),
        )
        return GeneratorContext(
            top_k_findings=top_k,
            target_limitation=w.limitation,
            batch_size=cfg.batch_size,
            memory_summary=summary,
            evaluated_points=tuple(evaluated),
            worker_id=w.worker_id,
            cycle=cycle,
        )

    def _best_evaluated_point(self, w: _WorkerRuntime):
        best = None
        best_metric = None
        for rec in w.memory.records_view():
            if rec.latent is None:
                continue
            metric = rec.best_metric()
            if metric is None:
                continue
            if best_metric is None or self.cfg.baseline.better(metric, best_metric):
                best_metric = metric
                best = rec.latent
        return best

    def _selection_pool(self, w: _WorkerRuntime, created_ids: list[str]) -> list[FindingRecord]:
        if self.cfg.reselect_losing_ideas:
            return [
                rec
                for rec in w.memory.records_view(stage=Stage.IDEA)
                if rec.created_worker == w.worker_id
            ]
        return [w.memory.get(rid) for rid in created_ids]

    def _select(self, w: _WorkerRuntime, cycle: int, pool: list[FindingRecord]):
        if self.cfg.selection_policy == "random":
            rng = random.Random(stable_seed(self.cfg.seed, w.worker_id, cycle, "select"))
            chosen = rng.choice(sorted(r.id for r in pool))
            return chosen, []
        return select_candidate(pool, self.cfg.acquisition)

    def _evaluate(self, w: _WorkerRuntime, record: FindingRecord) -> EvaluationResult:
        cfg = self.cfg
        eval_id = w.next_eval_id()
        if cfg.sandbox is not None:
            return harness.evaluate(
                record,
                cfg.sandbox,
                cfg.baseline,
                eval_id,
                cost_units=cfg.budget.implement_compute_cost,
                limiter=self.limiter,
            )
        return harness.evaluate_synthetic(
            record,
            cfg.space,
            cfg.baseline,
            eval_id,
            p_fail=cfg.p_fail,
            rng=random.Random(stable_seed(cfg.seed, cfg.space.seed, record.id, eval_id)),
            cost_units=cfg.budget.implement_compute_cost,
        )

    def _verify(self, w: _WorkerRuntime, record: FindingRecord, first: EvaluationResult) -> EvaluationResult:
        cfg = self.cfg
        eval_id = w.next_eval_id()
        if cfg.sandbox is not None:
            return harness.verify_rerun(
                record,
                cfg.sandbox,
                cfg.baseline,
                first,
                eval_id,
                rel_tolerance=cfg.rerun_rel_tolerance,
                cost_units=cfg.budget.implement_compute_cost,
                limiter=self.limiter,
            )
        return harness.verify_rerun_synthetic(
            record,
            cfg.space,
            cfg.baseline,
            first,
            eval_id,
            p_fail=cfg.p_fail,
            rel_tolerance=cfg.rerun_rel_tolerance,
            rng=random.Random(stable_seed(cfg.seed, cfg.space.seed, record.id, eval_id)),
            cost_units=cfg.budget.implement_compute_cost,
        )

    def _push_record(self, w: _WorkerRuntime, finding_id: str):
        self.shared.merge_records([w.memory.get(finding_id)], ts=self.clock.now())

    # -- approvals -------------------------------------------------------------------

    def list_pending(self) -> list[dict]:
        return self.log.with_state(
            lambda s: sorted(
                (dict(v) for v in s.pending_approvals.values()),
                key=lambda d: d["finding_id"],
            )
        )

    def resolve(self, finding_id: str, decision: str, reviewer: str, note: str = "") -> dict:
        """Resolve a parked promotion; decisions are permanent per evidence item."""
        if decision not in ("approve", "reject"):
            raise ConfigInvalid(f"decision must be approve or reject, got {decision!r}")
        if not reviewer:
            raise ConfigInvalid("reviewer is required for the audit trail")
        with self._approval_lock:
            pending, resolved, known = self.log.with_state(
                lambda s: (
                    dict(s.pending_approvals.get(finding_id) or {}),
                    dict(s.resolved_approvals),
                    finding_id in s.memory,
                )
            )
            if not pending:
                if any(key.startswith(f"{finding_id}:") for key in resolved):
                    raise AlreadyResolved(finding_id)
                if not known:
                    raise UnknownId(finding_id)
                raise NotPending(finding_id)
            evaluation_id = pending["evaluation_id"]
            if decision == "approve":
                self._charge("progress")
                confirmed = next(
                    (
                        e
                        for e in self.shared.get(finding_id).evidence
                        if e.evaluation_id == evaluation_id
                    ),
                    None,
                )
                justification = {
                    "kind": "approval",
                    "reviewer": reviewer,
                    "note": note,
                    "evaluation_id": evaluation_id,
                    "metric_value": confirmed.metric_value if confirmed else None,
                }
                self.shared.promote(
                    finding_id, Stage.PROGRESS, justification, ts=self.clock.now()
                )
            self._emit(
                {
                    "event": "approval_resolved",
                    "finding_id": finding_id,
                    "evaluation_id": evaluation_id,
                    "decision": decision,
                    "reviewer": reviewer,
                    "note": note,
                }
            )
            return {
                "finding_id": finding_id,
                "evaluation_id": evaluation_id,
                "decision": decision,
            }

    # -- controls -----------------------------------------------------------------------

    def pause(self) -> bool:
        """Cycle-boundary-safe pause; returns False when already paused."""
        with self._control_lock:
            if not self._run_event.is_set():
                return False
            self._run_event.clear()
            return True

    def resume(self) -> bool:
        with self._control_lock:
            if self._run_event.is_set():
                return False
            self._run_event.set()
            return True

    def stop(self) -> bool:
        with self._control_lock:
            if self._stop:
                return False
            self._stop = True
            self._run_event.set()
            return True

    @property
    def paused(self) -> bool:
        return not self._run_event.is_set()

    # -- reporting ----------------------------------------------------------------------

    def final_report(self) -> dict:
        def build(state: CampaignState) -> dict:
            deaths = [
                w.worker_id for w in state.workers.values() if w.status == "dead"
            ]
            return {
                "workers": self.cfg.workers,
                "selection_policy": self.cfg.selection_policy,
                "seed": self.cfg.seed,
                "progress_count": state.progress_count(),
                "best_metric": state.best_metric,
                "best_finding_id": state.best_finding_id,
                "budget_spent": dict(state.spent),
                "cycles": {w.worker_id: w.cycle for w in state.workers.values()},
                "deaths": deaths,
                "partial_failure": bool(deaths),
                "pending_approvals": sorted(state.pending_approvals),
                "record_count": len(state.memory),
                "wall_seconds": time.monotonic() - self._start_wall,
            }

        return self.log.with_state(build)


def run_campaign(cfg: CampaignConfig, log_path: Optional[str] = None) -> tuple[CampaignEngine, dict]:
    """Run a campaign to completion; returns the engine and its final report."""
    engine = CampaignEngine(cfg, log_path=log_path)
    report = engine.run()
    return engine, report


def resume_campaign(log_path: str) -> CampaignEngine:
    """Rebuild an engine from a campaign log so it can continue where it stopped."""
    events = load_campaign_events(log_path, drop_torn_tail=True)
    with open(log_path, "r", encoding="utf-8") as fh:
        raw_count = sum(1 for line in fh if line.strip())
    if raw_count != len(events):
        # a torn final line was dropped; rewrite so new appends extend a clean log
        with open(log_path, "w", encoding="utf-8") as fh:
            for ev in events:
                fh.write(dumps_canonical(ev) + "\n")
    state = replay_campaign_state(events)
    if state.config_dict is None:
        raise CorruptLog("log has no campaign_started event")
    cfg = CampaignConfig.from_dict(state.config_dict)
    engine = CampaignEngine(cfg, log_path=log_path, _preloaded=events)
    engine.cfg.budget.preload(state.spent)
    shared_view = engine.log.with_state(lambda s: s.memory.snapshot())
    # the log already carries these records; rebuild the store without re-logging
    engine.shared._event_sink = None
    engine.shared.merge_records(shared_view)
    engine.shared._event_sink = engine.log.append
    for w in engine.workers.values():
        view = state.workers.get(w.worker_id)
        if view is not None:
            w.cycle = view.cycle
        w.memory.merge_records(shared_view)
        prefix = f"{w.worker_id}-f"
        counters = [
            int(rid[len(prefix):])
            for rid in engine.shared.ids()
            if rid.startswith(prefix)
        ]
        w.finding_counter = max(counters, default=0)
        eval_ids = [
            e.evaluation_id
            for rec in w.memory.records()
            for e in rec.evidence
            if e.evaluation_id.startswith(f"{w.worker_id}-e")
        ]
        w.eval_counter = max(
            (int(eid.split("-e")[-1]) for eid in eval_ids), default=0
        )
    return engine
