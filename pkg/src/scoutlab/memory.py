"""Findings memory: append-only event log with a materialized record view.

The log is the source of truth (one self-describing JSON object per line,
`.findings.jsonl`); the in-memory dict of FindingRecords is rebuilt by
folding events, so replicas merge, replay, and audit for free. Writes are
serialized through a single lock per store; records are immutable except
for the monotone stage and append-only evidence.
"""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence, Union

from scoutlab import kernels
from scoutlab.errors import (
    ConflictingImmutableField,
    CorruptLine,
    DuplicateId,
    EmbeddingMissing,
    IllegalTransition,
    InvariantViolation,
    MissingJustification,
    SchemaVersionMismatch,
    StorageFailure,
    UnknownId,
)
from scoutlab.records import (
    SCHEMA_VERSION,
    EvaluationResult,
    FindingRecord,
    Stage,
    ValuationVector,
    Verdict,
    tokenize,
)

LOG_SUFFIX = ".findings.jsonl"

#: Event kinds owned by the memory itself; campaign kinds pass through opaquely.
MEMORY_EVENT_KINDS = frozenset(
    {"record_created", "record_merged", "valuation_set", "promoted", "evidence_appended"}
)


def dumps_canonical(obj: Any) -> str:
    """Canonical single-line JSON; stable across runs and platforms."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class RetrievalScorer(enum.Enum):
    COSINE_EMBEDDING = "cosine_embedding"
    LEXICAL_OVERLAP = "lexical_overlap"


@dataclass(frozen=True)
class RetrievalConfig:
    """Top-K retrieval knobs; k defaults to the campaign-standard 15."""

    k: int = 15
    scorer: RetrievalScorer = RetrievalScorer.LEXICAL_OVERLAP

    def __post_init__(self):
        if self.k < 1:
            raise InvariantViolation("retrieval k must be >= 1")

    def to_dict(self) -> dict:
        return {"k": self.k, "scorer": self.scorer.value}

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievalConfig":
        return cls(k=int(d.get("k", 15)), scorer=RetrievalScorer(d.get("scorer", "lexical_overlap")))


def lexical_score(
    query_tokens: frozenset, record: FindingRecord, cache: Optional[dict] = None
) -> float:
    """Jaccard overlap between query tokens and the hypothesis text tokens."""
    if cache is not None:
        rec_tokens = cache.get(record.id)
        if rec_tokens is None:
            rec_tokens = tokenize(record.hypothesis.text())
            cache[record.id] = rec_tokens
    else:
        rec_tokens = tokenize(record.hypothesis.text())
    if not query_tokens or not rec_tokens:
        return 0.0
    inter = len(query_tokens & rec_tokens)
    union = len(query_tokens | rec_tokens)
    return inter / union


def _normalize_justification(justification: Any) -> dict:
    if isinstance(justification, EvaluationResult):
        return {
            "kind": "evaluation",
            "evaluation_id": justification.evaluation_id,
            "verdict": justification.verdict.value,
            "metric_value": justification.metric_value,
        }
    if isinstance(justification, str):
        return {"kind": "note", "note": justification}
    if isinstance(justification, dict):
        return dict(justification)
    raise InvariantViolation(f"unsupported justification type {type(justification).__name__}")


def merge_record_pair(local: FindingRecord, remote: FindingRecord) -> FindingRecord:
    """Pure merge of two states of the same record.

    stage = max; evidence = union deduplicated by evaluation id (local order
    first, new entries in evaluation-id order); other conflicting fields use
    deterministic commutative rules. Hypothesis conflicts are the caller's
    job to reject.
    """
    merged = local.clone()
    merged.stage = Stage(max(int(local.stage), int(remote.stage)))
    if remote.valuation.as_tuple() > local.valuation.as_tuple():
        merged.valuation = remote.valuation
    for name in ("embedding", "latent"):
        a, b = getattr(local, name), getattr(remote, name)
        if a is None:
            setattr(merged, name, b)
        elif b is not None and b > a:
            setattr(merged, name, b)
    if tuple(remote.lineage) != tuple(local.lineage):
        merged.lineage = tuple(sorted(set(local.lineage) | set(remote.lineage)))
    seen = {e.evaluation_id for e in local.evidence}
    extra = sorted(
        (e for e in remote.evidence if e.evaluation_id not in seen),
        key=lambda e: e.evaluation_id,
    )
    merged.evidence.extend(e for e in extra)
    merged.baseline_ref = max(local.baseline_ref, remote.baseline_ref)
    merged.created_cycle = min(local.created_cycle, remote.created_cycle)
    merged.created_worker = min(local.created_worker, remote.created_worker)
    merged.created_ts = min(local.created_ts, remote.created_ts)
    merged.updated_ts = max(local.updated_ts, remote.updated_ts)
    return merged


class FindingsMemory:
    """Mergeable, staged store of FindingRecords backed by an event log."""

    def __init__(self, log_path: Optional[str] = None, event_sink=None):
        self._records: dict[str, FindingRecord] = {}
        self._events: list[dict] = []
        self._lock = threading.RLock()
        self._event_sink = event_sink
        self._token_cache: dict[str, frozenset] = {}
        self._log_path = log_path
        self._log_file = None
        if log_path is not None:
            try:
                self._log_file = open(log_path, "a", encoding="utf-8")
            except OSError as exc:
                raise StorageFailure(f"cannot open record log {log_path}: {exc}") from exc

    # -- plumbing -------------------------------------------------------------

    def close(self):
        with self._lock:
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None

    def _record_event(self, ev: dict):
        """Retain, persist, and forward one event (lock held by caller)."""
        self._events.append(ev)
        if self._log_file is not None:
            try:
                self._log_file.write(dumps_canonical(ev) + "\n")
                self._log_file.flush()
            except OSError as exc:
                raise StorageFailure(f"record log write failed: {exc}") from exc
        if self._event_sink is not None:
            self._event_sink(ev)

    def _emit(self, ev: dict):
        self._apply_event(ev)
        self._record_event(ev)

    # -- the fold -------------------------------------------------------------

    def _apply_event(self, ev: dict):
        """Apply one event to the materialized view; raises on corruption."""
        kind = ev.get("event")
        if kind == "record_created":
            record = FindingRecord.from_dict(ev["record"])
            record.validate()
            if record.id in self._records:
                raise DuplicateId(record.id)
            self._records[record.id] = record
        elif kind == "record_merged":
            remote = FindingRecord.from_dict(ev["record"])
            remote.validate()
            local = self._records.get(remote.id)
            if local is None:
                raise UnknownId(remote.id)
            if local.hypothesis != remote.hypothesis:
                raise ConflictingImmutableField(remote.id)
            merged = merge_record_pair(local, remote)
            merged.validate()
            self._records[remote.id] = merged
        elif kind == "valuation_set":
            record = self._require(ev["id"])
            record.valuation = ValuationVector.from_dict(ev["valuation"])
            record.updated_ts = float(ev.get("ts", record.updated_ts))
        elif kind == "promoted":
            record = self._require(ev["id"])
            from_stage = Stage.from_wire(ev["from_stage"])
            to_stage = Stage.from_wire(ev["to_stage"])
            if record.stage is not from_stage:
                raise IllegalTransition(
                    f"{record.id}: log says {from_stage.wire} but record is {record.stage.wire}"
                )
            if int(to_stage) != int(from_stage) + 1:
                raise IllegalTransition(f"{record.id}: {from_stage.wire} -> {to_stage.wire}")
            record.stage = to_stage
            record.updated_ts = float(ev.get("ts", record.updated_ts))
            record.validate()
        elif kind == "evidence_appended":
            record = self._require(ev["id"])
            result = EvaluationResult.from_dict(ev["evaluation"])
            if record.stage is Stage.IDEA:
                raise InvariantViolation(f"{record.id}: evidence on an Idea-stage record")
            if any(e.evaluation_id == result.evaluation_id for e in record.evidence):
                raise DuplicateId(result.evaluation_id)
            record.evidence.append(result)
            record.updated_ts = float(ev.get("ts", record.updated_ts))
        else:
            # campaign-level kinds pass through; the orchestrator folds them
            pass

    def _require(self, record_id: str) -> FindingRecord:
        record = self._records.get(record_id)
        if record is None:
            raise UnknownId(record_id)
        return record

    # -- reads ----------------------------------------------------------------

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def __contains__(self, record_id: str) -> bool:
        with self._lock:
            return record_id in self._records

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._records)

    def get(self, record_id: str) -> FindingRecord:
        with self._lock:
            return self._require(record_id).clone()

    def records(self, stage: Optional[Stage] = None) -> list[FindingRecord]:
        with self._lock:
            out = [
                r.clone()
                for r in self._records.values()
                if stage is None or r.stage is stage
            ]
        out.sort(key=lambda r: r.id)
        return out

    def records_view(self, stage: Optional[Stage] = None) -> list[FindingRecord]:
        """Live references, sorted by id. Read-only use by the owning worker;
        anyone else must go through records()/get()."""
        with self._lock:
            out = [
                r
                for r in self._records.values()
                if stage is None or r.stage is stage
            ]
        out.sort(key=lambda r: r.id)
        return out

    def count_stage(self, stage: Stage) -> int:
        with self._lock:
            return sum(1 for r in self._records.values() if r.stage is stage)

    def events(self) -> list[dict]:
        with self._lock:
            return list(self._events)

    def snapshot(self) -> list[FindingRecord]:
        """Deep copies of every record, for delta pushes."""
        with self._lock:
            return [r.clone() for r in self._records.values()]

    def state_fingerprint(self) -> dict[str, tuple]:
        """Knowledge-state identity used by merge-law and convergence checks."""
        with self._lock:
            return {rid: r.fingerprint() for rid, r in self._records.items()}

    # -- writes ---------------------------------------------------------------

    def append_record(self, record: FindingRecord) -> str:
        record.validate()
        with self._lock:
            if record.id in self._records:
                raise DuplicateId(record.id)
            self._emit(
                {
                    "schema_version": SCHEMA_VERSION,
                    "event": "record_created",
                    "record": record.to_dict(),
                }
            )
        return record.id

    def set_valuation(self, record_id: str, valuation: ValuationVector, ts: float = 0.0):
        with self._lock:
            self._require(record_id)
            self._emit(
                {
                    "schema_version": SCHEMA_VERSION,
                    "event": "valuation_set",
                    "id": record_id,
                    "valuation": valuation.to_dict(),
                    "ts": ts,
                }
            )

    def promote(
        self,
        record_id: str,
        to_stage: Stage,
        justification: Union[EvaluationResult, dict, str],
        ts: float = 0.0,
    ) -> FindingRecord:
        """Advance a record exactly one stage, logging the justification."""
        just = _normalize_justification(justification)
        with self._lock:
            record = self._require(record_id)
            if int(to_stage) != int(record.stage) + 1:
                raise IllegalTransition(
                    f"{record_id}: {record.stage.wire} -> {to_stage.wire}"
                )
            if to_stage is Stage.PROGRESS:
                eval_id = just.get("evaluation_id")
                if eval_id is None:
                    raise MissingJustification(
                        f"{record_id}: Progress promotion needs an Improvement evaluation"
                    )
                entry = next(
                    (e for e in record.evidence if e.evaluation_id == eval_id), None
                )
                if entry is None or entry.verdict is not Verdict.IMPROVEMENT:
                    raise MissingJustification(
                        f"{record_id}: evaluation {eval_id} is not an Improvement result in evidence"
                    )
            self._emit(
                {
                    "schema_version": SCHEMA_VERSION,
                    "event": "promoted",
                    "id": record_id,
                    "from_stage": record.stage.wire,
                    "to_stage": to_stage.wire,
                    "justification": just,
                    "ts": ts,
                }
            )
            return self._records[record_id].clone()

    def append_evidence(self, record_id: str, result: EvaluationResult, ts: float = 0.0) -> FindingRecord:
        result.validate()
        with self._lock:
            record = self._require(record_id)
            if record.stage is Stage.IDEA:
                raise InvariantViolation(f"{record_id}: evidence on an Idea-stage record")
            if any(e.evaluation_id == result.evaluation_id for e in record.evidence):
                raise DuplicateId(result.evaluation_id)
            self._emit(
                {
                    "schema_version": SCHEMA_VERSION,
                    "event": "evidence_appended",
                    "id": record_id,
                    "evaluation": result.to_dict(),
                    "ts": ts,
                }
            )
            return self._records[record_id].clone()

    # -- retrieval ------------------------------------------------------------

    def retrieve_top_k(self, query, cfg: RetrievalConfig) -> list[FindingRecord]:
        """k highest-scoring records, descending score, ties broken by ascending id."""
        with self._lock:
            ordered = sorted(self._records.values(), key=lambda r: r.id)
            if not ordered:
                return []
            if cfg.scorer is RetrievalScorer.LEXICAL_OVERLAP:
                if not isinstance(query, str):
                    raise InvariantViolation("lexical scorer needs a text query")
                qtok = tokenize(query)
                scores = [lexical_score(qtok, r, self._token_cache) for r in ordered]
            else:
                if isinstance(query, str):
                    raise EmbeddingMissing("cosine scorer needs an embedding query")
                missing = [r.id for r in ordered if r.embedding is None]
                if missing:
                    raise EmbeddingMissing(
                        f"records without embeddings: {', '.join(missing[:5])}"
                    )
                query = [float(x) for x in query]
                if any(len(r.embedding) != len(query) for r in ordered):
                    raise EmbeddingMissing("embedding dimension mismatch with query")
                scores = kernels.cosine_scores(query, [r.embedding for r in ordered])
            ranked = sorted(
                zip(scores, ordered), key=lambda pair: (-pair[0], pair[1].id)
            )
            return [r.clone() for _, r in ranked[: cfg.k]]

    # -- merge ----------------------------------------------------------------

    def merge_records(self, deltas: Iterable[FindingRecord], ts: float = 0.0) -> "FindingsMemory":
        """Merge remote record snapshots into this replica.

        Validates every delta before applying anything, so a conflicting
        replica aborts the whole merge; the surviving log stays append-only
        (new knowledge arrives as record_created / record_merged events).
        The union of two valid states of the same record is itself valid
        (stage=max keeps its justifying evidence through the union), so no
        per-pair re-validation is needed.
        """
        deltas = sorted(deltas, key=lambda r: r.id)
        with self._lock:
            seen: set[str] = set()
            for delta in deltas:
                if delta.id in seen:
                    raise DuplicateId(f"delta set repeats id {delta.id}")
                seen.add(delta.id)
                delta.validate()
                local = self._records.get(delta.id)
                if local is not None and local.hypothesis != delta.hypothesis:
                    raise ConflictingImmutableField(
                        f"{delta.id}: hypothesis differs between replicas"
                    )
            for delta in deltas:
                local = self._records.get(delta.id)
                if local is None:
                    self._emit(
                        {
                            "schema_version": SCHEMA_VERSION,
                            "event": "record_created",
                            "record": delta.to_dict(),
                        }
                    )
                    continue
                if (
                    delta.updated_ts <= local.updated_ts
                    and delta.created_ts >= local.created_ts
                    and delta.fingerprint() == local.fingerprint()
                ):
                    continue
                merged = merge_record_pair(local, delta)
                if (
                    merged.updated_ts == local.updated_ts
                    and merged.created_ts == local.created_ts
                    and merged.fingerprint() == local.fingerprint()
                ):
                    continue  # delta holds nothing the replica does not already know
                self._emit(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "event": "record_merged",
                        "record": delta.to_dict(),
                        "ts": ts,
                    }
                )
        return self

    def copy(self) -> "FindingsMemory":
        """Independent in-memory replica with the same view and event history."""
        out = FindingsMemory()
        with self._lock:
            out._records = {rid: r.clone() for rid, r in self._records.items()}
            out._events = [dict(ev) for ev in self._events]
        return out

    # -- persistence ----------------------------------------------------------

    def export_log(self, path: str) -> int:
        """Write the full event log; returns the number of records in the view."""
        with self._lock:
            try:
                with open(path, "w", encoding="utf-8") as fh:
                    for ev in self._events:
                        fh.write(dumps_canonical(ev) + "\n")
            except OSError as exc:
                raise StorageFailure(f"export to {path} failed: {exc}") from exc
            return len(self._records)

    @classmethod
    def import_log(cls, path: str, event_sink=None) -> "FindingsMemory":
        """Rebuild a memory by replaying a log file.

        Unknown event kinds (campaign-level lines) are retained verbatim so a
        re-export reproduces the file byte for byte.
        """
        memory = cls(event_sink=None)
        try:
            fh = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise StorageFailure(f"cannot read {path}: {exc}") from exc
        with fh:
            for line_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    ev = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise CorruptLine(line_no, f"invalid JSON: {exc.msg}")
                if not isinstance(ev, dict) or "event" not in ev:
                    raise CorruptLine(line_no, "not an event object")
                version = ev.get("schema_version")
                if version != SCHEMA_VERSION:
                    raise SchemaVersionMismatch(
                        f"line {line_no}: schema_version {version!r}, expected {SCHEMA_VERSION}"
                    )
                try:
                    memory._apply_event(ev)
                except (
                    DuplicateId,
                    UnknownId,
                    IllegalTransition,
                    InvariantViolation,
                    ConflictingImmutableField,
                    KeyError,
                    TypeError,
                    ValueError,
                ) as exc:
                    raise CorruptLine(line_no, f"{type(exc).__name__}: {exc}")
                memory._events.append(ev)
        memory._event_sink = event_sink
        return memory


def merge_deltas(local: FindingsMemory, deltas: Iterable[FindingRecord]) -> FindingsMemory:
    """Merge remote deltas into the local replica and return it."""
    return local.merge_records(deltas)
