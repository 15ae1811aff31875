"""Domain types shared across the engine.

A finding is one unit of knowledge: a structured hypothesis, its surrogate
valuation, and any empirical evidence, at one of three lifecycle stages
(idea -> implement -> progress). Everything here is plain data with
validation; behaviour lives in the memory/acquisition/harness modules.
"""

from __future__ import annotations

import enum
import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

from scoutlab.errors import InvariantViolation

SCHEMA_VERSION = 1


def stable_seed(*parts: Any) -> int:
    """Platform-stable 63-bit seed derived from the given parts.

    Used everywhere a worker/cycle-scoped RNG is needed so that randomness
    does not depend on thread scheduling or PYTHONHASHSEED.
    """
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class Stage(enum.IntEnum):
    """Lifecycle stage; the integer order is the promotion/merge order."""

    IDEA = 0
    IMPLEMENT = 1
    PROGRESS = 2

    @property
    def wire(self) -> str:
        return self.name.lower()

    @classmethod
    def from_wire(cls, name: str) -> "Stage":
        try:
            return cls[name.upper()]
        except KeyError:
            raise InvariantViolation(f"unknown stage {name!r}") from None


class Verdict(enum.Enum):
    """Outcome class of one expensive evaluation."""

    IMPROVEMENT = "improvement"
    NO_IMPROVEMENT = "no_improvement"
    IMPLEMENTATION_ERROR = "implementation_error"
    TIMEOUT = "timeout"
    VERIFICATION_MISMATCH = "verification_mismatch"

    @classmethod
    def from_wire(cls, name: str) -> "Verdict":
        try:
            return cls(name)
        except ValueError:
            raise InvariantViolation(f"unknown verdict {name!r}") from None


#: Verdicts that must not carry a metric value.
NO_METRIC_VERDICTS = frozenset({Verdict.IMPLEMENTATION_ERROR, Verdict.TIMEOUT})


class Direction(enum.Enum):
    HIGHER_IS_BETTER = "higher"
    LOWER_IS_BETTER = "lower"


@dataclass(frozen=True)
class ValuationVector:
    """Surrogate estimate <v_u, v_q, v_e>: integer scores on a 0-100 scale."""

    v_u: int
    v_q: int
    v_e: int

    def __post_init__(self):
        for name in ("v_u", "v_q", "v_e"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise InvariantViolation(f"{name} must be an integer, got {value!r}")
            if not 0 <= value <= 100:
                raise InvariantViolation(f"{name}={value} outside [0, 100]")

    @classmethod
    def clamped(cls, v_u: float, v_q: float, v_e: float) -> tuple["ValuationVector", bool]:
        """Round and clamp arbitrary scores into range; reports whether clamping fired."""
        out = []
        touched = False
        for raw in (v_u, v_q, v_e):
            value = int(round(raw))
            if value != raw:
                touched = True
            if value < 0:
                value, touched = 0, True
            elif value > 100:
                value, touched = 100, True
            out.append(value)
        return cls(*out), touched

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.v_u, self.v_q, self.v_e)

    def to_dict(self) -> dict:
        return {"v_u": self.v_u, "v_q": self.v_q, "v_e": self.v_e}

    @classmethod
    def from_dict(cls, d: dict) -> "ValuationVector":
        return cls(int(d["v_u"]), int(d["v_q"]), int(d["v_e"]))


@dataclass(frozen=True)
class Hypothesis:
    """Structured hypothesis text; immutable once the record is created."""

    title: str
    motivation: str = ""
    method: str = ""
    expected_gain: str = ""

    def text(self) -> str:
        return " ".join((self.title, self.motivation, self.method, self.expected_gain))

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "motivation": self.motivation,
            "method": self.method,
            "expected_gain": self.expected_gain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hypothesis":
        return cls(
            title=d["title"],
            motivation=d.get("motivation", ""),
            method=d.get("method", ""),
            expected_gain=d.get("expected_gain", ""),
        )


@dataclass(frozen=True)
class BaselineSpec:
    """The human SOTA metric a campaign tries to surpass."""

    name: str
    metric_name: str
    metric_value: float
    direction: Direction = Direction.HIGHER_IS_BETTER
    min_margin: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.metric_value):
            raise InvariantViolation("baseline metric_value must be finite")
        if self.min_margin < 0:
            raise InvariantViolation("min_margin must be non-negative")

    def improves(self, metric: float) -> bool:
        """Strictly better than the baseline by at least min_margin."""
        if self.direction is Direction.HIGHER_IS_BETTER:
            return metric > self.metric_value + self.min_margin
        return metric < self.metric_value - self.min_margin

    def better(self, a: float, b: float) -> bool:
        """True when metric a is strictly better than metric b."""
        if self.direction is Direction.HIGHER_IS_BETTER:
            return a > b
        return a < b

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metric_name": self.metric_name,
            "metric_value": self.metric_value,
            "direction": self.direction.value,
            "min_margin": self.min_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineSpec":
        return cls(
            name=d["name"],
            metric_name=d["metric_name"],
            metric_value=float(d["metric_value"]),
            direction=Direction(d.get("direction", "higher")),
            min_margin=float(d.get("min_margin", 0.0)),
        )


@dataclass
class EvaluationResult:
    """Outcome of one expensive evaluation of a finding."""

    evaluation_id: str
    finding_id: str
    verdict: Verdict
    metric_value: Optional[float] = None
    primary_log: str = ""
    verification_log: str = ""
    wall_seconds: float = 0.0
    cost_units: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.wall_seconds < 0:
            raise InvariantViolation("wall_seconds must be >= 0")
        if self.verdict in NO_METRIC_VERDICTS and self.metric_value is not None:
            raise InvariantViolation(
                f"verdict {self.verdict.value} must not carry a metric value"
            )

    def to_dict(self) -> dict:
        return {
            "evaluation_id": self.evaluation_id,
            "finding_id": self.finding_id,
            "verdict": self.verdict.value,
            "metric_value": self.metric_value,
            "primary_log": self.primary_log,
            "verification_log": self.verification_log,
            "wall_seconds": self.wall_seconds,
            "cost_units": self.cost_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationResult":
        return cls(
            evaluation_id=d["evaluation_id"],
            finding_id=d["finding_id"],
            verdict=Verdict.from_wire(d["verdict"]),
            metric_value=d.get("metric_value"),
            primary_log=d.get("primary_log", ""),
            verification_log=d.get("verification_log", ""),
            wall_seconds=float(d.get("wall_seconds", 0.0)),
            cost_units=float(d.get("cost_units", 0.0)),
        )

    def fingerprint(self) -> tuple:
        return (
            self.evaluation_id,
            self.finding_id,
            self.verdict.value,
            self.metric_value,
            self.primary_log,
            self.verification_log,
            self.wall_seconds,
            self.cost_units,
        )


@dataclass
class FindingRecord:
    """One unit of the findings memory.

    id and hypothesis are immutable after creation; evidence only grows;
    stage only advances one step at a time (idea -> implement -> progress).
    """

    id: str
    hypothesis: Hypothesis
    stage: Stage = Stage.IDEA
    valuation: ValuationVector = field(default_factory=lambda: ValuationVector(0, 0, 0))
    embedding: Optional[tuple[float, ...]] = None
    lineage: tuple[str, ...] = ()
    evidence: list[EvaluationResult] = field(default_factory=list)
    baseline_ref: str = ""
    created_cycle: int = 0
    created_worker: str = ""
    created_ts: float = 0.0
    updated_ts: float = 0.0
    latent: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.embedding is not None:
            self.embedding = tuple(float(x) for x in self.embedding)
        if self.latent is not None:
            self.latent = tuple(float(x) for x in self.latent)
        self.lineage = tuple(self.lineage)

    def validate(self):
        if not self.id:
            raise InvariantViolation("record id must be non-empty")
        if self.stage is Stage.IDEA and self.evidence:
            raise InvariantViolation("Idea-stage record must have empty evidence")
        if self.stage is Stage.PROGRESS and not any(
            e.verdict is Verdict.IMPROVEMENT for e in self.evidence
        ):
            raise InvariantViolation(
                "Progress-stage record needs at least one Improvement result"
            )
        seen = set()
        for e in self.evidence:
            e.validate()
            if e.evaluation_id in seen:
                raise InvariantViolation(f"duplicate evidence id {e.evaluation_id}")
            seen.add(e.evaluation_id)

    def clone(self) -> "FindingRecord":
        return replace(self, evidence=[replace(e) for e in self.evidence])

    def best_metric(self) -> Optional[float]:
        values = [e.metric_value for e in self.evidence if e.metric_value is not None]
        return max(values) if values else None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "hypothesis": self.hypothesis.to_dict(),
            "stage": self.stage.wire,
            "valuation": self.valuation.to_dict(),
            "embedding": list(self.embedding) if self.embedding is not None else None,
            "lineage": list(self.lineage),
            "evidence": [e.to_dict() for e in self.evidence],
            "baseline_ref": self.baseline_ref,
            "created_cycle": self.created_cycle,
            "created_worker": self.created_worker,
            "created_ts": self.created_ts,
            "updated_ts": self.updated_ts,
            "latent": list(self.latent) if self.latent is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FindingRecord":
        return cls(
            id=d["id"],
            hypothesis=Hypothesis.from_dict(d["hypothesis"]),
            stage=Stage.from_wire(d["stage"]),
            valuation=ValuationVector.from_dict(d["valuation"]),
            embedding=tuple(d["embedding"]) if d.get("embedding") is not None else None,
            lineage=tuple(d.get("lineage", ())),
            evidence=[EvaluationResult.from_dict(e) for e in d.get("evidence", [])],
            baseline_ref=d.get("baseline_ref", ""),
            created_cycle=int(d.get("created_cycle", 0)),
            created_worker=d.get("created_worker", ""),
            created_ts=float(d.get("created_ts", 0.0)),
            updated_ts=float(d.get("updated_ts", 0.0)),
            latent=tuple(d["latent"]) if d.get("latent") is not None else None,
        )

    def fingerprint(self) -> tuple:
        """Canonical knowledge-state identity.

        Evidence and lineage compare as sets and wall-clock timestamps are
        excluded: they are bookkeeping, not knowledge, and replicas may
        observe the same facts in different orders.
        """
        return (
            self.id,
            self.hypothesis.to_dict()["title"],
            self.hypothesis.motivation,
            self.hypothesis.method,
            self.hypothesis.expected_gain,
            int(self.stage),
            self.valuation.as_tuple(),
            self.embedding,
            frozenset(self.lineage),
            frozenset(e.fingerprint() for e in self.evidence),
            self.baseline_ref,
            self.created_cycle,
            self.created_worker,
            self.latent,
        )


def make_finding_id(worker: str, counter: int) -> str:
    """Worker-scoped, lexicographically ordered record id."""
    return f"{worker}-f{counter:05d}"


def make_evaluation_id(worker: str, counter: int) -> str:
    return f"{worker}-e{counter:05d}"


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> frozenset[str]:
    """Lowercase word tokens used by the lexical retrieval scorer."""
    return frozenset(_TOKEN_RE.findall(text.lower()))
