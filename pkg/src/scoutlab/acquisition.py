"""UCB acquisition: maps valuation vectors to selection scores.

score = w_u * v_u + w_q * v_q  (exploitation)  +  kappa * v_e  (exploration)

Pure functions over double-precision floats; ties are exact float equality
after computation and break by ascending record id, so selection is
deterministic across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from scoutlab.errors import EmptyBatch, InvariantViolation, StageViolation
from scoutlab.records import FindingRecord, Stage, ValuationVector


@dataclass(frozen=True)
class AcquisitionConfig:
    """Weights for the selection rule; defaults are the campaign-standard (1, 1, 1)."""

    w_u: float = 1.0
    w_q: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("w_u", "w_q", "kappa"):
            if getattr(self, name) < 0:
                raise InvariantViolation(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {"w_u": self.w_u, "w_q": self.w_q, "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionConfig":
        return cls(
            w_u=float(d.get("w_u", 1.0)),
            w_q=float(d.get("w_q", 1.0)),
            kappa=float(d.get("kappa", 1.0)),
        )


@dataclass(frozen=True)
class ScoredCandidate:
    """One batch member with its score decomposition; ucb_score is exactly the sum."""

    finding_id: str
    ucb_score: float
    exploitation_part: float
    exploration_part: float


def ucb_parts(v: ValuationVector, cfg: AcquisitionConfig) -> tuple[float, float]:
    """(exploitation, exploration) parts of the selection score."""
    return (cfg.w_u * v.v_u + cfg.w_q * v.v_q, cfg.kappa * v.v_e)


def ucb_score(v: ValuationVector, cfg: AcquisitionConfig) -> ScoredCandidate:
    """Score one valuation; finding_id is left empty for bare vectors."""
    exploitation, exploration = ucb_parts(v, cfg)
    return ScoredCandidate(
        finding_id="",
        ucb_score=exploitation + exploration,
        exploitation_part=exploitation,
        exploration_part=exploration,
    )


def score_record(record: FindingRecord, cfg: AcquisitionConfig) -> ScoredCandidate:
    exploitation, exploration = ucb_parts(record.valuation, cfg)
    return ScoredCandidate(
        finding_id=record.id,
        ucb_score=exploitation + exploration,
        exploitation_part=exploitation,
        exploration_part=exploration,
    )


def rank_candidates(
    batch: Iterable[FindingRecord], cfg: AcquisitionConfig
) -> list[ScoredCandidate]:
    """Full descending ranking, ties by ascending id."""
    scored = [score_record(r, cfg) for r in batch]
    scored.sort(key=lambda c: (-c.ucb_score, c.finding_id))
    return scored


def select_candidate(
    batch: Sequence[FindingRecord], cfg: AcquisitionConfig
) -> tuple[str, list[ScoredCandidate]]:
    """Argmax of the selection score over an Idea-stage batch.

    Returns the chosen id plus the full ranking (the dashboard and the
    ablation harness consume it).
    """
    batch = list(batch)
    if not batch:
        raise EmptyBatch("selection over an empty batch")
    for record in batch:
        if record.stage is not Stage.IDEA:
            raise StageViolation(f"{record.id} is at stage {record.stage.wire}")
    ranking = rank_candidates(batch, cfg)
    return ranking[0].finding_id, ranking
