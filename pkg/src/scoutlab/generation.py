"""Hypothesis generation and surrogate valuation.

Two pluggable backends produce draft hypothesis batches and score them with
<v_u, v_q, v_e> integer triples:

  * SyntheticBackend explores a SyntheticConceptSpace. Drafts carry latent
    points; exploitation samples near parents that have measured evidence,
    the rest of the batch probes the space uniformly. Valuation conventions
    (testbed, not task semantics): v_u is a noisy observation of the
    landscape height; v_q is the same observation damped by distance to the
    nearest lineage parent (implementability proxy); v_e is the normalized
    distance to the nearest already-evaluated point.
  * ExternalBackend POSTs structured JSON to a user-supplied HTTP endpoint
    and clamps whatever comes back into range. No vendor protocol, bounded
    retries, never blocks a cycle forever.

Both are deterministic given (seed, context): RNGs derive from the campaign
seed plus worker/cycle tags, never from global state.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Optional, Sequence

from scoutlab import kernels
from scoutlab.errors import BackendUnavailable, EmptyGeneration, InvariantViolation
from scoutlab.landscape import SyntheticConceptSpace
from scoutlab.records import (
    FindingRecord,
    Hypothesis,
    ValuationVector,
    stable_seed,
)

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 5
MAX_BATCH_SIZE = 64


@dataclass(frozen=True)
class EvaluatedPoint:
    """A latent point the campaign has already spent an evaluation on."""

    finding_id: str
    point: tuple[float, ...]
    metric: Optional[float] = None  # None when the evaluation failed


@dataclass(frozen=True)
class MemorySummary:
    """Memory-level statistics handed to the surrogate alongside Top-K context."""

    idea_count: int = 0
    implement_count: int = 0
    progress_count: int = 0
    best_metric: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "idea_count": self.idea_count,
            "implement_count": self.implement_count,
            "progress_count": self.progress_count,
            "best_metric": self.best_metric,
        }


@dataclass
class GeneratorContext:
    """Inputs for one generation/valuation round.

    top_k_findings is the retrieval output; evaluated_points and the
    worker/cycle tags are consumed by the synthetic backend (deterministic
    RNG derivation and the v_e convention); external backends ignore them.
    """

    top_k_findings: list[FindingRecord] = field(default_factory=list)
    target_limitation: str = ""
    batch_size: int = DEFAULT_BATCH_SIZE
    memory_summary: Optional[MemorySummary] = None
    evaluated_points: tuple[EvaluatedPoint, ...] = ()
    worker_id: str = "w00"
    cycle: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvariantViolation("batch_size must be >= 1")
        if self.batch_size > MAX_BATCH_SIZE:
            raise InvariantViolation(f"batch_size must be <= {MAX_BATCH_SIZE}")


@dataclass
class Draft:
    """One generated hypothesis before it becomes an Idea record."""

    hypothesis: Hypothesis
    lineage: tuple[str, ...] = ()
    latent: Optional[tuple[float, ...]] = None
    embedding: Optional[tuple[float, ...]] = None


def _softmax_pick(rng: random.Random, items: list, weights: list[float], temperature: float):
    lo = min(weights)
    exps = [math.exp((w - lo) / temperature) for w in weights]
    total = sum(exps)
    r = rng.random() * total
    acc = 0.0
    for item, e in zip(items, exps):
        acc += e
        if r <= acc:
            return item
    return items[-1]


class SyntheticBackend:
    """Generator + surrogate over a synthetic concept landscape."""

    def __init__(
        self,
        space: SyntheticConceptSpace,
        exploit_fraction: float = 0.6,
        child_sigma: float = 0.015,
        parent_temperature: float = 0.08,
        quality_rho: float = 0.25,
        parentless_quality: float = 0.5,
        exploration_radius: float = 0.35,
        seed_salt: int = 0,
    ):
        self.space = space
        self.exploit_fraction = exploit_fraction
        self.child_sigma = child_sigma
        self.parent_temperature = parent_temperature
        self.quality_rho = quality_rho
        self.parentless_quality = parentless_quality
        self.exploration_radius = exploration_radius
        self.seed_salt = seed_salt

    # -- helpers ---------------------------------------------------------------

    def _rng(self, ctx: GeneratorContext, tag: str) -> random.Random:
        return random.Random(
            stable_seed(self.space.seed, self.seed_salt, ctx.worker_id, ctx.cycle, tag)
        )

    def _parents(self, ctx: GeneratorContext) -> list[tuple[str, tuple[float, ...], float]]:
        """Latent points worth exploiting: anything with a measured metric."""
        seen: dict[str, tuple[str, tuple[float, ...], float]] = {}
        for rec in ctx.top_k_findings:
            if rec.latent is None:
                continue
            metric = rec.best_metric()
            if metric is not None:
                seen[rec.id] = (rec.id, rec.latent, metric)
        for ep in ctx.evaluated_points:
            if ep.metric is not None and ep.finding_id not in seen:
                seen[ep.finding_id] = (ep.finding_id, ep.point, ep.metric)
        return sorted(seen.values())

    def _hypothesis(self, ctx: GeneratorContext, point: Sequence[float], parent: Optional[str]) -> Hypothesis:
        coords = ", ".join(f"{x:.4f}" for x in point)
        region = " ".join(f"r{int(x * 10):02d}" for x in point)
        if parent:
            title = f"Refine {ctx.target_limitation} near {parent} at ({coords})"
            motivation = (
                f"Builds on measured finding {parent}; region tag {region}."
            )
        else:
            title = f"Probe {ctx.target_limitation} at ({coords})"
            motivation = f"Unexplored region tag {region}."
        return Hypothesis(
            title=title,
            motivation=motivation,
            method=f"Instantiate the candidate at concept point ({coords}) and run the task benchmark.",
            expected_gain="Surpass the reference baseline on the task metric.",
        )

    # -- backend API -------------------------------------------------------------

    def generate(self, ctx: GeneratorContext) -> list[Draft]:
        """batch_size drafts; exploitation samples near measured parents."""
        rng = self._rng(ctx, "generate")
        parents = self._parents(ctx)
        drafts: list[Draft] = []
        d = self.space.dimension
        for _ in range(ctx.batch_size):
            if parents and rng.random() < self.exploit_fraction:
                pid, ppoint, _ = _softmax_pick(
                    rng, parents, [p[2] for p in parents], self.parent_temperature
                )
                point = tuple(
                    min(1.0, max(0.0, x + rng.gauss(0.0, self.child_sigma)))
                    for x in ppoint
                )
                lineage = (pid,)
                parent = pid
            else:
                point = tuple(rng.random() for _ in range(d))
                lineage = ()
                parent = None
            drafts.append(
                Draft(
                    hypothesis=self._hypothesis(ctx, point, parent),
                    lineage=lineage,
                    latent=point,
                    embedding=point,
                )
            )
        return drafts

    def valuate(self, drafts: Sequence[Draft], ctx: GeneratorContext) -> list[ValuationVector]:
        """One integer <v_u, v_q, v_e> per draft, components clamped into [0, 100]."""
        if not drafts:
            raise InvariantViolation("valuate needs a non-empty draft list")
        rng = self._rng(ctx, "valuate")
        parent_points = {
            rec.id: rec.latent for rec in ctx.top_k_findings if rec.latent is not None
        }
        for ep in ctx.evaluated_points:
            parent_points.setdefault(ep.finding_id, ep.point)
        eval_points = [list(ep.point) for ep in ctx.evaluated_points]
        out = []
        for draft in drafts:
            if draft.latent is None:
                raise InvariantViolation("synthetic valuation needs draft latent points")
            obs = self.space.observe(draft.latent, rng)
            obs = min(1.0, max(0.0, obs))
            lineage_pts = [
                list(parent_points[pid]) for pid in draft.lineage if pid in parent_points
            ]
            if lineage_pts:
                d_par = kernels.min_distance(list(draft.latent), lineage_pts)
                damp = math.exp(-d_par / self.quality_rho)
            else:
                damp = self.parentless_quality
            if eval_points:
                d_eval = kernels.min_distance(list(draft.latent), eval_points)
                explore = min(1.0, d_eval / self.exploration_radius)
            else:
                explore = 1.0
            vec, _ = ValuationVector.clamped(
                100.0 * obs, 100.0 * obs * damp, 100.0 * explore
            )
            out.append(vec)
        return out


class ExternalBackend:
    """Adapter to a text-completion-style HTTP service.

    Wire contract: POST JSON to the configured URL.
      generate: {"op": "generate", "limitation", "batch_size", "context"}
         -> {"drafts": [{"title", "motivation", "method", "expected_gain",
                          "lineage"?, "embedding"?, "latent"?}, ...]}
      valuate:  {"op": "valuate", "limitation", "drafts": [...]}
         -> {"valuations": [{"v_u", "v_q", "v_e"}, ...]}
    Out-of-range or non-integer scores are clamped and logged, not fatal.
    """

    def __init__(
        self,
        url: str,
        timeout_seconds: float = 30.0,
        max_retries: int = 2,
        retry_backoff_seconds: float = 0.5,
    ):
        self.url = url
        self.timeout_seconds = timeout_seconds
        self.max_retries = max_retries
        self.retry_backoff_seconds = retry_backoff_seconds

    def _post(self, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                req = urllib.request.Request(
                    self.url, data=body, headers={"Content-Type": "application/json"}
                )
                with urllib.request.urlopen(req, timeout=self.timeout_seconds) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except (urllib.error.URLError, OSError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.retry_backoff_seconds * (attempt + 1))
        raise BackendUnavailable(f"backend at {self.url} unreachable: {last_error}")

    def generate(self, ctx: GeneratorContext) -> list[Draft]:
        payload = {
            "op": "generate",
            "limitation": ctx.target_limitation,
            "batch_size": ctx.batch_size,
            "context": {
                "findings": [rec.to_dict() for rec in ctx.top_k_findings],
                "summary": ctx.memory_summary.to_dict() if ctx.memory_summary else None,
            },
        }
        resp = self._post(payload)
        raw_drafts = resp.get("drafts") or []
        drafts = []
        for item in raw_drafts:
            title = (item.get("title") or "").strip()
            if not title:
                continue
            drafts.append(
                Draft(
                    hypothesis=Hypothesis(
                        title=title,
                        motivation=item.get("motivation", ""),
                        method=item.get("method", ""),
                        expected_gain=item.get("expected_gain", ""),
                    ),
                    lineage=tuple(item.get("lineage", ())),
                    latent=tuple(item["latent"]) if item.get("latent") else None,
                    embedding=tuple(item["embedding"]) if item.get("embedding") else None,
                )
            )
        if not drafts:
            raise EmptyGeneration("backend returned no usable drafts")
        return drafts[: ctx.batch_size]

    def valuate(self, drafts: Sequence[Draft], ctx: GeneratorContext) -> list[ValuationVector]:
        if not drafts:
            raise InvariantViolation("valuate needs a non-empty draft list")
        payload = {
            "op": "valuate",
            "limitation": ctx.target_limitation,
            "drafts": [d.hypothesis.to_dict() for d in drafts],
        }
        resp = self._post(payload)
        rows = resp.get("valuations") or []
        if len(rows) != len(drafts):
            raise BackendUnavailable(
                f"backend returned {len(rows)} valuations for {len(drafts)} drafts"
            )
        out = []
        for i, row in enumerate(rows):
            try:
                vec, touched = ValuationVector.clamped(
                    float(row["v_u"]), float(row["v_q"]), float(row["v_e"])
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise BackendUnavailable(f"malformed valuation row {i}: {exc}") from exc
            if touched:
                logger.warning(
                    "backend valuation %d out of range or non-integer, clamped: %s", i, row
                )
            out.append(vec)
        return out
