import random

import pytest

from scoutlab.records import (
    EvaluationResult,
    FindingRecord,
    Hypothesis,
    Stage,
    ValuationVector,
    Verdict,
)


def make_record(
    rid="w00-f00001",
    title=None,
    stage=Stage.IDEA,
    valuation=(50, 50, 50),
    embedding=None,
    lineage=(),
    evidence=(),
    latent=None,
    worker="w00",
    cycle=1,
):
    return FindingRecord(
        id=rid,
        hypothesis=Hypothesis(
            title=title or f"candidate {rid}",
            motivation="targets the known weakness",
            method="swap the scoring statistic",
            expected_gain="beat the baseline metric",
        ),
        stage=stage,
        valuation=ValuationVector(*valuation),
        embedding=embedding,
        lineage=tuple(lineage),
        evidence=list(evidence),
        baseline_ref="ref-baseline",
        created_cycle=cycle,
        created_worker=worker,
        created_ts=float(cycle),
        updated_ts=float(cycle),
        latent=latent,
    )


def make_result(
    eval_id="w00-e00001",
    finding_id="w00-f00001",
    verdict=Verdict.IMPROVEMENT,
    metric=0.9,
    wall=1.0,
):
    return EvaluationResult(
        evaluation_id=eval_id,
        finding_id=finding_id,
        verdict=verdict,
        metric_value=None if verdict in (Verdict.IMPLEMENTATION_ERROR, Verdict.TIMEOUT) else metric,
        wall_seconds=wall,
    )


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
