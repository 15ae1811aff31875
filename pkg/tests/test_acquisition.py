"""Selection-score rule and argmax selection."""

import random

import pytest

from conftest import make_record
from scoutlab.acquisition import (
    AcquisitionConfig,
    rank_candidates,
    score_record,
    select_candidate,
    ucb_parts,
    ucb_score,
)
from scoutlab.errors import EmptyBatch, InvariantViolation, StageViolation
from scoutlab.records import Stage, ValuationVector


def test_zero_vector_scores_zero():
    scored = ucb_score(ValuationVector(0, 0, 0), AcquisitionConfig())
    assert scored.ucb_score == 0.0
    assert scored.exploitation_part == 0.0
    assert scored.exploration_part == 0.0


def test_default_weights_sum_components():
    scored = ucb_score(ValuationVector(80, 70, 60), AcquisitionConfig())
    assert scored.exploitation_part == 150.0
    assert scored.exploration_part == 60.0
    assert scored.ucb_score == 210.0


def test_weighted_hand_case():
    cfg = AcquisitionConfig(w_u=2.0, w_q=1.0, kappa=0.5)
    scored = ucb_score(ValuationVector(50, 40, 60), cfg)
    assert scored.exploitation_part == 140.0
    assert scored.exploration_part == 30.0
    assert scored.ucb_score == 170.0


def test_decomposition_is_exact_bit_for_bit(rng):
    for _ in range(200):
        cfg = AcquisitionConfig(
            w_u=rng.uniform(0, 3), w_q=rng.uniform(0, 3), kappa=rng.uniform(0, 3)
        )
        v = ValuationVector(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100))
        scored = ucb_score(v, cfg)
        assert scored.ucb_score == scored.exploitation_part + scored.exploration_part


def test_negative_weights_rejected():
    with pytest.raises(InvariantViolation):
        AcquisitionConfig(w_u=-0.1)


def test_monotone_in_each_component(rng):
    cfg = AcquisitionConfig(w_u=1.5, w_q=0.5, kappa=2.0)
    for _ in range(100):
        base = [rng.randint(0, 99), rng.randint(0, 99), rng.randint(0, 99)]
        before = ucb_score(ValuationVector(*base), cfg).ucb_score
        for i in range(3):
            bumped = list(base)
            bumped[i] += 1
            after = ucb_score(ValuationVector(*bumped), cfg).ucb_score
            assert after >= before


def test_select_singleton_batch():
    record = make_record()
    chosen, ranking = select_candidate([record], AcquisitionConfig())
    assert chosen == record.id
    assert len(ranking) == 1


def test_tie_breaks_by_ascending_id():
    a = make_record(rid="w00-f00002", valuation=(50, 50, 50))
    b = make_record(rid="w00-f00001", valuation=(50, 50, 50))
    chosen, ranking = select_candidate([a, b], AcquisitionConfig())
    assert chosen == "w00-f00001"
    assert [c.finding_id for c in ranking] == ["w00-f00001", "w00-f00002"]


def test_empty_batch_rejected():
    with pytest.raises(EmptyBatch):
        select_candidate([], AcquisitionConfig())


def test_non_idea_record_rejected():
    record = make_record(stage=Stage.IMPLEMENT, evidence=[])
    record.evidence = []
    with pytest.raises(StageViolation):
        select_candidate([record], AcquisitionConfig())


def _bruteforce_argmax(records, cfg):
    def key(r):
        score = cfg.w_u * r.valuation.v_u + cfg.w_q * r.valuation.v_q + cfg.kappa * r.valuation.v_e
        return (-score, r.id)

    return sorted(records, key=key)[0].id


def test_selection_matches_bruteforce_oracle(rng):
    for _ in range(50):
        n = rng.randint(1, 200)
        batch = [
            make_record(
                rid=f"w00-f{i:05d}",
                valuation=(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100)),
            )
            for i in range(n)
        ]
        cfg = AcquisitionConfig(
            w_u=rng.uniform(0, 4), w_q=rng.uniform(0, 4), kappa=rng.uniform(0, 4)
        )
        chosen, ranking = select_candidate(batch, cfg)
        assert chosen == _bruteforce_argmax(batch, cfg)
        scores = [c.ucb_score for c in ranking]
        assert scores == sorted(scores, reverse=True)


def test_argmax_invariant_under_joint_scaling(rng):
    # power-of-two scales keep float multiplication exact
    for _ in range(40):
        batch = [
            make_record(
                rid=f"w00-f{i:05d}",
                valuation=(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100)),
            )
            for i in range(rng.randint(2, 60))
        ]
        cfg = AcquisitionConfig(w_u=1.25, w_q=0.75, kappa=1.5)
        chosen, ranking = select_candidate(batch, cfg)
        for scale in (0.25, 0.5, 2.0, 8.0):
            scaled = AcquisitionConfig(
                w_u=cfg.w_u * scale, w_q=cfg.w_q * scale, kappa=cfg.kappa * scale
            )
            chosen_s, ranking_s = select_candidate(batch, scaled)
            assert chosen_s == chosen
            assert [c.finding_id for c in ranking_s] == [c.finding_id for c in ranking]
            for before, after in zip(ranking, ranking_s):
                assert after.ucb_score == before.ucb_score * scale


def test_kappa_zero_is_pure_exploitation(rng):
    batch = [
        make_record(
            rid=f"w00-f{i:05d}",
            valuation=(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100)),
        )
        for i in range(50)
    ]
    cfg = AcquisitionConfig(w_u=2.0, w_q=3.0, kappa=0.0)
    _, ranking = select_candidate(batch, cfg)
    exploit = {
        r.id: 2.0 * r.valuation.v_u + 3.0 * r.valuation.v_q for r in batch
    }
    expected = sorted(exploit, key=lambda rid: (-exploit[rid], rid))
    assert [c.finding_id for c in ranking] == expected
    assert all(c.exploration_part == 0.0 for c in ranking)


def test_selection_is_deterministic(rng):
    batch = [
        make_record(
            rid=f"w00-f{i:05d}",
            valuation=(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100)),
        )
        for i in range(80)
    ]
    cfg = AcquisitionConfig(w_u=0.3, w_q=1.7, kappa=0.9)
    runs = {select_candidate(batch, cfg)[0] for _ in range(5)}
    assert len(runs) == 1
