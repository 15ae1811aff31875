"""Findings store: lifecycle, retrieval, merge laws, persistence."""

import json
import math
import random

import pytest

from conftest import make_record, make_result
from scoutlab.errors import (
    ConflictingImmutableField,
    CorruptLine,
    DuplicateId,
    EmbeddingMissing,
    IllegalTransition,
    InvariantViolation,
    MissingJustification,
    SchemaVersionMismatch,
    UnknownId,
)
from scoutlab.memory import (
    FindingsMemory,
    RetrievalConfig,
    RetrievalScorer,
    merge_deltas,
)
from scoutlab.records import (
    EvaluationResult,
    Hypothesis,
    Stage,
    ValuationVector,
    Verdict,
    tokenize,
)


# --- append ------------------------------------------------------------------


def test_append_fresh_idea_record():
    memory = FindingsMemory()
    assert len(memory) == 0
    rid = memory.append_record(make_record(valuation=(50, 50, 50)))
    assert rid == "w00-f00001"
    assert len(memory) == 1
    assert memory.get(rid).valuation.as_tuple() == (50, 50, 50)


def test_append_out_of_range_valuation_rejected():
    with pytest.raises(InvariantViolation):
        ValuationVector(101, 50, 50)


def test_append_duplicate_id():
    memory = FindingsMemory()
    memory.append_record(make_record())
    with pytest.raises(DuplicateId):
        memory.append_record(make_record())


def test_idea_with_evidence_rejected():
    bad = make_record(evidence=[make_result()])
    with pytest.raises(InvariantViolation):
        FindingsMemory().append_record(bad)


def test_five_thousand_ideas_counted():
    # mirrors the production-scale idea volume
    memory = FindingsMemory()
    for i in range(5000):
        memory.append_record(make_record(rid=f"w00-f{i:05d}", title=f"idea {i}"))
    assert memory.count_stage(Stage.IDEA) == 5000


# --- promote -----------------------------------------------------------------


def test_promote_idea_to_implement():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    updated = memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    assert updated.stage is Stage.IMPLEMENT


def test_promote_skip_is_illegal():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    with pytest.raises(IllegalTransition):
        memory.promote(rid, Stage.PROGRESS, {"kind": "selection"})


def test_promote_implement_to_progress_with_improvement():
    # metric 0.863 against a 0.800 baseline: a confirmed improvement
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    result = make_result(metric=0.863)
    memory.append_evidence(rid, result)
    updated = memory.promote(rid, Stage.PROGRESS, result)
    assert updated.stage is Stage.PROGRESS


def test_promote_progress_requires_improvement_justification():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    flop = make_result(verdict=Verdict.NO_IMPROVEMENT, metric=0.5)
    memory.append_evidence(rid, flop)
    with pytest.raises(MissingJustification):
        memory.promote(rid, Stage.PROGRESS, flop)
    with pytest.raises(MissingJustification):
        memory.promote(rid, Stage.PROGRESS, {"kind": "selection"})


def test_promote_regress_and_repeat_illegal():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    with pytest.raises(IllegalTransition):
        memory.promote(rid, Stage.IDEA, {"kind": "selection"})
    with pytest.raises(IllegalTransition):
        memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})


def test_promote_unknown_id():
    with pytest.raises(UnknownId):
        FindingsMemory().promote("nope", Stage.IMPLEMENT, "x")


def test_stage_transition_table_exhaustive():
    """All 9 (from, to) pairs behave per the one-step-forward rule."""
    legal = {(Stage.IDEA, Stage.IMPLEMENT), (Stage.IMPLEMENT, Stage.PROGRESS)}
    improvement = make_result()
    for src in Stage:
        for dst in Stage:
            memory = FindingsMemory()
            evidence = [] if src is Stage.IDEA else [improvement]
            rid = memory.append_record(make_record(stage=src, evidence=evidence))
            if (src, dst) in legal:
                updated = memory.promote(rid, dst, improvement)
                assert updated.stage is dst
            else:
                with pytest.raises(IllegalTransition):
                    memory.promote(rid, dst, improvement)


# --- evidence ---------------------------------------------------------------


def test_evidence_append_only_and_deduplicated():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    memory.append_evidence(rid, make_result(eval_id="w00-e00001"))
    memory.append_evidence(rid, make_result(eval_id="w00-e00002", verdict=Verdict.NO_IMPROVEMENT, metric=0.1))
    with pytest.raises(DuplicateId):
        memory.append_evidence(rid, make_result(eval_id="w00-e00001"))
    assert [e.evaluation_id for e in memory.get(rid).evidence] == [
        "w00-e00001",
        "w00-e00002",
    ]


def test_evidence_on_idea_record_rejected():
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    with pytest.raises(InvariantViolation):
        memory.append_evidence(rid, make_result())


# --- retrieval ---------------------------------------------------------------


def _cosine_oracle(query, vec):
    dot = sum(a * b for a, b in zip(query, vec))
    nq = math.sqrt(sum(a * a for a in query))
    nv = math.sqrt(sum(b * b for b in vec))
    return dot / (nq * nv) if nq and nv else 0.0


def test_retrieve_k_exceeds_size():
    memory = FindingsMemory()
    for i in range(10):
        memory.append_record(make_record(rid=f"w00-f{i:05d}", title=f"idea {i}"))
    out = memory.retrieve_top_k("idea", RetrievalConfig(k=15))
    assert len(out) == 10


def test_retrieve_default_k_is_15():
    memory = FindingsMemory()
    for i in range(100):
        memory.append_record(make_record(rid=f"w00-f{i:05d}", title=f"idea {i}"))
    out = memory.retrieve_top_k("idea", RetrievalConfig())
    assert len(out) == 15


def test_retrieve_empty_memory():
    assert FindingsMemory().retrieve_top_k("q", RetrievalConfig()) == []


def test_retrieve_cosine_matches_bruteforce_oracle(rng):
    memory = FindingsMemory()
    vectors = {}
    for i in range(20):
        vec = tuple(rng.uniform(-1, 1) for _ in range(6))
        rid = f"w00-f{i:05d}"
        vectors[rid] = vec
        memory.append_record(make_record(rid=rid, title=f"idea {i}", embedding=vec))
    query = [rng.uniform(-1, 1) for _ in range(6)]
    got = memory.retrieve_top_k(query, RetrievalConfig(k=7, scorer=RetrievalScorer.COSINE_EMBEDDING))
    expected = sorted(
        vectors, key=lambda rid: (-_cosine_oracle(query, vectors[rid]), rid)
    )[:7]
    assert [r.id for r in got] == expected


def test_retrieve_oracle_equivalence_small_stores(rng):
    """For stores up to 200 records both scorers equal exhaustive sort-truncate."""
    words = ["drift", "suffix", "phase", "wavelet", "latency", "recall", "cache", "probe"]
    for trial in range(8):
        n = rng.randint(1, 200)
        memory = FindingsMemory()
        texts = {}
        vectors = {}
        for i in range(n):
            rid = f"w{trial:02d}-f{i:05d}"
            title = " ".join(rng.choice(words) for _ in range(rng.randint(1, 6)))
            vec = tuple(rng.uniform(-1, 1) for _ in range(4))
            texts[rid] = title
            vectors[rid] = vec
            memory.append_record(make_record(rid=rid, title=title, embedding=vec))
        k = rng.randint(1, 30)
        query_text = " ".join(rng.choice(words) for _ in range(3))
        got = memory.retrieve_top_k(query_text, RetrievalConfig(k=k))

        def jaccard(rid):
            qt = tokenize(query_text)
            rt = tokenize(
                texts[rid]
                + " targets the known weakness swap the scoring statistic beat the baseline metric"
            )
            return len(qt & rt) / len(qt | rt) if qt and rt else 0.0

        expected = sorted(texts, key=lambda rid: (-jaccard(rid), rid))[:k]
        assert [r.id for r in got] == expected

        query_vec = [rng.uniform(-1, 1) for _ in range(4)]
        got_cos = memory.retrieve_top_k(
            query_vec, RetrievalConfig(k=k, scorer=RetrievalScorer.COSINE_EMBEDDING)
        )
        expected_cos = sorted(
            vectors, key=lambda rid: (-_cosine_oracle(query_vec, vectors[rid]), rid)
        )[:k]
        assert [r.id for r in got_cos] == expected_cos


def test_retrieve_cosine_missing_embedding():
    memory = FindingsMemory()
    memory.append_record(make_record(rid="w00-f00001", embedding=(1.0, 0.0)))
    memory.append_record(make_record(rid="w00-f00002", title="bare"))
    with pytest.raises(EmbeddingMissing):
        memory.retrieve_top_k([1.0, 0.0], RetrievalConfig(scorer=RetrievalScorer.COSINE_EMBEDDING))
    with pytest.raises(EmbeddingMissing):
        memory.retrieve_top_k("text query", RetrievalConfig(scorer=RetrievalScorer.COSINE_EMBEDDING))


def test_retrieval_config_requires_positive_k():
    with pytest.raises(InvariantViolation):
        RetrievalConfig(k=0)


# --- merge -------------------------------------------------------------------


def test_merge_empty_is_identity():
    memory = FindingsMemory()
    memory.append_record(make_record())
    before = memory.state_fingerprint()
    merge_deltas(memory, [])
    assert memory.state_fingerprint() == before
    assert len(memory.events()) == 1


def test_merge_self_is_idempotent():
    memory = FindingsMemory()
    memory.append_record(make_record())
    before = memory.state_fingerprint()
    merge_deltas(memory, memory.snapshot())
    assert memory.state_fingerprint() == before


def test_merge_stage_table_is_max():
    """Enumerate all 9 stage pairs; merged stage equals the hand-built max table."""
    improvement = make_result()
    hand_table = {
        (Stage.IDEA, Stage.IDEA): Stage.IDEA,
        (Stage.IDEA, Stage.IMPLEMENT): Stage.IMPLEMENT,
        (Stage.IDEA, Stage.PROGRESS): Stage.PROGRESS,
        (Stage.IMPLEMENT, Stage.IDEA): Stage.IMPLEMENT,
        (Stage.IMPLEMENT, Stage.IMPLEMENT): Stage.IMPLEMENT,
        (Stage.IMPLEMENT, Stage.PROGRESS): Stage.PROGRESS,
        (Stage.PROGRESS, Stage.IDEA): Stage.PROGRESS,
        (Stage.PROGRESS, Stage.IMPLEMENT): Stage.PROGRESS,
        (Stage.PROGRESS, Stage.PROGRESS): Stage.PROGRESS,
    }
    for (a, b), want in hand_table.items():
        local = FindingsMemory()
        local.append_record(
            make_record(stage=a, evidence=[] if a is Stage.IDEA else [improvement])
        )
        remote = make_record(stage=b, evidence=[] if b is Stage.IDEA else [improvement])
        merge_deltas(local, [remote])
        assert local.get("w00-f00001").stage is want, (a, b)


def test_merge_unions_evidence_by_evaluation_id():
    local = FindingsMemory()
    local.append_record(
        make_record(stage=Stage.IMPLEMENT, evidence=[make_result(eval_id="e1")])
    )
    remote = make_record(
        stage=Stage.IMPLEMENT,
        evidence=[make_result(eval_id="e1"), make_result(eval_id="e2", metric=0.95)],
    )
    merge_deltas(local, [remote])
    assert sorted(e.evaluation_id for e in local.get("w00-f00001").evidence) == ["e1", "e2"]


def test_merge_conflicting_hypothesis_aborts():
    local = FindingsMemory()
    local.append_record(make_record(title="original"))
    remote = make_record(title="tampered")
    before = local.state_fingerprint()
    with pytest.raises(ConflictingImmutableField):
        merge_deltas(local, [remote])
    assert local.state_fingerprint() == before


# seeded-random merge-law cases; the acceptance suite runs the same generator
# at the full 10,000-case volume
def build_random_replica(rng, universe):
    memory = FindingsMemory()
    for rid, (title, evidence_pool) in universe.items():
        if rng.random() < 0.4:
            continue
        stage = rng.choice(list(Stage))
        if stage is Stage.IDEA:
            evidence = []
        else:
            k = rng.randint(0 if stage is not Stage.PROGRESS else 1, len(evidence_pool))
            evidence = rng.sample(evidence_pool, k) if k else []
            if stage is Stage.PROGRESS and not any(
                e.verdict is Verdict.IMPROVEMENT for e in evidence
            ):
                evidence.append(evidence_pool[0])
        memory.append_record(
            make_record(
                rid=rid,
                title=title,
                stage=stage,
                valuation=(rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 100)),
                evidence=[
                    EvaluationResult.from_dict(e.to_dict()) for e in evidence
                ],
                lineage=tuple(
                    rng.sample(sorted(universe), rng.randint(0, 2))
                ),
            )
        )
    return memory


def make_universe(rng, size=6):
    universe = {}
    for i in range(size):
        rid = f"u-f{i:05d}"
        pool = [
            make_result(eval_id=f"{rid}-e1", finding_id=rid, metric=0.9),
            make_result(
                eval_id=f"{rid}-e2",
                finding_id=rid,
                verdict=Verdict.NO_IMPROVEMENT,
                metric=0.2,
            ),
            make_result(
                eval_id=f"{rid}-e3",
                finding_id=rid,
                verdict=Verdict.IMPLEMENTATION_ERROR,
                metric=None,
            ),
        ]
        universe[rid] = (f"hypothesis {i}", pool)
    return universe


def merged_fp(base, *delta_sets):
    memory = base.copy()
    for deltas in delta_sets:
        memory.merge_records(deltas)
    return memory.state_fingerprint()


def test_merge_laws_random_cases():
    rng = random.Random(20260810)
    for _ in range(300):
        universe = make_universe(rng)
        a = build_random_replica(rng, universe)
        b = build_random_replica(rng, universe)
        c = build_random_replica(rng, universe)
        sa, sb, sc = a.snapshot(), b.snapshot(), c.snapshot()
        # idempotence
        assert merged_fp(a, sa) == a.state_fingerprint()
        # commutativity
        assert merged_fp(a, sb) == merged_fp(b, sa)
        # associativity
        left = merged_fp(a.copy().merge_records(sb), sc)
        right = merged_fp(a, FindingsMemory().merge_records(sb).merge_records(sc).snapshot())
        assert left == right
        # union cardinality
        merged = a.copy().merge_records(sb)
        assert len(merged) == len({r.id for r in sa} | {r.id for r in sb})


# --- persistence ---------------------------------------------------------------


def test_export_import_round_trip_volume(tmp_path):
    # 1,100 records: the validated-ideas volume from the production funnel
    memory = FindingsMemory()
    improvement = make_result()
    for i in range(1100):
        stage = Stage.IMPLEMENT if i % 5 == 0 else Stage.IDEA
        memory.append_record(
            make_record(
                rid=f"w00-f{i:05d}",
                title=f"idea {i}",
                stage=stage,
                evidence=[] if stage is Stage.IDEA else [improvement],
            )
        )
    path = tmp_path / "volume.findings.jsonl"
    count = memory.export_log(str(path))
    assert count == 1100
    loaded = FindingsMemory.import_log(str(path))
    assert loaded.state_fingerprint() == memory.state_fingerprint()
    path2 = tmp_path / "again.findings.jsonl"
    loaded.export_log(str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_import_empty_file(tmp_path):
    path = tmp_path / "empty.findings.jsonl"
    path.write_text("")
    assert len(FindingsMemory.import_log(str(path))) == 0


def test_import_truncated_line_reports_line_number(tmp_path):
    memory = FindingsMemory()
    memory.append_record(make_record())
    path = tmp_path / "trunc.findings.jsonl"
    memory.export_log(str(path))
    text = path.read_text()
    path.write_text(text + text[: len(text) // 2].rstrip("\n"))
    with pytest.raises(CorruptLine) as err:
        FindingsMemory.import_log(str(path))
    assert err.value.line_no == 2


def test_import_schema_version_mismatch(tmp_path):
    path = tmp_path / "future.findings.jsonl"
    path.write_text('{"schema_version": 99, "event": "record_created", "record": {}}\n')
    with pytest.raises(SchemaVersionMismatch):
        FindingsMemory.import_log(str(path))


def test_replay_never_regresses_stage(tmp_path):
    memory = FindingsMemory()
    rid = memory.append_record(make_record())
    memory.promote(rid, Stage.IMPLEMENT, {"kind": "selection"})
    path = tmp_path / "regress.findings.jsonl"
    memory.export_log(str(path))
    lines = path.read_text().splitlines()
    demote = json.loads(lines[-1])
    demote["from_stage"], demote["to_stage"] = "implement", "idea"
    path.write_text("\n".join(lines + [json.dumps(demote)]) + "\n")
    with pytest.raises(CorruptLine):
        FindingsMemory.import_log(str(path))


def test_durable_log_written_per_event(tmp_path):
    path = tmp_path / "live.findings.jsonl"
    memory = FindingsMemory(log_path=str(path))
    memory.append_record(make_record())
    assert len(path.read_text().splitlines()) == 1
    memory.promote("w00-f00001", Stage.IMPLEMENT, {"kind": "selection"})
    assert len(path.read_text().splitlines()) == 2
    memory.close()
