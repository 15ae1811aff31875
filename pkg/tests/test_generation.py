"""Synthetic generator/valuer and the external HTTP adapter."""

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from conftest import make_record, make_result
from scoutlab.errors import BackendUnavailable, EmptyGeneration, InvariantViolation
from scoutlab.generation import (
    Draft,
    EvaluatedPoint,
    ExternalBackend,
    GeneratorContext,
    SyntheticBackend,
)
from scoutlab.landscape import SyntheticConceptSpace
from scoutlab.records import Hypothesis, Stage, ValuationVector


def far_peak_space(noise=0.0, seed=3):
    return SyntheticConceptSpace(
        dimension=2,
        bump_centers=((0.1, 0.1),),
        bump_heights=(0.5,),
        bump_sigmas=(0.03,),
        peak_center=(0.9, 0.9),
        peak_height=0.87,
        peak_sigma=0.01,
        noise_sigma=noise,
        seed=seed,
    )


# --- landscape ----------------------------------------------------------------


def test_space_validation():
    with pytest.raises(InvariantViolation):
        SyntheticConceptSpace(
            dimension=2,
            bump_centers=((0.5, 1.5),),  # outside the unit square
            bump_heights=(0.5,),
            bump_sigmas=(0.1,),
            peak_center=(0.9, 0.9),
            peak_height=1.0,
            peak_sigma=0.01,
        )
    with pytest.raises(InvariantViolation):
        SyntheticConceptSpace(
            dimension=2,
            bump_centers=((0.5, 0.5),),
            bump_heights=(0.9,),
            bump_sigmas=(0.1,),
            peak_center=(0.9, 0.9),
            peak_height=0.8,  # peak must exceed every bump
            peak_sigma=0.01,
        )


def test_space_height_at_peak():
    space = far_peak_space()
    assert space.height(space.peak_center) == pytest.approx(0.87, abs=1e-12)


def test_space_round_trips_through_dict():
    space = far_peak_space(noise=0.05)
    again = SyntheticConceptSpace.from_dict(space.to_dict())
    assert again == space


# --- synthetic generation ------------------------------------------------------


def test_generate_is_deterministic_under_seed():
    space = far_peak_space()
    backend = SyntheticBackend(space)
    ctx = GeneratorContext(target_limitation="latency", batch_size=10, worker_id="w03", cycle=7)
    first = backend.generate(ctx)
    second = backend.generate(ctx)
    assert len(first) == 10
    assert [d.latent for d in first] == [d.latent for d in second]
    assert [d.hypothesis for d in first] == [d.hypothesis for d in second]


def test_generate_batch_size_zero_rejected():
    with pytest.raises(InvariantViolation):
        GeneratorContext(batch_size=0)


def test_exploitation_bias_toward_measured_parents():
    """Over 1,000 seeded draws, drafts cluster within radius of parents."""
    space = far_peak_space()
    backend = SyntheticBackend(space, exploit_fraction=0.6, child_sigma=0.02)
    parents = [
        make_record(
            rid=f"p-f{i:05d}",
            stage=Stage.IMPLEMENT,
            evidence=[make_result(eval_id=f"p-e{i}", finding_id=f"p-f{i:05d}", metric=0.7 + 0.05 * i)],
            latent=c,
        )
        for i, c in enumerate([(0.2, 0.8), (0.5, 0.5), (0.8, 0.2)])
    ]
    radius = 3 * 0.02
    draws_with_exploit = 0
    near_fraction_total = 0
    n_draws = 1000
    for cycle in range(n_draws):
        ctx = GeneratorContext(
            top_k_findings=[p.clone() for p in parents],
            target_limitation="recall",
            batch_size=5,
            worker_id="w00",
            cycle=cycle,
        )
        drafts = backend.generate(ctx)
        near = 0
        for d in drafts:
            dist = min(
                math.dist(d.latent, p.latent) for p in parents
            )
            if dist <= radius:
                near += 1
        near_fraction_total += near
        if near >= 1:
            draws_with_exploit += 1
    assert draws_with_exploit >= 950
    assert 0.45 <= near_fraction_total / (5 * n_draws) <= 0.75


def test_exploit_drafts_carry_lineage():
    space = far_peak_space()
    backend = SyntheticBackend(space, exploit_fraction=1.0)
    parent = make_record(
        rid="p-f00001",
        stage=Stage.IMPLEMENT,
        evidence=[make_result(eval_id="p-e1", finding_id="p-f00001", metric=0.8)],
        latent=(0.4, 0.6),
    )
    ctx = GeneratorContext(top_k_findings=[parent], batch_size=8, worker_id="w01", cycle=2)
    drafts = backend.generate(ctx)
    assert all(d.lineage == ("p-f00001",) for d in drafts)


# --- synthetic valuation ---------------------------------------------------------


def test_noiseless_valuation_at_peak_is_peak_height():
    space = far_peak_space(noise=0.0)
    backend = SyntheticBackend(space)
    draft = Draft(hypothesis=Hypothesis(title="at the peak"), latent=space.peak_center)
    ctx = GeneratorContext(target_limitation="x", batch_size=1)
    (vec,) = backend.valuate([draft], ctx)
    assert vec.v_u == round(100 * 0.87)


def test_noisy_valuations_track_noiseless_oracle():
    space = far_peak_space(noise=0.05)
    noiseless = far_peak_space(noise=0.0)
    backend = SyntheticBackend(space)
    oracle = SyntheticBackend(noiseless)
    within = 0
    total = 0
    for cycle in range(50):
        ctx = GeneratorContext(
            target_limitation="y", batch_size=5, worker_id="w02", cycle=cycle
        )
        drafts = backend.generate(ctx)
        noisy = backend.valuate(drafts, ctx)
        exact = oracle.valuate(drafts, ctx)
        for nv, ev in zip(noisy, exact):
            total += 1
            if abs(nv.v_u - ev.v_u) <= 3 * 0.05 * 100 + 1:
                within += 1
    assert within / total >= 0.95


def test_exploration_score_non_increasing_with_neighbors():
    space = far_peak_space()
    backend = SyntheticBackend(space)
    draft = Draft(hypothesis=Hypothesis(title="probe"), latent=(0.5, 0.5))
    scores = []
    neighbor_sets = [
        (),
        (EvaluatedPoint("a", (0.9, 0.9)),),
        (EvaluatedPoint("a", (0.9, 0.9)), EvaluatedPoint("b", (0.6, 0.6))),
        (
            EvaluatedPoint("a", (0.9, 0.9)),
            EvaluatedPoint("b", (0.6, 0.6)),
            EvaluatedPoint("c", (0.51, 0.5)),
        ),
    ]
    for pts in neighbor_sets:
        ctx = GeneratorContext(
            target_limitation="z", batch_size=1, evaluated_points=pts
        )
        (vec,) = backend.valuate([draft], ctx)
        scores.append(vec.v_e)
    assert scores[0] == 100
    assert scores == sorted(scores, reverse=True)
    assert scores[-1] < scores[0]


def test_valuation_components_always_in_range(rng):
    space = far_peak_space(noise=0.5)  # extreme noise still clamps
    backend = SyntheticBackend(space)
    for cycle in range(20):
        ctx = GeneratorContext(target_limitation="w", batch_size=5, cycle=cycle)
        drafts = backend.generate(ctx)
        for vec in backend.valuate(drafts, ctx):
            for component in vec.as_tuple():
                assert 0 <= component <= 100


# --- external adapter -------------------------------------------------------------


class _Script(BaseHTTPRequestHandler):
    responses = []
    fail_times = 0
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        if cls.fail_times > 0:
            cls.fail_times -= 1
            self.send_error(503)
            return
        body = self.rfile.read(int(self.headers["Content-Length"]))
        payload = json.loads(body)
        reply = cls.responses[min(cls.calls, len(cls.responses)) - 1]
        if callable(reply):
            reply = reply(payload)
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_backend():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Script)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Script.responses = []
    _Script.fail_times = 0
    _Script.calls = 0
    yield f"http://127.0.0.1:{server.server_port}/"
    server.shutdown()
    server.server_close()


def test_external_generate_and_valuate(http_backend):
    _Script.responses = [
        lambda payload: {
            "drafts": [
                {"title": f"draft {i} for {payload['limitation']}", "method": "swap"}
                for i in range(payload["batch_size"])
            ]
        }
        if payload["op"] == "generate"
        else {"valuations": [{"v_u": 80, "v_q": 70, "v_e": 60}] * len(payload["drafts"])},
    ]
    backend = ExternalBackend(http_backend, timeout_seconds=5)
    ctx = GeneratorContext(target_limitation="throughput", batch_size=3)
    drafts = backend.generate(ctx)
    assert len(drafts) == 3
    vecs = backend.valuate(drafts, ctx)
    assert all(v.as_tuple() == (80, 70, 60) for v in vecs)


def test_external_out_of_range_scores_clamped(http_backend, caplog):
    _Script.responses = [
        {"valuations": [{"v_u": 150, "v_q": -3, "v_e": 61.4}]},
    ]
    backend = ExternalBackend(http_backend, timeout_seconds=5)
    drafts = [Draft(hypothesis=Hypothesis(title="t"))]
    with caplog.at_level("WARNING"):
        (vec,) = backend.valuate(drafts, GeneratorContext(batch_size=1))
    assert vec.as_tuple() == (100, 0, 61)
    assert any("clamped" in rec.message for rec in caplog.records)


def test_external_retries_then_unavailable(http_backend):
    _Script.fail_times = 99
    backend = ExternalBackend(
        http_backend, timeout_seconds=2, max_retries=2, retry_backoff_seconds=0.01
    )
    with pytest.raises(BackendUnavailable):
        backend.generate(GeneratorContext(batch_size=1))
    assert _Script.calls == 3  # first try + 2 retries


def test_external_recovers_within_retry_budget(http_backend):
    _Script.fail_times = 1
    _Script.responses = [
        {"drafts": [{"title": "recovered"}]},
        {"drafts": [{"title": "recovered"}]},
    ]
    backend = ExternalBackend(
        http_backend, timeout_seconds=2, max_retries=2, retry_backoff_seconds=0.01
    )
    drafts = backend.generate(GeneratorContext(batch_size=1))
    assert drafts[0].hypothesis.title == "recovered"


def test_external_empty_generation(http_backend):
    _Script.responses = [{"drafts": []}]
    backend = ExternalBackend(http_backend, timeout_seconds=2)
    with pytest.raises(EmptyGeneration):
        backend.generate(GeneratorContext(batch_size=2))
