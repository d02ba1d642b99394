import json

import pytest

from hseq.canonical import provenance, verify_content_preserving
from hseq.engine import IterationConfig, heuristic_policy
from hseq.head import mock_head
from hseq.pipeline import PipelineConfig, QAExample, aggregate, answer_question, evaluate
from hseq.toydata import FILM_ANSWER, FILM_QUESTION, film_setup, planted_examples


def film_outcome(**cfg):
    h, policy, it = film_setup()
    head = mock_head(FILM_ANSWER, ["p_6df9c849"])
    return h, answer_question(FILM_QUESTION, h, policy, head, PipelineConfig(iteration=it, **cfg))


def test_case_study_pipeline():
    h, o = film_outcome()
    assert o.answer.text == FILM_ANSWER and o.steps == 6
    assert o.answer.supporting_ids == ("p_6df9c849",)
    assert "p_6df9c849" in provenance(o.package, h)
    assert verify_content_preserving(o.package, h)


def test_case_study_eval_record():
    h, policy, it = film_setup()
    report = evaluate(
        [QAExample(FILM_QUESTION, FILM_ANSWER)], h, policy=policy,
        head_client=mock_head(FILM_ANSWER, ["p_6df9c849"]), cfg=PipelineConfig(iteration=it, tick_ms=1.0),
    )
    (rec,) = report.records
    assert (rec.em, rec.f1, rec.steps) == (1, 1.0, 6) and rec.error is None
    assert report.aggregate["em"] == 1.0


def test_heuristic_eval_respects_step_cap_and_aggregates_exactly():
    exs = planted_examples(20, seed=2)
    cfg = PipelineConfig(iteration=IterationConfig(8, 2, 6), tick_ms=0.5)
    report = evaluate(exs, policy=heuristic_policy, head_client=mock_head(), cfg=cfg)
    assert len(report.records) == 20
    for r in report.records:
        assert r.steps <= 6 and r.f1 >= r.em and min(r.selection_latency_ms, r.head_latency_ms, r.total_latency_ms) >= 0
    for name in ("em", "f1", "steps", "total_latency_ms"):
        assert report.aggregate[name] == sum(getattr(r, name) for r in report.records) / 20


def test_failures_become_error_records():
    exs = [QAExample("Who?", "x")]  # no hseq anywhere
    report = evaluate(exs, policy=heuristic_policy, head_client=mock_head("x"))
    (rec,) = report.records
    assert rec.error and rec.em == 0 and rec.f1 == 0.0
    assert report.aggregate["errors"] == 1 and report.outcomes == [None]


def test_parallel_matches_serial(tmp_path):
    exs = planted_examples(12, seed=4)
    base = dict(iteration=IterationConfig(8, 2, 6), tick_ms=1.0)
    a = evaluate(exs, policy=heuristic_policy, head_client=mock_head(), cfg=PipelineConfig(**base))
    b = evaluate(exs, policy=heuristic_policy, head_client=mock_head(), cfg=PipelineConfig(parallelism=4, **base))
    assert a.record_lines() == b.record_lines() and a.trace_lines() == b.trace_lines()
    paths = a.write(tmp_path)
    assert paths["records"].read_text(encoding="utf-8").splitlines() == a.record_lines()


def test_refinement_in_pipeline():
    # the head answers "Arie"; the first step only holds the film paragraph, so a refinement runs
    h, policy, it = film_setup()
    from hseq.engine import ScriptedPolicy

    short = ScriptedPolicy(policy.steps[:1])
    cfg = PipelineConfig(iteration=IterationConfig(48, 3, 1), refinement_delta=2)
    o = answer_question(FILM_QUESTION, h, short, mock_head("Arie"), cfg)
    assert o.answer.refined and o.refinement is not None and o.refinement.steps <= 2
    assert o.steps <= 1 + 2


def test_answer_record_keys():
    _, o = film_outcome(tick_ms=1.0)
    rec = o.answer_record()
    assert list(rec) == [
        "question", "answer", "supporting_ids", "refined", "steps",
        "selection_latency_ms", "head_latency_ms", "total_latency_ms",
    ]
    json.dumps(rec)


def test_aggregate_of_nothing():
    assert aggregate([])["n"] == 0
