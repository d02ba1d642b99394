"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or ``pytest -m acceptance``.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from corpora import random_corpus, shuffled_variant
from hseq.adapters import decode, encode, equivalent
from hseq.canonical import EvidencePackage, canonicalize, provenance, verify_content_preserving
from hseq.engine import IterationConfig, PolicyDecision, heuristic_policy, run_episode
from hseq.guidance import template_guidance
from hseq.head import mock_head
from hseq.metrics import em_f1
from hseq.pipeline import PipelineConfig, QAExample, answer_question, evaluate
from hseq.policy import DecisionParseError, parse_decision, render_decision
from hseq.supervision import build_training_tuple, export_sft, proxy_prf, synthesize_trajectory, weak_positives
from hseq.theory import (
    check_budget_independence,
    check_coverage,
    check_halt,
    context_cost_cap,
    format_reports,
    stochastic_grid,
)
from hseq.toydata import FILM_ANSWER, FILM_QUESTION, film_setup, planted_examples

pytestmark = pytest.mark.acceptance

# mean proxy F1 of the heuristic policy on planted(200, seed=0); a regression pin, not a target
PROXY_F1_PIN = 0.40825641025641074


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok

    return emit


def grid():
    for k in (1, 2, 3):
        for W in range(k, 7):
            for L in range(1, 13):
                yield k, W, L


def test_criterion_1_round_trip(report):
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    bad = []
    n = 1000
    for i in range(n):
        c = random_corpus(rng)
        back = decode(encode(c))
        if not (equivalent(back, c) and equivalent(back, shuffled_variant(rng, c))):
            bad.append(i)
    secs = time.perf_counter() - start
    ok = not bad and secs < 30
    report(1, ok, f"round trip on {n} random corpora, {n - len(bad)}/{n} equivalent, {secs:.1f}s")
    assert ok, bad[:10]


def test_criterion_2_prefix_coverage(report):
    start = time.perf_counter()
    fails = []
    cells = 0
    for k, W, L in grid():
        cells += 1
        r = check_coverage(k, W, L, 2 * L)
        done = r.episodes[0].steps <= math.ceil(L / k)
        if not (r and done):
            fails.append((k, W, L, r.violations))
    secs = time.perf_counter() - start
    ok = not fails and secs < 10
    report(2, ok, f"prefix coverage over {cells} cells, {len(fails)} violations, {secs:.1f}s")
    assert ok, fails[:5]


def test_criterion_3_halt_bound(report):
    start = time.perf_counter()
    fails = []
    runs = 0
    for k, W, L in grid():
        R = math.ceil(L / k)
        for t_max in sorted({1, R, R + 3}):
            runs += 1
            r = check_halt(k, W, L, 2 * L, t_max)
            if not r or r.episodes[0].steps > min(t_max, R):
                fails.append((k, W, L, t_max, r.violations))
    secs = time.perf_counter() - start
    ok = not fails and secs < 10
    report(3, ok, f"halt bound over {runs} runs, {len(fails)} violations, {secs:.1f}s")
    assert ok, fails[:5]


def test_criterion_4_stochastic_completeness(report):
    start = time.perf_counter()
    reports = stochastic_grid((1, 2, 3), (0.3, 0.5, 0.9), (1, 2), (3, 6), trials=100_000, seed=0)
    secs = time.perf_counter() - start
    anchor = [r for r in reports if (r.m, r.p, r.k, r.L) == (2, 0.5, 1, 3)][0]
    failed = [r for r in reports if not r.passed]
    ok = not failed and anchor.bound == 0.75 and secs < 120
    cells = ", ".join(f"(m={r.m},p={r.p},k={r.k},L={r.L})" for r in failed)
    report(4, ok, f"{len(reports) - len(failed)}/{len(reports)} cells within 3 SE of the bound, {secs:.1f}s"
           + (f"; below bound: {cells}" if failed else ""))
    if failed:
        print(format_reports(reports))
    assert anchor.bound == 0.75 and anchor.passed
    assert ok


def test_criterion_5_budget_independence(report):
    W, k, t_max = 8, 2, 6
    r = check_budget_independence(W, k, t_max, [100, 10_000])
    heur = [ep for ep in r.episodes if ep.trace and ep.trace[0].strategy == "heuristic_topk"]
    per_step = [[rec.context_chars for rec in ep.trace] for ep in heur]
    ok = bool(r) and len(heur) == 2 and per_step[0] == per_step[1]
    report(5, ok, f"context chars per step {per_step[0]} at both sizes, C(W)={context_cost_cap(W)}, bound {r.params['bound']}")
    assert ok, r.violations


def test_criterion_6_canonicalizer(report):
    rng = np.random.default_rng(6)
    bad = []
    n = 500
    corpora = [encode(random_corpus(rng)) for _ in range(25)]
    for i in range(n):
        h = corpora[i % len(corpora)]
        cands = [s.id for s in h.stream()]
        size = int(rng.integers(0, min(len(cands), 15) + 1)) if cands else 0
        chosen = list(rng.choice(cands, size=size, replace=True)) if size else []
        pkg = canonicalize(chosen, h, "q", episode_ref="e")
        alt = canonicalize([chosen[j] for j in rng.permutation(len(chosen))], h, "q", episode_ref="e")
        keys = [it.key for it in pkg.items]
        fine = (
            pkg.to_json() == alt.to_json()
            and len(set(keys)) == len(keys)
            and keys == sorted(keys)
            and verify_content_preserving(pkg, h)
        )
        if not fine:
            bad.append(i)

    h, _, _ = film_setup()
    pkg = canonicalize(["p_6df9c849", "p_c15173df"], h)
    d = json.loads(pkg.to_json())
    d["items"][0]["snippet"] = d["items"][0]["snippet"].replace("2004", "2005")
    tampered_rejected = not verify_content_preserving(EvidencePackage.from_dict(d), h)
    ok = not bad and tampered_rejected
    report(6, ok, f"{n - len(bad)}/{n} random selections deterministic and sound; tampered fixture rejected={tampered_rejected}")
    assert ok, bad[:10]


FIXTURES = (
    '{"type":"select","args":{"segment_ids":["p_6df9c849"],"strategy":"guided_topk","top_k":2},"sufficiency":false}',
    '{"type":"select","args":{"segment_ids":[],"strategy":"guided_topk","top_k":4},"sufficiency":true}',
    '{ "type": "select", "args": { "segment_ids": ["p_6df9c849", "row_a44a4a17"], "strategy": "guided_topk", "top_k": 3 }, "sufficiency": true }',
)
FREE_FORM = ("The answer is B", "I would select p_6df9c849 because it names the author.", "")


def test_criterion_7_action_schema(report):
    rng = np.random.default_rng(7)
    alphabet = list("abcdefxyz_0123456789-") + ["é", "東", '"', "\\", " "]
    mismatches = 0
    for _ in range(1000):
        top_k = int(rng.integers(1, 9))
        ids = tuple("".join(rng.choice(alphabet, size=int(rng.integers(1, 12)))) for _ in range(int(rng.integers(0, top_k + 1))))
        strategy = str(rng.choice(["guided_topk", "heuristic_topk", "scripted", ""]))
        d = PolicyDecision(ids, strategy, top_k, bool(rng.integers(2)))
        mismatches += parse_decision(render_decision(d)) != d
    parsed = [parse_decision(f) for f in FIXTURES]
    rejected = 0
    for text in FREE_FORM:
        try:
            parse_decision(text)
        except DecisionParseError:
            rejected += 1
    ok = mismatches == 0 and len(parsed) == 3 and rejected == len(FREE_FORM)
    report(7, ok, f"1000 random decisions, {mismatches} mismatches; 3 fixtures parsed; {rejected}/{len(FREE_FORM)} free-form rejected")
    assert ok


def test_criterion_8_case_study(report):
    h, policy, it = film_setup()
    head = mock_head(FILM_ANSWER, ["p_6df9c849"])
    o = answer_question(FILM_QUESTION, h, policy, head, PipelineConfig(iteration=it))
    em, f1 = em_f1(o.answer.text, FILM_ANSWER)
    has_prov = "p_6df9c849" in provenance(o.package, h)
    ok = em == 1 and f1 == 1.0 and o.steps == 6 and has_prov
    report(8, ok, f"answer {o.answer.text!r}, EM={em}, F1={f1}, steps={o.steps}, p_6df9c849 in package={has_prov}")
    assert ok


def test_criterion_9_sft_export(report):
    cfg = IterationConfig(48, 4, 6)
    tuples, f1s = [], []
    for ex in planted_examples(200, seed=0):
        g = template_guidance(ex.question)
        pos = weak_positives(ex.question, ex.answer, ex.hseq, candidate_cap=cfg.window_size, fallback_n=1)
        traj = synthesize_trajectory(pos, cfg.top_k, 1)
        tuples.append(build_training_tuple(ex.question, ex.hseq, traj, g, cfg, hseq_ref="planted", dataset="planted"))
        ep = run_episode(ex.question, ex.hseq, g, heuristic_policy, cfg)
        f1s.append(proxy_prf(ep.selected, traj.target_ids())[2])
    lines = export_sft(tuples, cfg.top_k)
    valid = 0
    for line in lines:
        try:
            parse_decision(json.loads(line)["output"])
            valid += 1
        except DecisionParseError:
            pass
    mean_f1 = sum(f1s) / len(f1s)
    ok = valid == len(lines) > 0
    report(9, ok, f"{valid}/{len(lines)} exported targets re-parse; heuristic mean proxy F1 = {mean_f1:.4f} (seed 0)")
    assert ok
    assert mean_f1 == pytest.approx(PROXY_F1_PIN, abs=1e-12)


def test_criterion_10_determinism(report, tmp_path):
    examples = planted_examples(40, seed=10)
    h, policy, it = film_setup()
    examples.append(QAExample(FILM_QUESTION, FILM_ANSWER, h))
    digests = []
    for run in ("a", "b"):
        cfg = PipelineConfig(dataset="det", iteration=IterationConfig(8, 2, 6), tick_ms=1.0, parallelism=4)
        rep = evaluate(examples, policy=heuristic_policy, head_client=mock_head(), cfg=cfg)
        paths = rep.write(tmp_path / run)
        digests.append({name: p.read_bytes() for name, p in paths.items()})
    same = {name: digests[0][name] == digests[1][name] for name in digests[0]}
    ok = all(same.values()) and all(digests[0].values())
    report(10, ok, "byte-identical " + ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
