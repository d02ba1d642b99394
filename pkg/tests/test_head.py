import pytest

from hseq.adapters import Corpus, TextItem, encode
from hseq.canonical import canonicalize
from hseq.engine import BudgetState, IterationConfig, PolicyDecision, TickClock, run_episode
from hseq.guidance import template_guidance
from hseq.head import (
    ABSTAIN,
    Answer,
    EpisodeHandle,
    RefinementConfig,
    build_answer_prompt,
    entailed,
    mock_head,
    refine,
    synthesize,
    verify_and_refine,
)
from hseq.policy import CannedChatClient
from hseq.toydata import FILM_ANSWER, FILM_QUESTION, film_fixture


def film_pkg(ids=("p_6df9c849",)):
    h, _ = film_fixture()
    return h, canonicalize(ids, h, FILM_QUESTION)


def test_one_snippet_prompt_lists_it_once():
    _, pkg = film_pkg()
    system, user = build_answer_prompt(FILM_QUESTION, pkg, template_guidance(FILM_QUESTION))
    assert user.count("[p_6df9c849]") == 1
    assert pkg.items[0].snippet in user
    assert "ANSWER:" in system and "SUPPORT:" in system
    assert build_answer_prompt(FILM_QUESTION, pkg, None) == build_answer_prompt(FILM_QUESTION, pkg, None)


def test_empty_package_prompt_allows_abstention():
    _, pkg = film_pkg(())
    _, user = build_answer_prompt("Who?", pkg)
    assert f"ANSWER: {ABSTAIN}" in user


def test_answer_form_follows_question_type():
    _, pkg = film_pkg()
    numeric, _ = build_answer_prompt("How many?", pkg, template_guidance("How many films?"))
    binary, _ = build_answer_prompt("Is it?", pkg, template_guidance("Is it a film?"))
    assert "a number" in numeric and "yes or no" in binary


def test_synthesize_case_study_answer():
    _, pkg = film_pkg()
    a = synthesize(FILM_QUESTION, pkg, None, mock_head(FILM_ANSWER, ["p_6df9c849"]))
    assert a == Answer("Sergei Lukyanenko", ("p_6df9c849",))


def test_synthesize_keeps_exact_text():
    _, pkg = film_pkg()
    a = synthesize("q", pkg, None, CannedChatClient(["ANSWER: Art Deco-style skyscraper"]))
    assert a.text == "Art Deco-style skyscraper" and a.supporting_ids == ()


def test_unknown_support_dropped():
    _, pkg = film_pkg()
    a = synthesize("q", pkg, None, mock_head(FILM_ANSWER, ["p_6df9c849", "p_nothere"]))
    assert a.text == FILM_ANSWER and a.supporting_ids == ("p_6df9c849",)
    assert set(a.supporting_ids) <= pkg.ids()


def test_unparseable_completion_is_raw_text():
    _, pkg = film_pkg()
    a = synthesize("q", pkg, None, CannedChatClient(["  just words  "]))
    assert a.text == "just words" and a.supporting_ids == ()


def test_head_call_is_billed():
    _, pkg = film_pkg()
    b = BudgetState()
    synthesize("q", pkg, None, mock_head(FILM_ANSWER), budget=b)
    assert b.calls_used == 1 and b.tokens_used > 0


def test_entailment_is_normalized_containment():
    _, pkg = film_pkg()
    assert entailed("sergei LUKYANENKO", pkg)
    assert not entailed("Lukyanenko Sergei", pkg)
    assert not entailed("", pkg)


# --- refinement ------------------------------------------------------------------


def refinement_fixture():
    # the entailing paragraph is second in stream order
    bodies = ["The tower opened in 1931 downtown.", "Its architect was Ada Marsh.", "Tourism grew fast."]
    h = encode(Corpus([TextItem(f"d{i}", f"u{i}", b) for i, b in enumerate(bodies)]))
    first = lambda s: PolicyDecision((s.window[0].id,), "first", 1)  # noqa: E731
    cfg = IterationConfig(window_size=2, top_k=1, t_max=1)
    ep = run_episode("Who was the architect?", h, None, first, cfg)
    pkg = canonicalize(ep.selected, h)
    handle = EpisodeHandle(h, first, cfg, ep, None, BudgetState(step_cap=1), TickClock())
    return h, ep, pkg, handle


def test_entailed_answer_unchanged():
    h, ep, pkg, handle = refinement_fixture()
    a = Answer("1931")
    assert verify_and_refine(a, pkg, "q", handle, RefinementConfig(2), mock_head("x")) == a


def test_delta_zero_flags_verifier_failure():
    h, ep, pkg, handle = refinement_fixture()
    out = verify_and_refine(Answer("Ada Marsh"), pkg, "q", handle, RefinementConfig(0), mock_head("Ada Marsh"))
    assert out.text == "Ada Marsh" and not out.refined and out.verifier_failed


def test_delta_two_adds_rho_next_segment():
    h, ep, pkg, handle = refinement_fixture()
    nxt = h.stream()[1]
    out = refine(Answer("Ada Marsh"), pkg, "Who was the architect?", handle, RefinementConfig(2), mock_head("Ada Marsh"))
    assert out.answer.refined and not out.answer.verifier_failed
    assert out.episode.trace[0].window_ids[0] == nxt.id
    assert out.episode.trace[0].chosen_ids == (nxt.id,)
    assert out.episode.steps <= 2 and ep.steps + out.episode.steps <= 1 + 2
    assert nxt.id in {it.segment_id for it in out.package.items}


def test_reduced_budget_must_not_grow():
    with pytest.raises(ValueError):
        RefinementConfig(1, reduced_budget=BudgetState(token_budget=50)).check_against(BudgetState(token_budget=10))
    with pytest.raises(ValueError):
        RefinementConfig(-1)


def test_extractive_mock_head():
    _, pkg = film_pkg()
    a = synthesize("q", pkg, None, mock_head())
    assert a.supporting_ids == ("p_6df9c849",) and a.text.startswith("Night Watch")
