"""Walk through one question end to end on the built-in film fixture.

    python3 demos/film_walkthrough.py
"""

from hseq.canonical import provenance, verify_content_preserving
from hseq.head import mock_head
from hseq.metrics import em_f1
from hseq.pipeline import PipelineConfig, answer_question
from hseq.toydata import FILM_ANSWER, FILM_QUESTION, film_setup


def main():
    h, policy, it = film_setup()
    print(f"hseq: {len(h)} segments, {len(h.stream())} candidates")
    o = answer_question(FILM_QUESTION, h, policy, mock_head(FILM_ANSWER, ["p_6df9c849"]), PipelineConfig(iteration=it))

    print(f"\nquestion: {FILM_QUESTION}")
    print(f"guidance ({o.guidance.source}): {o.guidance.text}")
    for rec in o.episode.trace:
        print(f"  step {rec.step}: chose {list(rec.chosen_ids)} sufficient={rec.sufficiency} tokens={rec.budget['tokens_used']}")
    print(f"stop: {o.episode.stop_reason} after {o.episode.steps} steps")

    print("\nevidence package:")
    for it_, sid in zip(o.package.items, provenance(o.package, h)):
        print(f"  {sid:<14} {it_.uri:<26} {list(it_.offsets)}  {it_.snippet[:60]}")
    print(f"content preserving: {verify_content_preserving(o.package, h)}")

    em, f1 = em_f1(o.answer.text, FILM_ANSWER)
    print(f"\nanswer: {o.answer.text}  support: {list(o.answer.supporting_ids)}  EM={em} F1={f1}")


if __name__ == "__main__":
    main()
