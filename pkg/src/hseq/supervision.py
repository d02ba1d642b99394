"""Weak supervision for the selection policy.

Weak positives come from answer matches (confidence 1.0) or, when there are
too few, from question/segment word overlap (confidence 0.5).  Trajectories
greedily take up to ``k`` unseen positives per step and mark the step
sufficient once ``u`` positives are in hand.  Each step becomes one SFT record
whose loss mask starts at the end of the prompt.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from ._text import content_tokens
from .engine import IterationConfig, PolicyDecision, jaccard, render_content, window
from .guidance import Guidance, classify_question
from .model import Hseq
from .policy import build_iteration_prompt, parse_decision, render_decision

EXACT, LEXICAL = "exact", "lexical"
EXACT_CONFIDENCE, LEXICAL_CONFIDENCE = 1.0, 0.5


@dataclass(frozen=True)
class WeakPositive:
    segment_id: str
    confidence: float
    match_kind: str
    position: int  # index in the stream; the tie-break

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError("confidence must lie in (0, 1]")


@dataclass(frozen=True)
class TrajectoryStep:
    ids: tuple[str, ...]
    sufficient: bool
    weight: float


@dataclass(frozen=True)
class TargetTrajectory:
    steps: tuple[TrajectoryStep, ...]

    @property
    def stop_time(self) -> int:
        return len(self.steps)

    @property
    def sufficient(self) -> bool:
        return bool(self.steps) and self.steps[-1].sufficient

    def target_ids(self) -> list[str]:
        return [i for st in self.steps for i in st.ids]


def weak_positives(
    q: str,
    gold_answer: str,
    h: Hseq,
    candidate_cap: int = 48,
    fallback_n: int = 1,
) -> list[WeakPositive]:
    """Positives among the first ``candidate_cap`` stream segments, best first."""
    if not gold_answer or not gold_answer.strip():
        raise ValueError("gold_answer must be nonempty")
    gold = gold_answer.strip().lower()
    cands = h.stream()[:candidate_cap]
    out = [
        WeakPositive(s.id, EXACT_CONFIDENCE, EXACT, pos)
        for pos, s in enumerate(cands)
        if gold in render_content(s).lower()
    ]
    if len(out) < fallback_n:
        have = {p.segment_id for p in out}
        qt = content_tokens(q)
        scored = []
        for pos, s in enumerate(cands):
            if s.id in have:
                continue
            score = jaccard(qt, content_tokens(render_content(s)))
            if score > 0:
                scored.append((-score, pos, s.id))
        scored.sort()
        for _, pos, sid in scored[: fallback_n - len(out)]:
            out.append(WeakPositive(sid, LEXICAL_CONFIDENCE, LEXICAL, pos))
    return sorted(out, key=lambda p: (-p.confidence, p.position))


def synthesize_trajectory(positives: Sequence[WeakPositive], k: int, u: int = 1) -> TargetTrajectory:
    if k < 1 or u < 1:
        raise ValueError("need k >= 1 and u >= 1")
    pool = sorted({p.segment_id: p for p in positives}.values(), key=lambda p: (-p.confidence, p.position))
    steps = []
    taken = 0
    while pool:
        picks, pool = pool[:k], pool[k:]
        taken += len(picks)
        weight = sum(p.confidence for p in picks) / len(picks)
        done = taken >= u
        steps.append(TrajectoryStep(tuple(p.segment_id for p in picks), done, weight))
        if done:
            break
    return TargetTrajectory(tuple(steps))


def proxy_prf(chosen: Iterable[str], target: Iterable[str]) -> tuple[float, float, float]:
    """Micro precision/recall/F1 over id sets; an empty denominator scores 1.0."""
    c, t = set(chosen), set(target)
    hit = len(c & t)
    precision = hit / len(c) if c else 1.0
    recall = hit / len(t) if t else 1.0
    if precision + recall == 0:
        return precision, recall, 0.0
    f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


# --- SFT tuples ------------------------------------------------------------


def question_sha1(q: str) -> str:
    return hashlib.sha1(q.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TrainingTuple:
    question: str
    question_type: str | None
    hseq_ref: str
    trajectory: TargetTrajectory
    prompts: tuple[str, ...]
    outputs: tuple[str, ...]
    dataset: str = "default"

    def decisions(self) -> list[PolicyDecision]:
        return [parse_decision(o) for o in self.outputs]


def step_decision(step: TrajectoryStep, k: int) -> PolicyDecision:
    return PolicyDecision(step.ids, "guided_topk", k, step.sufficient)


def build_training_tuple(
    q: str,
    h: Hseq,
    trajectory: TargetTrajectory,
    guidance: Guidance | None,
    cfg: IterationConfig | None = None,
    *,
    hseq_ref: str = "",
    dataset: str = "default",
) -> TrainingTuple:
    """Replay the trajectory through real windows and render one prompt/output pair per step.

    Raises ValueError when a target id is not in the window of its step
    (keep ``candidate_cap <= window_size`` to rule this out).
    """
    cfg = cfg or IterationConfig()
    selected: list[str] = []
    prompts, outputs = [], []
    for t, step in enumerate(trajectory.steps, start=1):
        if len(step.ids) > cfg.top_k:
            raise ValueError(f"step {t} selects {len(step.ids)} ids, top_k is {cfg.top_k}")
        win = window(h, selected, cfg.window_size)
        in_win = {s.id for s in win}
        missing = [i for i in step.ids if i not in in_win]
        if missing:
            raise ValueError(f"step {t}: target ids {missing} are not in the window")
        _, user = build_iteration_prompt(q, guidance, [h[i] for i in selected], win, cap=cfg.snippet_cap)
        prompts.append(user)
        outputs.append(render_decision(step_decision(step, cfg.top_k)))
        selected.extend(step.ids)
    qtype = guidance.question_type if guidance is not None else classify_question(q)
    return TrainingTuple(q, qtype, hseq_ref, trajectory, tuple(prompts), tuple(outputs), dataset)


def sft_records(tuples: Iterable[TrainingTuple], k: int | None = None) -> list[dict]:
    records = []
    for tt in tuples:
        qsha = question_sha1(tt.question)
        for t, (prompt, output, step) in enumerate(zip(tt.prompts, tt.outputs, tt.trajectory.steps), start=1):
            try:
                got = parse_decision(output)
            except ValueError as exc:
                raise ValueError(f"{tt.dataset}/{qsha} step {t}: target does not parse: {exc}") from None
            if got.segment_ids != step.ids or got.sufficiency != step.sufficient or (k is not None and got.top_k != k):
                raise ValueError(f"{tt.dataset}/{qsha} step {t}: target does not match the trajectory")
            records.append(
                {
                    "prompt": prompt,
                    "output": output,
                    "mask_boundary": len(prompt),
                    "meta": {"dataset": tt.dataset, "question_sha1": qsha, "step": t, "weight": step.weight},
                }
            )
    records.sort(key=lambda r: (r["meta"]["dataset"], r["meta"]["question_sha1"], r["meta"]["step"]))
    return records


def export_sft(tuples: Iterable[TrainingTuple], k: int | None = None) -> list[str]:
    """One JSON line per trajectory step, ordered by (dataset, question hash, step)."""
    return [json.dumps(r, ensure_ascii=False, separators=(",", ":")) for r in sft_records(tuples, k)]
