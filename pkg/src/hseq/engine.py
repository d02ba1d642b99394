"""Windowed, budgeted selection loop over the stream of an :class:`~hseq.model.Hseq`.

Each step shows the policy the earliest ``W`` unselected candidates in stream
order, adds up to ``k`` of its picks to the selected set, and recomputes the
window.  Unpicked candidates stay in later windows until they are selected.
The loop stops when the policy reports sufficiency (after ``t_min`` steps),
when the budget or step cap runs out, or when the stream is exhausted.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Protocol, Sequence

from ._text import content_tokens, estimate_tokens, one_line
from .model import Hseq, Level, Segment

log = logging.getLogger(__name__)

STOP_SUFFICIENT = "sufficient"
STOP_BUDGET = "budget_exhausted"
STOP_STREAM = "stream_exhausted"

DEFAULT_SNIPPET_CAP = 300


@dataclass
class BudgetState:
    """Per-episode counters; ``None`` limits are unbounded."""

    step_cap: int | None = None
    min_steps: int = 1
    token_budget: int | None = None
    call_budget: int | None = None
    latency_budget_ms: float | None = None
    steps_used: int = 0
    tokens_used: int = 0
    calls_used: int = 0
    elapsed_ms: float = 0.0

    @classmethod
    def for_config(cls, cfg: "IterationConfig", **limits) -> "BudgetState":
        return cls(step_cap=cfg.t_max, min_steps=cfg.t_min, **limits)

    def exhausted(self) -> bool:
        pairs = (
            (self.steps_used, self.step_cap),
            (self.tokens_used, self.token_budget),
            (self.calls_used, self.call_budget),
            (self.elapsed_ms, self.latency_budget_ms),
        )
        return any(cap is not None and used >= cap for used, cap in pairs)

    def charge(self, *, tokens: int = 0, calls: int = 0, elapsed_ms: float = 0.0, steps: int = 0) -> None:
        if min(tokens, calls, elapsed_ms, steps) < 0:
            raise ValueError("budget counters never decrease")
        self.tokens_used += tokens
        self.calls_used += calls
        self.elapsed_ms += elapsed_ms
        self.steps_used += steps

    def would_overflow_tokens(self, tokens: int) -> bool:
        return self.token_budget is not None and self.tokens_used + tokens > self.token_budget

    def fresh(self) -> "BudgetState":
        """Same limits, zeroed counters."""
        return replace(self, steps_used=0, tokens_used=0, calls_used=0, elapsed_ms=0.0)

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationConfig:
    window_size: int = 48
    top_k: int = 4
    t_max: int = 6
    t_min: int = 1
    sufficiency_threshold: float = 0.5
    snippet_cap: int = DEFAULT_SNIPPET_CAP

    def __post_init__(self):
        if not self.window_size >= self.top_k >= 1:
            raise ValueError(f"need window_size >= top_k >= 1, got W={self.window_size}, k={self.top_k}")
        if not self.t_max >= self.t_min >= 1:
            raise ValueError(f"need t_max >= t_min >= 1, got {self.t_max}, {self.t_min}")
        if not 0.0 <= self.sufficiency_threshold <= 1.0:
            raise ValueError("sufficiency_threshold must lie in [0, 1]")
        if self.snippet_cap < 1:
            raise ValueError("snippet_cap must be positive")

    def context_cap(self) -> int:
        """Upper bound on the characters of one presented window."""
        return self.window_size * self.snippet_cap


@dataclass(frozen=True)
class PolicyDecision:
    segment_ids: tuple[str, ...]
    strategy: str = "guided_topk"
    top_k: int = 1
    sufficiency: bool = False
    sufficiency_score: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segment_ids", tuple(self.segment_ids))

    @property
    def score(self) -> float:
        if self.sufficiency_score is not None:
            return self.sufficiency_score
        return 1.0 if self.sufficiency else 0.0


@dataclass(frozen=True)
class StepState:
    """What a policy sees at one step."""

    question: str
    guidance: object | None
    selected: tuple[Segment, ...]
    window: tuple[Segment, ...]
    top_k: int
    step: int
    budget: BudgetState
    snippet_cap: int = DEFAULT_SNIPPET_CAP


class SelectionPolicy(Protocol):
    def __call__(self, state: StepState) -> PolicyDecision: ...


@dataclass(frozen=True)
class StepRecord:
    step: int
    window_ids: tuple[str, ...]
    chosen_ids: tuple[str, ...]
    dropped_ids: tuple[str, ...]
    sufficiency: bool
    sufficiency_score: float
    strategy: str
    budget: dict
    elapsed_ms: float
    context_chars: int
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("window_ids", "chosen_ids", "dropped_ids", "warnings"):
            d[key] = list(d[key])
        return d


@dataclass(frozen=True)
class EpisodeResult:
    selected: tuple[str, ...]
    steps: int
    stop_reason: str
    trace: tuple[StepRecord, ...] = ()
    question: str = ""
    episode_ref: str = ""

    def trace_lines(self) -> list[str]:
        lines = []
        for rec in self.trace:
            d = {"episode_ref": self.episode_ref, **rec.to_dict()}
            lines.append(json.dumps(d, ensure_ascii=False, separators=(",", ":")))
        return lines

    @property
    def selection_ms(self) -> float:
        return sum(r.elapsed_ms for r in self.trace)


class EpisodeError(RuntimeError):
    """A policy failed mid-episode; ``partial`` holds the consistent result up to the last good step."""

    def __init__(self, message: str, partial: EpisodeResult):
        super().__init__(message)
        self.partial = partial


class BudgetExceededError(RuntimeError):
    """A call would overflow the token budget; raised before any work is done."""


# --- window ---------------------------------------------------------------


def window(h: Hseq, selected: Iterable[str], W: int) -> list[Segment]:
    """The earliest ``W`` unselected candidates in stream order."""
    if W < 1:
        raise ValueError("window size must be >= 1")
    chosen = set(selected)
    out = []
    for seg in h.stream():
        if seg.id not in chosen:
            out.append(seg)
            if len(out) == W:
                break
    return out


def render_content(seg: Segment) -> str:
    """Human-readable one-line view: text verbatim, rows as ``col: val; ...``, triples as ``h r t``."""
    c = seg.content
    if seg.level is Level.TABLE_ROW:
        return "; ".join(f"{k}: {v}" for k, v in c.items())
    if seg.level is Level.TRIPLET:
        return " ".join(c)
    return str(c)


def truncated(seg: Segment, cap: int) -> str:
    return one_line(render_content(seg))[:cap]


def context_chars(segs: Sequence[Segment], cap: int) -> int:
    return sum(len(truncated(s, cap)) for s in segs)


# --- scoring --------------------------------------------------------------


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def _guidance_keywords(guidance) -> list[str]:
    return list(getattr(guidance, "keywords", ()) or ())


def heuristic_policy(state: StepState) -> PolicyDecision:
    """Deterministic lexical baseline.

    Score = Jaccard(question, segment) + 0.1 per guidance keyword present in the
    segment.  Picks the top-k (ties by stream order).  Sufficient when the
    picked and already-selected segments cover at least 80% of the question's
    content words, or when nothing in the window scores at least 0.05.
    """
    if not state.window:
        raise ValueError("heuristic_policy needs a nonempty window")
    q = content_tokens(state.question)
    keywords = _guidance_keywords(state.guidance)
    scored = []
    for pos, seg in enumerate(state.window):
        toks = content_tokens(render_content(seg))
        score = jaccard(q, toks) + 0.1 * sum(1 for kw in keywords if kw in toks)
        scored.append((-score, pos, seg, toks))
    scored.sort(key=lambda t: (t[0], t[1]))
    picked = scored[: state.top_k]
    best = -scored[0][0]

    covered = set()
    for seg in state.selected:
        covered |= content_tokens(render_content(seg))
    for _, _, _, toks in picked:
        covered |= toks
    coverage = len(q & covered) / len(q) if q else 1.0
    sufficient = coverage >= 0.8 or best < 0.05
    return PolicyDecision(
        segment_ids=tuple(seg.id for _, _, seg, _ in picked),
        strategy="heuristic_topk",
        top_k=state.top_k,
        sufficiency=sufficient,
    )


class OraclePolicy:
    """Picks the stream-earliest unselected targets in the window; sufficient once all are selected."""

    def __init__(self, target_ids: Iterable[str]):
        self.targets = set(target_ids)

    def __call__(self, state: StepState) -> PolicyDecision:
        have = {s.id for s in state.selected}
        picks = [s.id for s in state.window if s.id in self.targets and s.id not in have][: state.top_k]
        done = self.targets <= have | set(picks)
        return PolicyDecision(tuple(picks), "oracle", state.top_k, done)


class ScriptedPolicy:
    """Replays a fixed list of ``(ids, sufficiency)`` steps; empty picks once the script runs out."""

    def __init__(self, steps: Sequence[tuple[Sequence[str], bool]]):
        self.steps = [(tuple(ids), bool(s)) for ids, s in steps]

    def __call__(self, state: StepState) -> PolicyDecision:
        i = state.step - 1
        ids, suff = self.steps[i] if i < len(self.steps) else ((), False)
        return PolicyDecision(ids, "scripted", max(state.top_k, len(ids)), suff)


# --- episode loop ---------------------------------------------------------


def _ms(clock, start) -> float:
    return (clock() - start) * 1000.0


def run_episode(
    question: str,
    h: Hseq,
    guidance,
    policy: SelectionPolicy,
    cfg: IterationConfig | None = None,
    budget: BudgetState | None = None,
    *,
    selected: Sequence[str] = (),
    clock: Callable[[], float] = time.perf_counter,
    episode_ref: str = "",
) -> EpisodeResult:
    """Run one guided selection episode.

    ``selected`` seeds the selected set (used when resuming for refinement).
    Policies exposing ``bills_budget = True`` charge tokens, calls and latency
    themselves; for all others the engine charges the rendered step prompt plus
    the rendered decision at ``ceil(chars / 4)`` tokens, one call, and the step's
    wall time.
    """
    from .policy import build_iteration_prompt, render_decision

    cfg = cfg or IterationConfig()
    budget = budget if budget is not None else BudgetState.for_config(cfg)
    bills = bool(getattr(policy, "bills_budget", False))
    M: list[str] = list(dict.fromkeys(selected))
    trace: list[StepRecord] = []

    def result(reason):
        return EpisodeResult(tuple(M), len(trace), reason, tuple(trace), question, episode_ref)

    C = window(h, M, cfg.window_size)
    if not C:
        return result(STOP_STREAM)

    for t in range(1, cfg.t_max + 1):
        if budget.exhausted():
            return result(STOP_BUDGET)
        start = clock()
        selected_segs = tuple(h[i] for i in M)
        state = StepState(question, guidance, selected_segs, tuple(C), cfg.top_k, t, budget, cfg.snippet_cap)
        try:
            decision = policy(state)
        except BudgetExceededError:
            log.info("episode %s: token budget would overflow at step %d", episode_ref, t)
            return result(STOP_BUDGET)
        except Exception as exc:
            raise EpisodeError(f"policy failed at step {t}: {exc}", result("error")) from exc

        warnings = []
        in_window = {s.id for s in C}
        chosen, dropped = [], []
        for sid in decision.segment_ids:
            if sid in in_window and sid not in chosen:
                chosen.append(sid)
            else:
                dropped.append(sid)
        if dropped:
            warnings.append(f"dropped ids outside the window: {dropped}")
            log.warning("episode %s step %d: %s", episode_ref, t, warnings[-1])
        if len(chosen) > cfg.top_k:
            warnings.append(f"truncated {len(chosen)} picks to top_k={cfg.top_k}")
            chosen = chosen[: cfg.top_k]

        ctx = context_chars(C, cfg.snippet_cap)
        if bills:
            budget.charge(steps=1)
        else:
            system, user = build_iteration_prompt(question, guidance, selected_segs, C, cap=cfg.snippet_cap)
            tokens = estimate_tokens(system) + estimate_tokens(user) + estimate_tokens(render_decision(decision))
            budget.charge(steps=1, tokens=tokens, calls=1, elapsed_ms=_ms(clock, start))

        M.extend(chosen)
        window_ids = tuple(s.id for s in C)
        C = window(h, M, cfg.window_size)
        score = decision.score
        trace.append(
            StepRecord(
                step=t,
                window_ids=window_ids,
                chosen_ids=tuple(chosen),
                dropped_ids=tuple(dropped),
                sufficiency=score >= cfg.sufficiency_threshold,
                sufficiency_score=score,
                strategy=decision.strategy,
                budget=budget.snapshot(),
                elapsed_ms=_ms(clock, start),
                context_chars=ctx,
                warnings=tuple(warnings),
            )
        )
        if score >= cfg.sufficiency_threshold and t >= cfg.t_min:
            return result(STOP_SUFFICIENT)
        if budget.exhausted() or t == cfg.t_max:
            return result(STOP_BUDGET)
        if not C:
            return result(STOP_STREAM)
    return result(STOP_BUDGET)


class TickClock:
    """Deterministic clock advancing a fixed number of milliseconds per reading."""

    def __init__(self, tick_ms: float = 1.0):
        self.tick = tick_ms / 1000.0
        self.now = 0.0

    def __call__(self) -> float:
        self.now += self.tick
        return self.now
