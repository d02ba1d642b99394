"""Answer synthesis over an evidence package, with an optional one-shot refinement.

The head sees only the question and the package.  Its completion follows a
two-line protocol::

    ANSWER: <answer>
    SUPPORT: <id>, <id>, ...

Supporting ids not present in the package are dropped.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace

from ._text import one_line
from .canonical import EvidencePackage, canonicalize
from .engine import BudgetState, EpisodeResult, IterationConfig, run_episode
from .guidance import BINARY, NUMERIC, Guidance, tighten
from .metrics import normalize_answer

log = logging.getLogger(__name__)

ABSTAIN = "unknown"

_FORMS = {
    NUMERIC: "a number",
    BINARY: "yes or no",
}

_ANSWER_RE = re.compile(r"^\s*ANSWER\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_SUPPORT_RE = re.compile(r"^\s*SUPPORT\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE)


@dataclass(frozen=True)
class Answer:
    text: str
    supporting_ids: tuple[str, ...] = ()
    refined: bool = False
    head_latency_ms: float = 0.0
    verifier_failed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "supporting_ids", tuple(self.supporting_ids))


@dataclass(frozen=True)
class RefinementConfig:
    """``delta`` extra steps at most, under ``tightened_guidance`` and ``reduced_budget``."""

    delta: int = 0
    tightened_guidance: Guidance | None = None
    reduced_budget: BudgetState | None = None

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    def check_against(self, original: BudgetState) -> None:
        """Raise unless every limit of ``reduced_budget`` is at most the original's."""
        if self.reduced_budget is None:
            return
        for name in ("token_budget", "call_budget", "latency_budget_ms"):
            new, old = getattr(self.reduced_budget, name), getattr(original, name)
            if old is not None and (new is None or new > old):
                raise ValueError(f"reduced budget {name}={new} exceeds the original {old}")


def _item_label(it) -> str:
    return it.segment_id or it.id


def build_answer_prompt(q: str, pkg: EvidencePackage, g: Guidance | None = None) -> tuple[str, str]:
    """``(system, user)`` for the head.  ``g`` only sets the requested answer form."""
    form = _FORMS.get(getattr(g, "question_type", None), "a short span copied from the evidence")
    system = (
        "Answer the question using only the evidence snippets provided.\n"
        f"Reply with the answer only ({form}); give no explanation or reasoning.\n"
        "Use exactly two lines:\n"
        "ANSWER: <answer>\n"
        "SUPPORT: <comma-separated ids of the snippets that support the answer>"
    )
    lines = ["### Question", q, "### Evidence"]
    if pkg.items:
        for it in pkg.items:
            lines.append(f"- [{_item_label(it)}] ({it.level.value}) {one_line(it.snippet)}")
    else:
        lines.append("(no evidence was retrieved)")
        lines.append(f"If the question cannot be answered from evidence, reply ANSWER: {ABSTAIN} and leave SUPPORT empty.")
    lines.append("### Answer")
    return system, "\n".join(lines) + "\n"


def parse_answer(text: str, pkg: EvidencePackage) -> tuple[str, tuple[str, ...]]:
    m = _ANSWER_RE.search(text)
    if m is None:
        log.warning("head completion has no ANSWER line; using the raw text")
        return text.strip(), ()
    answer = m.group(1).strip()
    support = []
    s = _SUPPORT_RE.search(text)
    if s is not None:
        known = pkg.ids()
        for raw in re.split(r"[,\s]+", s.group(1)):
            sid = raw.strip().strip("[]")
            if not sid:
                continue
            if sid in known and sid not in support:
                support.append(sid)
            elif sid not in known:
                log.info("dropping supporting id %r not in the package", sid)
    return answer, tuple(support)


def synthesize(q: str, pkg: EvidencePackage, g: Guidance | None, client, *, budget=None, max_output_tokens=64) -> Answer:
    """One head call; ``client`` is a :class:`~hseq.policy.ChatClient` or compatible stand-in."""
    from .policy import ChatRequest

    system, user = build_answer_prompt(q, pkg, g)
    req = ChatRequest(system, user, max_output_tokens, 0.0, getattr(client, "model", ""))
    resp = client.chat_complete(req, budget)
    text, support = parse_answer(resp.text, pkg)
    return Answer(text, support, False, resp.latency_ms)


def entailed(answer: str, pkg: EvidencePackage) -> bool:
    """Normalized containment of the answer in some snippet."""
    a = normalize_answer(answer)
    if not a:
        return False
    return any(f" {a} " in f" {normalize_answer(it.snippet)} " for it in pkg.items)


@dataclass
class EpisodeHandle:
    """Everything needed to resume a finished episode."""

    h: object
    policy: object
    cfg: IterationConfig
    episode: EpisodeResult
    guidance: Guidance | None = None
    budget: BudgetState | None = None
    clock: object = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Refinement:
    answer: Answer
    package: EvidencePackage
    episode: EpisodeResult | None = None


def refine(answer: Answer, pkg: EvidencePackage, q: str, handle: EpisodeHandle, rc: RefinementConfig, client) -> Refinement:
    """Check the answer against the package; resume the episode once if it is unsupported."""
    if entailed(answer.text, pkg):
        return Refinement(answer, pkg)
    if rc.delta == 0:
        return Refinement(replace(answer, verifier_failed=True), pkg)
    if handle.budget is not None:
        rc.check_against(handle.budget)

    g2 = rc.tightened_guidance or tighten(handle.guidance, q)
    cfg2 = replace(handle.cfg, t_max=rc.delta, t_min=1)
    base = rc.reduced_budget or handle.budget or BudgetState()
    budget = replace(base.fresh(), step_cap=rc.delta, min_steps=1)
    kwargs = {"clock": handle.clock} if handle.clock is not None else {}
    ref = f"{handle.episode.episode_ref}+refine" if handle.episode.episode_ref else "refine"
    ep = run_episode(q, handle.h, g2, handle.policy, cfg2, budget, selected=handle.episode.selected, episode_ref=ref, **kwargs)
    pkg2 = canonicalize(ep.selected, handle.h, q, episode_ref=ref)
    second = synthesize(q, pkg2, g2, client)
    out = replace(
        second,
        refined=True,
        head_latency_ms=answer.head_latency_ms + second.head_latency_ms,
        verifier_failed=not entailed(second.text, pkg2),
    )
    return Refinement(out, pkg2, ep)


def verify_and_refine(answer: Answer, pkg: EvidencePackage, q: str, handle: EpisodeHandle, rc: RefinementConfig, client) -> Answer:
    return refine(answer, pkg, q, handle, rc, client).answer


# --- offline heads -----------------------------------------------------------

_ITEM_LINE = re.compile(r"^- \[([^\]]+)\] \([a-z_]+\) (.*)$", re.MULTILINE)


def _first_snippet_reply(req) -> str:
    m = _ITEM_LINE.search(req.user)
    if m is None:
        return f"ANSWER: {ABSTAIN}\nSUPPORT:"
    words = m.group(2).split()
    return f"ANSWER: {' '.join(words[:6])}\nSUPPORT: {m.group(1)}"


def mock_head(answer: str | None = None, support=(), *, latency_ms: float = 0.0):
    """Offline head: a fixed answer, or the first words of the first listed snippet."""
    from .policy import CannedChatClient

    if answer is None:
        return CannedChatClient(_first_snippet_reply, latency_ms=latency_ms, model="mock-extractive")
    reply = f"ANSWER: {answer}\nSUPPORT: {', '.join(support)}"
    return CannedChatClient([reply], latency_ms=latency_ms, model="mock-fixed")
