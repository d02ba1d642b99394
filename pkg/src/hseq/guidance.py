"""Guidance priors: question typing, fixed templates, an optional planner, and a file cache."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

from ._text import content_words, tokenize

log = logging.getLogger(__name__)

NUMERIC, FACTOID, BINARY, DEFAULT = "numeric", "factoid", "binary", "default"
QUESTION_TYPES = (NUMERIC, FACTOID, BINARY, DEFAULT)

# cue lists are fixed on purpose; see README "Question types"
_NUMERIC_CUES = re.compile(
    r"\bhow (many|much|long|old|far|large|big|tall)\b"
    r"|\b(number of|percentage|percent|ratio|average|total|sum|difference|increase|decrease|proportion)\b"
    r"|[%+*/=]"
)
_BINARY_STARTS = ("is", "are", "do", "does", "did", "was", "were", "can")
_FACTOID_STARTS = ("who", "which", "where", "when", "what")

PLAN_PREFIX = "Plan: retrieve a minimal set of highly relevant snippets; prefer concise facts."
TYPE_SENTENCES = {
    NUMERIC: "Look for numeric mentions and table rows; stop when final number is explicit or corroborated.",
    FACTOID: "Focus on short spans that directly contain the answer; stop on a clear statement.",
    BINARY: "Retrieve one-two definitive statements; stop when evidence strongly supports yes/no.",
    DEFAULT: "Prefer snippets naming key entities/relations; stop when answer is explicitly stated.",
}

PLANNER_SYSTEM_PROMPT = (
    "You are a planning assistant. Given a question, write a short retrieval plan for an "
    "iteration agent selecting evidence snippets. Specify ONLY what to retrieve first, "
    "possible branches, and when to stop (sufficiency condition)."
)
CONTINUATION_REQUEST = "Continue the plan in one sentence that ends with an explicit stop condition."
MIN_PLAN_TOKENS = 15

_STOP_RE = re.compile(r"\b(stop|sufficien\w*|halt)\b", re.IGNORECASE)


@dataclass(frozen=True)
class Guidance:
    text: str
    source: str
    question_type: str
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("guidance text must be nonempty")
        object.__setattr__(self, "keywords", tuple(self.keywords))


def classify_question(q: str) -> str:
    if not q or not q.strip():
        raise ValueError("question must be nonempty")
    low = q.strip().lower()
    if _NUMERIC_CUES.search(low):
        return NUMERIC
    words = tokenize(low)
    first = words[0] if words else ""
    if first in _BINARY_STARTS:
        return BINARY
    if first in _FACTOID_STARTS:
        return FACTOID
    return DEFAULT


def _last_sentence(text: str) -> str:
    parts = [p for p in re.split(r"(?<=[.!?])\s+", text.strip()) if p]
    return parts[-1] if parts else ""


def has_stop_condition(text: str) -> bool:
    """True when the final sentence states when to stop."""
    return bool(_STOP_RE.search(_last_sentence(text)))


def template_guidance(q: str, question_type: str | None = None) -> Guidance:
    qtype = question_type or classify_question(q)
    if qtype not in TYPE_SENTENCES:
        raise ValueError(f"unknown question type {qtype!r}")
    return Guidance(f"{PLAN_PREFIX} {TYPE_SENTENCES[qtype]}", "template", qtype, tuple(content_words(q)))


def plan_with_head(q: str, question_type: str, planner, *, max_output_tokens: int = 96) -> str:
    """Draft a plan with ``planner``; ask once more when the draft is short or has no stop condition."""
    from .policy import ChatRequest

    user = f"Question: {q}\nQuestion type: {question_type}\nPlan:"
    model = getattr(planner, "model", "")
    draft = planner.chat_complete(ChatRequest(PLANNER_SYSTEM_PROMPT, user, max_output_tokens, 0.0, model)).text.strip()
    if len(tokenize(draft)) < MIN_PLAN_TOKENS or not has_stop_condition(draft):
        follow = f"{user} {draft}\n{CONTINUATION_REQUEST}"
        more = planner.chat_complete(ChatRequest(PLANNER_SYSTEM_PROMPT, follow, max_output_tokens, 0.0, model))
        draft = f"{draft} {more.text.strip()}".strip()
    if not has_stop_condition(draft):
        # keep the contract even when the continuation ignores the request
        draft = f"{draft} {TYPE_SENTENCES[question_type].split('; ', 1)[1].capitalize()}"
    return draft


def cache_key(dataset: str, q: str) -> str:
    return f"{dataset}/{hashlib.sha1(q.encode('utf-8')).hexdigest()}"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cached_guidance(
    dataset: str,
    q: str,
    planner=None,
    *,
    cache_root=None,
    head_model_id: str | None = None,
) -> Guidance:
    """Guidance from ``<cache_root>/<head_model_id>/<dataset>/<sha1(q)>``, else planner, else template.

    Planner failures are logged and fall back to the template.  With no
    ``cache_root`` nothing is read or written.
    """
    qtype = classify_question(q)
    keywords = tuple(content_words(q))
    model_id = head_model_id or (getattr(planner, "model", "") or "planner" if planner else "template")
    path = Path(cache_root, model_id, cache_key(dataset, q)) if cache_root is not None else None

    if path is not None and path.is_file():
        return Guidance(path.read_text(encoding="utf-8"), "cache", qtype, keywords)

    g = None
    if planner is not None:
        try:
            g = Guidance(plan_with_head(q, qtype, planner), "planner", qtype, keywords)
        except Exception as exc:
            log.warning("planner failed for %s: %s; using template", cache_key(dataset, q), exc)
    if g is None:
        g = template_guidance(q, qtype)
    if path is not None:
        _atomic_write(path, g.text)
    return g


def tighten(g: Guidance | None, q: str) -> Guidance:
    """Refinement guidance: same prior plus an explicit-statement stop rule."""
    base = g if g is not None else template_guidance(q)
    text = f"{base.text} Refine: look only for a snippet that states the answer verbatim; stop as soon as one is found."
    return Guidance(text, base.source, base.question_type, base.keywords)
