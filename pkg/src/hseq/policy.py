"""LLM-backed selection policy: step prompt, strict action schema, chat-completion client."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Callable

import requests

from ._text import estimate_tokens
from .engine import (
    DEFAULT_SNIPPET_CAP,
    BudgetExceededError,
    BudgetState,
    PolicyDecision,
    StepState,
    heuristic_policy,
    truncated,
)

log = logging.getLogger(__name__)

ITERATION_SYSTEM_PROMPT = (
    "You are an iteration agent working over a hierarchical sequence (H-Seq).\n"
    "Given a question and a list of candidate segments (each with an id and text)\n"
    "select the top-k segment_ids that best support answering the question.\n"
    "Then decide if the selected evidence is sufficient to stop.\n"
    "Return ONLY compact JSON with keys: type, args.segment_ids, args.strategy, args.top_k, sufficiency.\n"
    "WITHOUT ANY EXPLAINATION."
)

JSON_REMINDER = "Return ONLY compact JSON"

SECTIONS = (
    "### Instruction",
    "### Question",
    "### Guidance",
    "### Selected-So-Far",
    "### Candidate-Window",
    "### Output (JSON)",
)


def _segment_lines(segs, cap):
    return [f"- [{s.id}] {truncated(s, cap)}" for s in segs]


def build_iteration_prompt(question, guidance, selected, window, *, cap=DEFAULT_SNIPPET_CAP) -> tuple[str, str]:
    """``(system, user)`` strings for one selection step."""
    g = "" if guidance is None else getattr(guidance, "text", str(guidance))
    lines = [SECTIONS[0], ITERATION_SYSTEM_PROMPT, SECTIONS[1], question, SECTIONS[2]]
    if g:
        lines.append(g)
    lines.append(SECTIONS[3])
    lines.extend(_segment_lines(selected, cap))
    lines.append(SECTIONS[4])
    lines.extend(_segment_lines(window, cap))
    lines.append(SECTIONS[5])
    return ITERATION_SYSTEM_PROMPT, "\n".join(lines) + "\n"


# --- action schema -------------------------------------------------------


class DecisionParseError(ValueError):
    """Completion is not a valid select action; eligible for a re-prompt."""


_FENCE = re.compile(r"^```[A-Za-z0-9_-]*\s*\n?(.*?)\n?\s*```$", re.DOTALL)


def render_decision(d: PolicyDecision) -> str:
    obj = {
        "type": "select",
        "args": {"segment_ids": list(d.segment_ids), "strategy": d.strategy, "top_k": d.top_k},
        "sufficiency": bool(d.sufficiency),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def parse_decision(text: str) -> PolicyDecision:
    """Parse ``{"type": "select", "args": {...}, "sufficiency": bool}``; anything else raises."""
    body = text.strip()
    m = _FENCE.match(body)
    if m:
        body = m.group(1).strip()
    try:
        obj = json.loads(body)
    except json.JSONDecodeError:
        raise DecisionParseError(f"not JSON: {text[:80]!r}") from None
    if not isinstance(obj, dict) or set(obj) != {"type", "args", "sufficiency"}:
        raise DecisionParseError("expected exactly the keys type, args, sufficiency")
    if obj["type"] != "select":
        raise DecisionParseError(f"unknown action type {obj['type']!r}")
    args = obj["args"]
    if not isinstance(args, dict) or set(args) != {"segment_ids", "strategy", "top_k"}:
        raise DecisionParseError("args must have exactly segment_ids, strategy, top_k")
    ids, strategy, top_k = args["segment_ids"], args["strategy"], args["top_k"]
    if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
        raise DecisionParseError("segment_ids must be a list of strings")
    if not isinstance(strategy, str):
        raise DecisionParseError("strategy must be a string")
    if not _is_int(top_k) or top_k < 1:
        raise DecisionParseError("top_k must be a positive integer")
    if len(ids) > top_k:
        raise DecisionParseError(f"{len(ids)} segment_ids exceed top_k={top_k}")
    if not isinstance(obj["sufficiency"], bool):
        raise DecisionParseError("sufficiency must be a boolean")
    return PolicyDecision(tuple(ids), strategy, top_k, obj["sufficiency"])


# --- chat client ---------------------------------------------------------


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    max_output_tokens: int = 256
    temperature: float = 0.0
    model: str = ""

    def __post_init__(self):
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


class ChatError(RuntimeError):
    pass


class TransportError(ChatError):
    """Network failure or 5xx that persisted through every retry."""


class AuthenticationError(ChatError):
    pass


def _prompt_estimate(req: ChatRequest) -> int:
    return estimate_tokens(req.system) + estimate_tokens(req.user)


def _bill(budget: BudgetState | None, req: ChatRequest, resp: ChatResponse) -> None:
    if budget is not None:
        budget.charge(tokens=resp.prompt_tokens + resp.completion_tokens, calls=1, elapsed_ms=resp.latency_ms)


def _precheck(budget: BudgetState | None, req: ChatRequest) -> None:
    if budget is not None and budget.would_overflow_tokens(_prompt_estimate(req)):
        raise BudgetExceededError(
            f"prompt estimate {_prompt_estimate(req)} tokens exceeds remaining budget "
            f"{budget.token_budget - budget.tokens_used}"
        )


class ChatClient:
    """Chat-completions client.

    Endpoint, credential and model default to ``HSEQ_ENDPOINT``,
    ``HSEQ_API_KEY`` and ``HSEQ_MODEL``.  Transport errors and 5xx responses are
    retried ``retries`` times with exponential backoff; 401/403 fail at once.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        *,
        temperature: float = 0.0,
        retries: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint or os.environ.get("HSEQ_ENDPOINT")
        if not self.endpoint:
            raise ValueError("no endpoint configured (pass endpoint= or set HSEQ_ENDPOINT)")
        self.api_key = api_key if api_key is not None else os.environ.get("HSEQ_API_KEY")
        self.model = model or os.environ.get("HSEQ_MODEL", "")
        self.temperature = temperature
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self.sleep = sleep
        self.session = session or requests.Session()

    def _payload(self, req: ChatRequest) -> dict:
        return {
            "model": req.model or self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        }

    def chat_complete(self, req: ChatRequest, budget: BudgetState | None = None) -> ChatResponse:
        _precheck(budget, req)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(req)
        last = None
        start = time.perf_counter()
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                r = self.session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("chat attempt %d failed: %s", attempt + 1, last)
                continue
            if r.status_code in (401, 403):
                raise AuthenticationError(f"endpoint rejected credentials (HTTP {r.status_code})")
            if r.status_code >= 500:
                last = f"HTTP {r.status_code}"
                log.warning("chat attempt %d failed: %s", attempt + 1, last)
                continue
            if r.status_code >= 400:
                raise ChatError(f"HTTP {r.status_code}: {r.text[:200]}")
            try:
                body = r.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ChatError(f"unexpected response body: {exc}") from None
            usage = body.get("usage") or {}
            resp = ChatResponse(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", _prompt_estimate(req))),
                completion_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
                latency_ms=(time.perf_counter() - start) * 1000.0,
            )
            _bill(budget, req, resp)
            return resp
        raise TransportError(f"gave up after {self.retries + 1} attempts: {last}")


class CannedChatClient:
    """Offline stand-in for :class:`ChatClient`.

    ``responder`` is a list of completions served in order (the last one
    repeats) or a callable ``ChatRequest -> str``.
    """

    def __init__(self, responder, *, latency_ms: float = 0.0, model: str = "canned"):
        self.responder = responder
        self.latency_ms = latency_ms
        self.model = model
        self.requests: list[ChatRequest] = []

    def chat_complete(self, req: ChatRequest, budget: BudgetState | None = None) -> ChatResponse:
        _precheck(budget, req)
        self.requests.append(req)
        if callable(self.responder):
            text = self.responder(req)
        else:
            i = min(len(self.requests), len(self.responder)) - 1
            text = self.responder[i]
        resp = ChatResponse(text, _prompt_estimate(req), estimate_tokens(text), self.latency_ms)
        _bill(budget, req, resp)
        return resp


class LLMPolicy:
    """Selection policy that asks a chat model for a select action.

    A malformed completion gets one re-prompt carrying a JSON-only reminder;
    if that also fails the step falls back to :func:`heuristic_policy`.
    """

    bills_budget = True

    def __init__(self, client, *, model: str = "", max_output_tokens: int = 128, temperature: float = 0.0):
        self.client = client
        self.model = model
        self.max_output_tokens = max_output_tokens
        self.temperature = temperature

    def _request(self, system, user):
        return ChatRequest(system, user, self.max_output_tokens, self.temperature, self.model)

    def __call__(self, state: StepState) -> PolicyDecision:
        system, user = build_iteration_prompt(
            state.question, state.guidance, state.selected, state.window, cap=state.snippet_cap
        )
        resp = self.client.chat_complete(self._request(system, user), state.budget)
        try:
            return parse_decision(resp.text)
        except DecisionParseError as first:
            log.info("step %d: unparseable decision (%s); re-prompting", state.step, first)
        resp = self.client.chat_complete(self._request(system, user + JSON_REMINDER + "\n"), state.budget)
        try:
            return parse_decision(resp.text)
        except DecisionParseError as second:
            log.warning("step %d: second parse failure (%s); heuristic fallback", state.step, second)
        d = heuristic_policy(state)
        return PolicyDecision(d.segment_ids, "heuristic_fallback", d.top_k, d.sufficiency)

