"""End-to-end question answering and evaluation: guidance, selection, packaging, answering, scoring."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .canonical import EvidencePackage, canonicalize
from .engine import BudgetState, EpisodeResult, IterationConfig, TickClock, run_episode
from .guidance import Guidance, cached_guidance
from .head import Answer, EpisodeHandle, RefinementConfig, refine, synthesize
from .metrics import em_f1
from .model import Hseq

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QAExample:
    question: str
    answer: str = ""
    hseq: Hseq | None = None


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "default"
    iteration: IterationConfig = field(default_factory=IterationConfig)
    token_budget: int | None = None
    call_budget: int | None = None
    refinement_delta: int = 0
    parallelism: int = 1
    tick_ms: float | None = None  # deterministic clock when set
    cache_root: str | None = None

    def clock(self):
        return TickClock(self.tick_ms) if self.tick_ms is not None else time.perf_counter

    def budget(self) -> BudgetState:
        return BudgetState.for_config(self.iteration, token_budget=self.token_budget, call_budget=self.call_budget)


@dataclass(frozen=True)
class QAOutcome:
    question: str
    guidance: Guidance
    episode: EpisodeResult
    package: EvidencePackage
    answer: Answer
    refinement: EpisodeResult | None
    total_latency_ms: float

    @property
    def steps(self) -> int:
        return self.episode.steps + (self.refinement.steps if self.refinement else 0)

    @property
    def selection_latency_ms(self) -> float:
        return self.episode.selection_ms + (self.refinement.selection_ms if self.refinement else 0.0)

    def answer_record(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer.text,
            "supporting_ids": list(self.answer.supporting_ids),
            "refined": self.answer.refined,
            "steps": self.steps,
            "selection_latency_ms": self.selection_latency_ms,
            "head_latency_ms": self.answer.head_latency_ms,
            "total_latency_ms": self.total_latency_ms,
        }


def answer_question(
    q: str,
    h: Hseq,
    policy,
    head_client,
    cfg: PipelineConfig | None = None,
    *,
    planner=None,
    episode_ref: str = "",
) -> QAOutcome:
    cfg = cfg or PipelineConfig()
    clock = cfg.clock()
    start = clock()
    g = cached_guidance(cfg.dataset, q, planner, cache_root=cfg.cache_root)
    budget = cfg.budget()
    ep = run_episode(q, h, g, policy, cfg.iteration, budget, clock=clock, episode_ref=episode_ref)
    pkg = canonicalize(ep.selected, h, q, episode_ref=episode_ref)
    ans = synthesize(q, pkg, g, head_client)
    refinement = None
    if cfg.refinement_delta > 0:
        handle = EpisodeHandle(h, policy, cfg.iteration, ep, g, budget, clock)
        out = refine(ans, pkg, q, handle, RefinementConfig(cfg.refinement_delta), head_client)
        ans, pkg, refinement = out.answer, out.package, out.episode
    total = (clock() - start) * 1000.0
    return QAOutcome(q, g, ep, pkg, ans, refinement, total)


@dataclass(frozen=True)
class EvalRecord:
    question: str
    gold: str
    predicted: str
    em: int
    f1: float
    steps: int
    selection_latency_ms: float
    head_latency_ms: float
    total_latency_ms: float
    supporting_ids: tuple[str, ...] = ()
    refined: bool = False
    stop_reason: str = ""
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["supporting_ids"] = list(self.supporting_ids)
        return json.dumps(d, ensure_ascii=False, separators=(",", ":"))


METRIC_FIELDS = ("em", "f1", "steps", "selection_latency_ms", "head_latency_ms", "total_latency_ms")


def aggregate(records: Sequence[EvalRecord]) -> dict:
    n = len(records)
    out: dict = {"n": n, "errors": sum(r.error is not None for r in records)}
    for name in METRIC_FIELDS:
        out[name] = sum(getattr(r, name) for r in records) / n if n else 0.0
    return out


@dataclass
class EvalReport:
    records: list[EvalRecord]
    aggregate: dict
    outcomes: list[QAOutcome | None]

    def trace_lines(self) -> list[str]:
        lines = []
        for o in self.outcomes:
            if o is None:
                continue
            lines.extend(o.episode.trace_lines())
            if o.refinement is not None:
                lines.extend(o.refinement.trace_lines())
        return lines

    def package_lines(self) -> list[str]:
        return [o.package.to_json() for o in self.outcomes if o is not None]

    def record_lines(self) -> list[str]:
        return [r.to_json() for r in self.records]

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trace": out / "trace.jsonl", "packages": out / "packages.jsonl", "records": out / "records.jsonl"}
        write_lines(paths["trace"], self.trace_lines())
        write_lines(paths["packages"], self.package_lines())
        write_lines(paths["records"], self.record_lines())
        return paths


def write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _evaluate_one(i, ex: QAExample, h, policy, head_client, cfg, planner):
    hq = ex.hseq if ex.hseq is not None else h
    ref = f"{cfg.dataset}/{i:05d}"
    try:
        if hq is None:
            raise ValueError("no hseq for this question")
        o = answer_question(ex.question, hq, policy, head_client, cfg, planner=planner, episode_ref=ref)
    except Exception as exc:
        log.warning("%s failed: %s", ref, exc)
        return EvalRecord(ex.question, ex.answer, "", 0, 0.0, 0, 0.0, 0.0, 0.0, error=f"{type(exc).__name__}: {exc}"), None
    em, f1 = em_f1(o.answer.text, ex.answer)
    rec = EvalRecord(
        question=ex.question,
        gold=ex.answer,
        predicted=o.answer.text,
        em=em,
        f1=f1,
        steps=o.steps,
        selection_latency_ms=o.selection_latency_ms,
        head_latency_ms=o.answer.head_latency_ms,
        total_latency_ms=o.total_latency_ms,
        supporting_ids=o.answer.supporting_ids,
        refined=o.answer.refined,
        stop_reason=o.episode.stop_reason,
    )
    return rec, o


def evaluate(
    examples: Sequence[QAExample],
    h: Hseq | None = None,
    *,
    policy,
    head_client,
    cfg: PipelineConfig | None = None,
    planner=None,
) -> EvalReport:
    """Run every example; failures become em=0/f1=0 records.  Output order follows input order."""
    cfg = cfg or PipelineConfig()
    jobs = [(i, ex, h, policy, head_client, cfg, planner) for i, ex in enumerate(examples)]
    if cfg.parallelism > 1:
        with ThreadPoolExecutor(cfg.parallelism) as pool:
            results = list(pool.map(lambda a: _evaluate_one(*a), jobs))
    else:
        results = [_evaluate_one(*a) for a in jobs]
    records = [r for r, _ in results]
    return EvalReport(records, aggregate(records), [o for _, o in results])
