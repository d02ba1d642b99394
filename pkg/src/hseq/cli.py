"""Command-line entry point: build, iterate, answer, sft, simulate, eval.

Every subcommand accepts ``--config FILE`` (a JSON object keyed by option
name, dashes or underscores) whose values apply wherever the corresponding
flag is not given on the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapters import Corpus, encode
from .canonical import canonicalize
from .engine import IterationConfig, heuristic_policy, run_episode
from .guidance import cached_guidance
from .head import mock_head
from .ingest import FORMATS, ingest
from .model import load, save
from .pipeline import PipelineConfig, QAExample, answer_question, evaluate, write_lines
from .policy import ChatClient, LLMPolicy
from .supervision import build_training_tuple, export_sft, synthesize_trajectory, weak_positives
from .theory import format_reports, simulate_stochastic

log = logging.getLogger("hseq")

DEFAULTS = {
    "window": 48,
    "top_k": 4,
    "t_max": 6,
    "t_min": 1,
    "budget_tokens": None,
    "endpoint": None,
    "model": None,
    "cache_root": None,
    "seed": 0,
    "dataset": "default",
    "policy": "heuristic",
    "head": "mock",
    "mock_answer": None,
    "delta": 0,
    "parallelism": 1,
    "tick_ms": None,
    "u": 1,
    "k": [1],
    "L": [3],
    "m": [1],
    "p": [0.5],
    "trials": 100_000,
    "sampler": "marginal",
    "format": None,
}


def _common(p: argparse.ArgumentParser, *names):
    add = {
        "hseq": lambda: p.add_argument("--hseq", help="hseq file (one segment per line)"),
        "iter": lambda: (
            p.add_argument("--window", type=int, help="window size W"),
            p.add_argument("--top-k", type=int, help="picks per step k"),
            p.add_argument("--t-max", type=int, help="step cap"),
            p.add_argument("--t-min", type=int, help="minimum steps before a sufficiency stop"),
            p.add_argument("--budget-tokens", type=int, help="token budget per episode"),
            p.add_argument("--policy", choices=("heuristic", "llm"), help="selection policy"),
            p.add_argument("--dataset", help="dataset name for guidance cache keys"),
            p.add_argument("--cache-root", help="guidance cache directory"),
        ),
        "llm": lambda: (
            p.add_argument("--endpoint", help="chat-completions URL (default: HSEQ_ENDPOINT)"),
            p.add_argument("--model", help="model id (default: HSEQ_MODEL)"),
        ),
        "head": lambda: (
            p.add_argument("--head", choices=("mock", "llm"), help="answering head"),
            p.add_argument("--mock-answer", help="fixed answer for the mock head"),
            p.add_argument("--delta", type=int, help="refinement steps when the answer is unsupported"),
        ),
    }
    for n in names:
        add[n]()
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output file (or directory for eval)")
    p.add_argument("--config", help="JSON file with option values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hseq", description="Hierarchical-sequence evidence selection and QA.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="ingest a corpus and write an hseq file")
    p.add_argument("--corpus", action="append", help="file or directory; repeat with --format")
    p.add_argument("--format", action="append", choices=FORMATS, help="format of the matching --corpus")
    _common(p)

    p = sub.add_parser("iterate", help="run one selection episode and write its trace")
    p.add_argument("--question", required=True)
    p.add_argument("--package-out", help="also write the evidence package here")
    _common(p, "hseq", "iter", "llm")

    p = sub.add_parser("answer", help="select evidence and answer one question")
    p.add_argument("--question", required=True)
    _common(p, "hseq", "iter", "llm", "head")

    p = sub.add_parser("sft", help="export SFT records from (question, answer) lines")
    p.add_argument("--questions", required=True, help="JSONL with question and answer keys")
    p.add_argument("--u", type=int, help="positives needed for sufficiency")
    _common(p, "hseq", "iter")

    p = sub.add_parser("simulate", help="Monte Carlo check of the stochastic completeness bound")
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--L", type=int, nargs="+")
    p.add_argument("--m", type=int, nargs="+")
    p.add_argument("--p", type=float, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--sampler", choices=("marginal", "truncate"))
    _common(p)

    p = sub.add_parser("eval", help="evaluate EM/F1 and efficiency over (question, answer) lines")
    p.add_argument("--questions", required=True, help="JSONL with question and answer keys")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--tick-ms", type=float, help="deterministic clock step in ms")
    _common(p, "hseq", "iter", "llm", "head")
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from --config, then from DEFAULTS."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = {k.replace("-", "_"): v for k, v in json.loads(Path(args.config).read_text(encoding="utf-8")).items()}
    for key, value in vars(args).items():
        if value is None:
            if key in cfg:
                setattr(args, key, cfg[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _iteration(args) -> IterationConfig:
    return IterationConfig(window_size=args.window, top_k=args.top_k, t_max=args.t_max, t_min=args.t_min)


def _pipeline(args, **extra) -> PipelineConfig:
    return PipelineConfig(
        dataset=args.dataset,
        iteration=_iteration(args),
        token_budget=args.budget_tokens,
        cache_root=args.cache_root,
        refinement_delta=getattr(args, "delta", 0) or 0,
        **extra,
    )


def _policy(args):
    if args.policy == "llm":
        return LLMPolicy(ChatClient(args.endpoint, model=args.model), model=args.model or "")
    return heuristic_policy


def _head(args):
    if args.head == "llm":
        return ChatClient(args.endpoint, model=args.model)
    return mock_head(args.mock_answer)


def _need(args, *names):
    for n in names:
        if not getattr(args, n, None):
            raise SystemExit(f"hseq {args.command}: --{n.replace('_', '-')} is required")


def _read_questions(path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SystemExit(f"{path}:{lineno}: {exc}") from None
        if "question" not in obj:
            raise SystemExit(f"{path}:{lineno}: missing 'question'")
        out.append(obj)
    return out


def _emit(lines, out):
    if out:
        write_lines(out, lines)
    else:
        for line in lines:
            print(line)


def cmd_build(args):
    _need(args, "corpus", "out")
    formats = args.format or []
    if len(formats) != len(args.corpus):
        raise SystemExit("hseq build: give one --format per --corpus")
    corpus = Corpus()
    for path, fmt in zip(args.corpus, formats):
        part = ingest(path, fmt)
        corpus.texts += part.texts
        corpus.tables += part.tables
        corpus.kg_edges += part.kg_edges
    h = encode(corpus)
    save(h, args.out)
    print(f"wrote {len(h)} segments ({len(h.stream())} candidates) to {args.out}")


def cmd_iterate(args):
    _need(args, "hseq")
    h = load(args.hseq)
    cfg = _pipeline(args)
    g = cached_guidance(cfg.dataset, args.question, cache_root=cfg.cache_root)
    ep = run_episode(args.question, h, g, _policy(args), cfg.iteration, cfg.budget(), episode_ref="cli")
    _emit(ep.trace_lines(), args.out)
    if args.package_out:
        write_lines(args.package_out, [canonicalize(ep.selected, h, args.question, episode_ref="cli").to_json()])
    print(f"{ep.steps} steps, stop: {ep.stop_reason}, selected: {len(ep.selected)}", file=sys.stderr)


def cmd_answer(args):
    _need(args, "hseq")
    h = load(args.hseq)
    o = answer_question(args.question, h, _policy(args), _head(args), _pipeline(args), episode_ref="cli")
    _emit([json.dumps(o.answer_record(), ensure_ascii=False, separators=(",", ":"))], args.out)


def cmd_sft(args):
    _need(args, "hseq")
    h = load(args.hseq)
    cfg = _iteration(args)
    tuples = []
    for row in _read_questions(args.questions):
        q, gold = row["question"], row.get("answer", "")
        if not gold:
            log.warning("skipping question without an answer: %s", q)
            continue
        pos = weak_positives(q, gold, h, candidate_cap=cfg.window_size, fallback_n=args.u)
        traj = synthesize_trajectory(pos, cfg.top_k, args.u)
        if not traj.steps:
            continue
        g = cached_guidance(args.dataset, q, cache_root=args.cache_root)
        tuples.append(build_training_tuple(q, h, traj, g, cfg, hseq_ref=args.hseq, dataset=args.dataset))
    lines = export_sft(tuples, cfg.top_k)
    _emit(lines, args.out)
    print(f"{len(tuples)} tuples, {len(lines)} records", file=sys.stderr)


def cmd_simulate(args):
    reports = []
    for m in args.m:
        for p in args.p:
            for k in args.k:
                for L in args.L:
                    if m > L or k > L:
                        continue
                    reports.append(simulate_stochastic(k, L, L, m, p, args.trials, args.seed, sampler=args.sampler))
    if args.out:
        write_lines(args.out, [r.to_json() for r in reports])
    print(format_reports(reports))
    return 0 if all(reports) else 1


def cmd_eval(args):
    _need(args, "hseq", "out")
    h = load(args.hseq)
    examples = [QAExample(r["question"], r.get("answer", "")) for r in _read_questions(args.questions)]
    cfg = _pipeline(args, parallelism=args.parallelism, tick_ms=args.tick_ms)
    report = evaluate(examples, h, policy=_policy(args), head_client=_head(args), cfg=cfg)
    paths = report.write(args.out)
    print(json.dumps(report.aggregate, separators=(",", ":")))
    for name, path in paths.items():
        print(f"{name}: {path}", file=sys.stderr)


COMMANDS = {
    "build": cmd_build,
    "iterate": cmd_iterate,
    "answer": cmd_answer,
    "sft": cmd_sft,
    "simulate": cmd_simulate,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = resolve(build_parser().parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (ValueError, KeyError, OSError) as exc:
        print(f"hseq {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
