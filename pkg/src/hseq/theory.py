"""Synthetic-stream checks for prefix coverage, halting, budget independence, and stochastic completeness.

Synthetic streams are one-paragraph documents whose stream order is their
index.  Segment content depends only on ``(seed, index)``, so two streams with
the same seed agree on every shared prefix regardless of length.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import (
    DEFAULT_SNIPPET_CAP,
    BudgetState,
    EpisodeResult,
    IterationConfig,
    OraclePolicy,
    PolicyDecision,
    StepState,
    heuristic_policy,
    run_episode,
)
from .model import Hseq, Level, Metadata, Segment, SourceType

_FILLER = (
    "river stone market lantern copper meadow harbor signal ledger orchard violet canyon "
    "glacier pepper saddle timber quarry beacon thistle garnet furnace willow basalt cobalt"
).split()


@dataclass(frozen=True)
class SyntheticStream:
    N: int
    L: int
    m: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.m <= self.L <= self.N:
            raise ValueError(f"need 1 <= m <= L <= N, got m={self.m}, L={self.L}, N={self.N}")

    def support_positions(self) -> tuple[int, ...]:
        """``m`` prefix positions including the last one, so the minimal prefix is exactly ``L``."""
        if self.m == 1:
            return (self.L - 1,)
        rng = np.random.default_rng([self.seed, self.L, self.m])
        others = rng.choice(self.L - 1, size=self.m - 1, replace=False)
        return tuple(sorted(int(i) for i in others)) + (self.L - 1,)

    def question(self) -> str:
        return "what is " + " ".join(f"key{j}" for j in range(self.m))

    def content(self, i: int) -> str:
        rng = np.random.default_rng([self.seed, i])
        words = rng.choice(_FILLER, size=int(rng.integers(20, 70)))
        return f"item {i} " + " ".join(words) + "."

    def build(self) -> Hseq:
        support = {pos: j for j, pos in enumerate(self.support_positions())}
        segs = []
        for i in range(self.N):
            uri = f"syn/{i:07d}"
            text = self.content(i)
            if i in support:
                text = f"key{support[i]} " + text
            doc = f"doc_{i:07d}"
            segs.append(Segment(doc, Level.DOCUMENT, None, "", Metadata("syn", uri, (0, len(text)), SourceType.TEXT)))
            segs.append(Segment(f"p_{i:07d}", Level.PARAGRAPH, doc, text, Metadata("syn", uri, (0, len(text)), SourceType.TEXT)))
        return Hseq(segs)

    def prefix_ids(self) -> list[str]:
        return [f"p_{i:07d}" for i in range(self.L)]

    def support_ids(self) -> list[str]:
        return [f"p_{i:07d}" for i in self.support_positions()]


def context_cost_cap(W: int, snippet_cap: int = DEFAULT_SNIPPET_CAP) -> int:
    """C(W): characters one window can present after per-snippet truncation."""
    return W * snippet_cap


@dataclass
class CheckResult:
    ok: bool
    params: dict
    violations: list[str] = field(default_factory=list)
    episodes: list[EpisodeResult] = field(default_factory=list)

    def __bool__(self):
        return self.ok


class SupportOracle(OraclePolicy):
    """Takes the stream-earliest unselected prefix items; sufficient once the support set is held."""

    def __init__(self, prefix_ids, support_ids):
        super().__init__(prefix_ids)
        self.support = set(support_ids)

    def __call__(self, state: StepState) -> PolicyDecision:
        d = super().__call__(state)
        have = {s.id for s in state.selected} | set(d.segment_ids)
        return PolicyDecision(d.segment_ids, d.strategy, d.top_k, self.support <= have)


def _cumulative(ep: EpisodeResult):
    held = []
    for rec in ep.trace:
        held.extend(rec.chosen_ids)
        yield rec.step, set(held)


def check_coverage(k: int, W: int, L: int, N: int, *, seed: int = 0) -> CheckResult:
    """Prefix coverage: after step t at least min(kt, L) prefix items are held; all by ceil(L/k)."""
    stream = SyntheticStream(N, L, 1, seed)
    h = stream.build()
    prefix = set(stream.prefix_ids())
    R = math.ceil(L / k)
    cfg = IterationConfig(window_size=W, top_k=k, t_max=R)
    ep = run_episode("coverage", h, None, OraclePolicy(prefix), cfg)
    res = CheckResult(True, {"k": k, "W": W, "L": L, "N": N, "R": R}, episodes=[ep])
    held = set()
    for t, held in _cumulative(ep):
        need = min(k * t, L)
        if len(held & prefix) < need:
            res.ok = False
            res.violations.append(f"step {t}: {len(held & prefix)} prefix items held, need {need}")
    if not prefix <= held:
        res.ok = False
        res.violations.append(f"prefix not covered by step {R} (held {len(held & prefix)}/{L})")
    return res


def check_halt(k: int, W: int, L: int, N: int, t_max: int, *, m: int = 1, seed: int = 0) -> CheckResult:
    """Halting: with a sufficiency head that fires once the support is held, tau <= min(t_max, ceil(L/k))."""
    stream = SyntheticStream(N, L, m, seed)
    h = stream.build()
    R = math.ceil(L / k)
    cfg = IterationConfig(window_size=W, top_k=k, t_max=t_max)
    ep = run_episode("halt", h, None, SupportOracle(stream.prefix_ids(), stream.support_ids()), cfg)
    bound = min(t_max, R)
    res = CheckResult(ep.steps <= bound, {"k": k, "W": W, "L": L, "N": N, "t_max": t_max, "bound": bound}, episodes=[ep])
    if not res.ok:
        res.violations.append(f"halted after {ep.steps} steps, bound {bound} ({ep.stop_reason})")
    return res


def check_budget_independence(
    W: int,
    k: int,
    t_max: int,
    sizes,
    *,
    L: int | None = None,
    m: int = 1,
    seed: int = 0,
    snippet_cap: int = DEFAULT_SNIPPET_CAP,
) -> CheckResult:
    """Same question over streams of each size.

    Checks, for heuristic and oracle runs alike, that every presented window
    stays within C(W) characters and the total within C(W) * min(t_max,
    ceil(L/k)); and that the heuristic run presents byte-identical windows
    at every size.
    """
    sizes = sorted(set(sizes))
    if len(sizes) < 2:
        raise ValueError("need at least two distinct sizes")
    L = L if L is not None else min(W, sizes[0])
    R = math.ceil(L / k)
    cap = context_cost_cap(W, snippet_cap)
    bound = cap * min(t_max, R)
    cfg = IterationConfig(window_size=W, top_k=k, t_max=t_max, snippet_cap=snippet_cap)
    res = CheckResult(True, {"W": W, "k": k, "t_max": t_max, "sizes": sizes, "L": L, "C(W)": cap, "bound": bound})

    per_size = []
    for n in sizes:
        stream = SyntheticStream(n, L, m, seed)
        h = stream.build()
        runs = {
            "heuristic": run_episode(stream.question(), h, None, heuristic_policy, cfg),
            "oracle": run_episode(stream.question(), h, None, SupportOracle(stream.prefix_ids(), stream.support_ids()), cfg),
        }
        for name, ep in runs.items():
            res.episodes.append(ep)
            chars = [r.context_chars for r in ep.trace]
            if any(c > cap for c in chars):
                res.violations.append(f"N={n} {name}: a window presented more than C(W)={cap} chars: {chars}")
            if sum(chars) > bound:
                res.violations.append(f"N={n} {name}: total {sum(chars)} chars exceeds {bound}")
        per_size.append([(r.window_ids, r.context_chars) for r in runs["heuristic"].trace])
    if any(p != per_size[0] for p in per_size[1:]):
        res.violations.append("heuristic windows differ across sizes")
    res.ok = not res.violations
    return res


# --- stochastic completeness ----------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    k: int
    W: int
    L: int
    m: int
    p: float
    R: int
    trials: int
    seed: int
    sampler: str
    successes: int
    empirical: float
    bound: float
    stderr: float
    margin: float
    passed: bool
    assumption_feasible: bool

    def __bool__(self):
        return self.passed

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


def analytic_bound(m: int, p: float, R: int) -> float:
    return min(1.0, max(0.0, 1.0 - m * (1.0 - p) ** R))


def _pick_support(rng, U, p, k, sampler):
    """Boolean picks among support items ``U`` (trials x L) for one step."""
    n_u = U.sum(axis=1, keepdims=True)
    if sampler == "truncate":
        # independent coins, then keep the stream-earliest k
        coins = U & (rng.random(U.shape) < p)
        return coins & (np.cumsum(coins, axis=1) <= k)
    # marginal-preserving: every exposed support item is picked with probability
    # min(p, k/|U|); independent coins when |U| <= k, systematic sampling otherwise
    coins = U & (rng.random(U.shape) < p)
    crowded = (n_u > k).ravel()
    if not crowded.any():
        return coins
    q = np.minimum(p, k / np.maximum(n_u, 1))
    keys = np.where(U, rng.random(U.shape), np.inf)
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)
    offset = rng.random((U.shape[0], 1))
    lo = offset + rank * q
    systematic = U & (np.floor(lo + q) - np.floor(lo) >= 1)
    return np.where(crowded[:, None], systematic, coins)


def simulate_stochastic(
    k: int,
    W: int,
    L: int,
    m: int,
    p: float,
    trials: int,
    seed: int = 0,
    *,
    sampler: str = "marginal",
) -> BoundReport:
    """Monte Carlo estimate of P[all m supports selected within R = ceil(L/k) steps].

    Each step the window is the earliest ``W`` unselected prefix items.  Exposed
    support items are picked by ``sampler`` (at most ``k``); leftover slots go
    to the earliest exposed non-support items.  ``"marginal"`` keeps each
    support's per-exposure probability at ``p`` whenever ``p * |exposed| <= k``;
    ``"truncate"`` flips independent coins and keeps the first ``k`` heads.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sampler not in ("marginal", "truncate"):
        raise ValueError(f"unknown sampler {sampler!r}")
    IterationConfig(window_size=W, top_k=k)  # validates W >= k >= 1
    stream = SyntheticStream(L, L, m, seed)
    R = math.ceil(L / k)
    support = np.zeros(L, dtype=bool)
    support[list(stream.support_positions())] = True

    rng = np.random.default_rng(np.random.SeedSequence([seed, k, W, L, m, int(round(p * 1e6))]))
    selected = np.zeros((trials, L), dtype=bool)
    for _ in range(R):
        unsel = ~selected
        exposed = unsel & (np.cumsum(unsel, axis=1) <= W)
        picks = _pick_support(rng, exposed & support, p, k, sampler)
        free = k - picks.sum(axis=1, keepdims=True)
        filler = exposed & ~support
        picks |= filler & (np.cumsum(filler, axis=1) <= free)
        selected |= picks

    successes = int(selected[:, support].all(axis=1).sum())
    emp = successes / trials
    bound = analytic_bound(m, p, R)
    se = math.sqrt(emp * (1.0 - emp) / trials)
    return BoundReport(
        k=k, W=W, L=L, m=m, p=p, R=R, trials=trials, seed=seed, sampler=sampler,
        successes=successes, empirical=emp, bound=bound, stderr=se, margin=emp - bound,
        passed=emp >= bound - 3.0 * se, assumption_feasible=p * m <= k,
    )


class StochasticPolicy:
    """Per-episode version of the ``"marginal"`` sampler, for driving :func:`run_episode`."""

    def __init__(self, support_ids, p: float, rng: np.random.Generator):
        self.support = set(support_ids)
        self.p = p
        self.rng = rng

    def __call__(self, state: StepState) -> PolicyDecision:
        U = np.array([[s.id in self.support for s in state.window]])
        picks = _pick_support(self.rng, U, self.p, state.top_k, "marginal")[0]
        ids = [s.id for s, hit in zip(state.window, picks) if hit]
        for s in state.window:
            if len(ids) >= state.top_k:
                break
            if s.id not in self.support and s.id not in ids:
                ids.append(s.id)
        return PolicyDecision(tuple(ids), "stochastic", state.top_k, False)


def simulate_with_engine(k: int, L: int, m: int, p: float, trials: int, seed: int = 0, *, W: int | None = None) -> float:
    """Slow reference: success rate of :class:`StochasticPolicy` episodes through the real engine."""
    W = W or L
    stream = SyntheticStream(L + W, L, m, seed)
    h = stream.build()
    prefix = set(stream.prefix_ids())
    support = set(stream.support_ids())
    R = math.ceil(L / k)
    cfg = IterationConfig(window_size=W, top_k=k, t_max=R)
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(trials):
        # restrict the window to the prefix, as the vectorized model does
        pol = StochasticPolicy(support, p, rng)
        ep = run_episode("stochastic", _prefix_only(h, prefix), None, pol, cfg, BudgetState(step_cap=R))
        wins += support <= set(ep.selected)
    return wins / trials


def _prefix_only(h: Hseq, prefix: set) -> Hseq:
    keep = set()
    for s in h:
        if s.id in prefix:
            keep.update((s.id, s.parent))
    return Hseq([s for s in h if s.id in keep])


def stochastic_grid(ms=(1, 2, 3), ps=(0.3, 0.5, 0.9), ks=(1, 2), Ls=(3, 6), *, trials=100_000, seed=0, sampler="marginal"):
    """One report per cell with ``W = L``, seeds spawned from one root."""
    root = np.random.SeedSequence(seed)
    cells = [(m, p, k, L) for m in ms for p in ps for k in ks for L in Ls]
    children = root.spawn(len(cells))
    out = []
    for (m, p, k, L), child in zip(cells, children):
        cell_seed = int(child.generate_state(1)[0])
        out.append(simulate_stochastic(k, L, L, m, p, trials, cell_seed, sampler=sampler))
    return out


def format_reports(reports) -> str:
    head = f"{'m':>2} {'p':>4} {'k':>2} {'L':>2} {'W':>2} {'R':>2} {'bound':>7} {'empirical':>9} {'3se':>7} {'feasible':>8}  result"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(
            f"{r.m:>2} {r.p:>4.2f} {r.k:>2} {r.L:>2} {r.W:>2} {r.R:>2} {r.bound:>7.4f} {r.empirical:>9.4f} "
            f"{3 * r.stderr:>7.4f} {str(r.assumption_feasible):>8}  {'pass' if r.passed else 'FAIL'}"
        )
    return "\n".join(lines)
