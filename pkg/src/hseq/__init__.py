"""Hierarchical-sequence evidence selection for question answering over text, tables and KGs."""

from .adapters import Corpus, Edge, TableItem, TextItem, decode, encode, equivalent
from .canonical import EvidenceItem, EvidencePackage, canonicalize, evidence_id, verify_content_preserving
from .engine import (
    BudgetState,
    EpisodeResult,
    IterationConfig,
    OraclePolicy,
    PolicyDecision,
    ScriptedPolicy,
    heuristic_policy,
    run_episode,
    window,
)
from .guidance import Guidance, cached_guidance, classify_question, template_guidance
from .head import Answer, RefinementConfig, build_answer_prompt, synthesize, verify_and_refine
from .metrics import em_f1, normalize_answer
from .model import Hseq, Level, Metadata, Segment, SourceType, deserialize, serialize, validate
from .policy import ChatClient, LLMPolicy, build_iteration_prompt, parse_decision, render_decision
from .supervision import export_sft, proxy_prf, synthesize_trajectory, weak_positives
from .theory import check_budget_independence, check_coverage, check_halt, simulate_stochastic

__version__ = "0.1.0"
