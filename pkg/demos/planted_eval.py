"""Evaluate the heuristic selector on planted-answer questions with an extractive mock head.

    python3 demos/planted_eval.py [out_dir]
"""

import json
import sys

from hseq.engine import IterationConfig, heuristic_policy
from hseq.head import mock_head
from hseq.pipeline import PipelineConfig, evaluate
from hseq.toydata import planted_examples


def main(out_dir=None):
    examples = planted_examples(200, seed=0)
    cfg = PipelineConfig(dataset="planted", iteration=IterationConfig(8, 2, 6), tick_ms=1.0, parallelism=4)
    report = evaluate(examples, policy=heuristic_policy, head_client=mock_head(), cfg=cfg)
    print(json.dumps(report.aggregate, indent=2))
    for r in report.records[:5]:
        print(f"  {r.question[:50]:<50} gold={r.gold:<12} pred={r.predicted[:30]:<30} f1={r.f1:.2f} steps={r.steps}")
    if out_dir:
        for name, path in report.write(out_dir).items():
            print(f"{name}: {path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
