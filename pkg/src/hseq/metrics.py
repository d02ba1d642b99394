"""Answer normalization plus exact-match and token-F1 scoring."""

import re
import string
from collections import Counter

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, strip ASCII punctuation, drop a/an/the, collapse whitespace."""
    s = str(s).lower().translate(_PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def em_f1(pred: str, gold: str) -> tuple[int, float]:
    p, g = normalize_answer(pred).split(), normalize_answer(gold).split()
    if not p and not g:
        return 1, 1.0
    em = int(p == g)
    common = sum((Counter(p) & Counter(g)).values())
    if common == 0:
        return em, 0.0
    precision, recall = common / len(p), common / len(g)
    return em, 2 * precision * recall / (precision + recall)
