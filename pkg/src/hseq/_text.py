"""Small text helpers shared by the policies, guidance and labeling code."""

import math
import re

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)

STOPWORDS = frozenset(
    """
    a an the of in on at to for from by with and or but not no nor is are was were be been being
    am do does did doing have has had having it its this that these those there here what which who
    whom whose when where why how as into than then so such can could would should will shall may
    might must i you he she we they me him her us them my your his our their about over under
    """.split()
)


def tokenize(text):
    """Lowercased word tokens, stopwords kept."""
    return _TOKEN_RE.findall(str(text).lower())


def content_tokens(text):
    """Token set with stopwords removed."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def content_words(text):
    """Ordered unique content words (first occurrence wins)."""
    seen = []
    for t in tokenize(text):
        if t not in STOPWORDS and t not in seen:
            seen.append(t)
    return seen


def estimate_tokens(text):
    # ceil(chars / 4); model-agnostic and monotone in length
    return math.ceil(len(text) / 4)


def one_line(text):
    return " ".join(str(text).split())
