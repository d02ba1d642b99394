"""Canonical evidence packages: dedup, deterministic order, and provenance checks.

Every item carries a digest id derived from ``(uri, offsets)``, a human-readable
snippet, and enough metadata to find and re-check its source segment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .engine import render_content
from .model import ROOT_LEVELS, TEXT_LEVELS, Hseq, Level, Segment, SourceType, rho_key

ITEM_KEYS = ("id", "level", "uri", "offsets", "source_type", "snippet", "meta")
META_KEYS = ("schema", "time", "source_version", "sha1", "segment_id")


def evidence_id(uri: str, offsets) -> str:
    a, b = offsets
    return hashlib.sha1(f"{uri}\x00{int(a)}:{int(b)}".encode("utf-8")).hexdigest()


def content_digest(content) -> str:
    """sha1 over the canonical JSON of a segment's content."""
    if isinstance(content, tuple):
        content = list(content)
    blob = json.dumps(content, ensure_ascii=False, separators=(",", ":"), sort_keys=False)
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EvidenceItem:
    id: str
    level: Level
    uri: str
    offsets: tuple[int, int]
    source_type: SourceType
    snippet: str
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "source_type", SourceType(self.source_type))
        object.__setattr__(self, "offsets", tuple(self.offsets))
        meta = {k: tuple(v) if isinstance(v, list) else v for k, v in self.meta.items() if v is not None}
        object.__setattr__(self, "meta", meta)

    @property
    def key(self) -> tuple:
        return (self.uri, self.offsets)

    @property
    def segment_id(self) -> str | None:
        return self.meta.get("segment_id")

    def to_dict(self) -> dict:
        meta = {}
        for k in META_KEYS:
            if self.meta.get(k) is not None:
                v = self.meta[k]
                meta[k] = list(v) if isinstance(v, tuple) else v
        return {
            "id": self.id,
            "level": self.level.value,
            "uri": self.uri,
            "offsets": list(self.offsets),
            "source_type": self.source_type.value,
            "snippet": self.snippet,
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvidenceItem":
        if set(d) != set(ITEM_KEYS):
            raise ValueError(f"evidence item keys must be exactly {ITEM_KEYS}, got {sorted(d)}")
        return cls(d["id"], d["level"], d["uri"], tuple(d["offsets"]), d["source_type"], d["snippet"], d["meta"])


@dataclass(frozen=True)
class EvidencePackage:
    items: tuple[EvidenceItem, ...]
    question: str = ""
    episode_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def ids(self) -> set[str]:
        """Evidence ids plus the source segment ids they resolve to."""
        out = {it.id for it in self.items}
        out.update(it.segment_id for it in self.items if it.segment_id)
        return out

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "episode_ref": self.episode_ref,
            "items": [it.to_dict() for it in self.items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvidencePackage":
        return cls(tuple(EvidenceItem.from_dict(x) for x in d["items"]), d.get("question", ""), d.get("episode_ref", ""))

    @classmethod
    def from_json(cls, text: str) -> "EvidencePackage":
        return cls.from_dict(json.loads(text))


def _table_schema(seg: Segment, h: Hseq):
    node = seg
    while node is not None:
        if node.level is Level.TABLE:
            return tuple(node.metadata.schema or ())
        node = h.get(node.parent) if node.parent is not None else None
    return None


def _item(seg: Segment, h: Hseq) -> EvidenceItem:
    md = seg.metadata
    meta = {
        "schema": _table_schema(seg, h) if md.source_type is SourceType.TABLE else None,
        "time": md.time,
        "source_version": md.source_version,
        "sha1": content_digest(seg.content),
        "segment_id": seg.id,
    }
    if seg.level is Level.TABLE_ROW and meta["schema"]:
        # render in schema order, independent of dict insertion order
        snippet = "; ".join(f"{c}: {seg.content[c]}" for c in meta["schema"])
    else:
        snippet = render_content(seg)
    return EvidenceItem(evidence_id(md.uri, md.offsets), seg.level, md.uri, md.offsets, md.source_type, snippet, meta)


def canonicalize(selected: Iterable[str], h: Hseq, question: str = "", *, episode_ref: str = "") -> EvidencePackage:
    """Map selected segment ids to a deduplicated, ordered evidence package.

    Duplicates on ``(uri, offsets)`` keep the stream-earliest segment; items are
    sorted by uri, then offsets.  The result does not depend on the order of
    ``selected``.
    """
    segs = {}
    for sid in selected:
        seg = h.get(sid)
        if seg is None:
            raise KeyError(f"selected id {sid!r} does not resolve in the hseq")
        if seg.level in ROOT_LEVELS:
            raise ValueError(f"segment {sid!r} is a {seg.level.value} root, not evidence")
        segs[sid] = seg

    survivors: dict[tuple, Segment] = {}
    for seg in sorted(segs.values(), key=rho_key):
        survivors.setdefault((seg.uri, seg.offsets), seg)
    items = sorted((_item(s, h) for s in survivors.values()), key=lambda it: it.key)
    return EvidencePackage(tuple(items), question, episode_ref)


# --- provenance ------------------------------------------------------------


def _provenance_index(h: Hseq) -> dict[tuple, list[Segment]]:
    idx: dict[tuple, list[Segment]] = {}
    for s in h:
        idx.setdefault((s.uri, s.offsets, s.level), []).append(s)
    return idx


def resolve(item: EvidenceItem, h: Hseq, index=None) -> Segment | None:
    """The unique segment behind ``item``, or None when there is not exactly one."""
    index = index if index is not None else _provenance_index(h)
    hits = index.get((item.uri, item.offsets, item.level), [])
    if len(hits) != 1:
        return None
    seg = hits[0]
    if item.segment_id is not None and item.segment_id != seg.id:
        return None
    return seg


def verify_content_preserving(pkg: EvidencePackage, h: Hseq) -> bool:
    """True iff each item resolves to exactly one segment and reproduces its content and metadata."""
    index = _provenance_index(h)
    keys = [it.key for it in pkg.items]
    if len(set(keys)) != len(keys) or keys != sorted(keys):
        return False
    for it in pkg.items:
        seg = resolve(it, h, index)
        if seg is None:
            return False
        if it != _item(seg, h):
            return False
        if it.level in TEXT_LEVELS and not it.snippet:
            return False
    return True


def provenance(pkg: EvidencePackage, h: Hseq) -> list[str]:
    """Source segment ids for every item, in package order; raises on unresolvable items."""
    index = _provenance_index(h)
    out = []
    for it in pkg.items:
        seg = resolve(it, h, index)
        if seg is None:
            raise LookupError(f"evidence item {it.id} ({it.uri} {list(it.offsets)}) has no unique source segment")
        out.append(seg.id)
    return out
