"""Segment schema, the hierarchical sequence container, stream ordering and persistence.

An :class:`Hseq` is an immutable, ordered list of :class:`Segment` records in
parent-before-child order.  Segments at the four *candidate* levels
(paragraph, table_row, sentence, triplet) form the selection stream, ordered by
:func:`rho_key`; root levels carry structure only and never enter the stream.

The on-disk format is line-delimited JSON, one segment per line, with keys
``id, level, parent, content, metadata`` in that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping


class Level(str, Enum):
    DOCUMENT = "document"
    PARAGRAPH = "paragraph"
    SENTENCE = "sentence"
    TABLE = "table"
    TABLE_ROW = "table_row"
    TABLE_CELL = "table_cell"
    KG_SUBGRAPH = "kg_subgraph"
    TRIPLET = "triplet"


class SourceType(str, Enum):
    TEXT = "text"
    TABLE = "table"
    KG = "kg"


ROOT_LEVELS = frozenset({Level.DOCUMENT, Level.TABLE, Level.KG_SUBGRAPH})
CANDIDATE_LEVELS = frozenset({Level.PARAGRAPH, Level.TABLE_ROW, Level.SENTENCE, Level.TRIPLET})
TEXT_LEVELS = frozenset({Level.DOCUMENT, Level.PARAGRAPH, Level.SENTENCE})

# paragraph < row < sentence < triplet; everything else sorts last
LEVEL_RANK = {
    Level.PARAGRAPH: 0,
    Level.TABLE_ROW: 1,
    Level.SENTENCE: 2,
    Level.TRIPLET: 3,
    Level.DOCUMENT: 4,
    Level.TABLE: 4,
    Level.KG_SUBGRAPH: 4,
    Level.TABLE_CELL: 4,
}

LEVEL_PREFIX = {
    Level.DOCUMENT: "doc",
    Level.PARAGRAPH: "p",
    Level.SENTENCE: "s",
    Level.TABLE: "tbl",
    Level.TABLE_ROW: "row",
    Level.TABLE_CELL: "cell",
    Level.KG_SUBGRAPH: "kg",
    Level.TRIPLET: "t",
}

SOURCE_TYPE_OF = {
    Level.DOCUMENT: SourceType.TEXT,
    Level.PARAGRAPH: SourceType.TEXT,
    Level.SENTENCE: SourceType.TEXT,
    Level.TABLE: SourceType.TABLE,
    Level.TABLE_ROW: SourceType.TABLE,
    Level.TABLE_CELL: SourceType.TABLE,
    Level.KG_SUBGRAPH: SourceType.KG,
    Level.TRIPLET: SourceType.KG,
}

EXPECTED_PARENT = {
    Level.PARAGRAPH: Level.DOCUMENT,
    Level.SENTENCE: Level.PARAGRAPH,
    Level.TABLE_ROW: Level.TABLE,
    Level.TABLE_CELL: Level.TABLE_ROW,
    Level.TRIPLET: Level.KG_SUBGRAPH,
}

SEGMENT_KEYS = ("id", "level", "parent", "content", "metadata")
METADATA_KEYS = ("source_id", "uri", "offsets", "schema", "time", "source_type", "lang", "source_version")
_REQUIRED_METADATA = ("source_id", "uri", "offsets", "source_type")


@dataclass(frozen=True)
class Metadata:
    source_id: str
    uri: str
    offsets: tuple[int, int]
    source_type: SourceType
    schema: tuple[str, ...] | None = None
    time: str | None = None
    lang: str | None = None
    source_version: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(x) for x in self.offsets))
        object.__setattr__(self, "source_type", SourceType(self.source_type))
        if self.schema is not None:
            object.__setattr__(self, "schema", tuple(self.schema))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for key in METADATA_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            if key == "offsets" or key == "schema":
                value = list(value)
            elif key == "source_type":
                value = value.value
            out[key] = value
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Metadata":
        unknown = set(d) - set(METADATA_KEYS)
        if unknown:
            raise ValueError(f"unknown metadata keys {sorted(unknown)}")
        missing = [k for k in _REQUIRED_METADATA if k not in d]
        if missing:
            raise ValueError(f"missing metadata keys {missing}")
        offsets = d["offsets"]
        if not isinstance(offsets, list) or len(offsets) != 2 or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in offsets
        ):
            raise ValueError(f"offsets must be a pair of integers, got {offsets!r}")
        return cls(**dict(d))


@dataclass(frozen=True)
class Segment:
    """One HSEQ record.

    ``content`` is a string for text levels and cells, an ordered
    ``{column: value}`` dict for table rows, and a ``(head, relation, tail)``
    tuple for triplets.
    """

    id: str
    level: Level
    parent: str | None
    content: Any
    metadata: Metadata

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if self.level is Level.TRIPLET and isinstance(self.content, list):
            object.__setattr__(self, "content", tuple(self.content))

    def __hash__(self):
        return hash(self.id)

    @property
    def uri(self) -> str:
        return self.metadata.uri

    @property
    def offsets(self) -> tuple[int, int]:
        return self.metadata.offsets

    def to_dict(self) -> dict:
        content = self.content
        if isinstance(content, tuple):
            content = list(content)
        elif isinstance(content, Mapping):
            content = dict(content)
        return {
            "id": self.id,
            "level": self.level.value,
            "parent": self.parent,
            "content": content,
            "metadata": self.metadata.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Segment":
        if not isinstance(d, Mapping):
            raise ValueError("segment record must be a JSON object")
        keys = list(d)
        if sorted(keys) != sorted(SEGMENT_KEYS):
            raise ValueError(f"segment keys must be exactly {list(SEGMENT_KEYS)}, got {keys}")
        try:
            level = Level(d["level"])
        except ValueError:
            raise ValueError(f"unknown level tag {d['level']!r}") from None
        if not isinstance(d["metadata"], Mapping):
            raise ValueError("metadata must be a JSON object")
        return cls(
            id=d["id"],
            level=level,
            parent=d["parent"],
            content=d["content"],
            metadata=Metadata.from_dict(d["metadata"]),
        )


def rho_key(seg: Segment) -> tuple:
    """Sort key of the stream order: level rank, then (uri, offsets), then id."""
    return (LEVEL_RANK[seg.level], seg.metadata.uri, seg.metadata.offsets, seg.id)


def rho_compare(a: Segment, b: Segment) -> int:
    """-1, 0 or 1 as ``a`` precedes, equals or follows ``b`` in stream order."""
    ka, kb = rho_key(a), rho_key(b)
    return (ka > kb) - (ka < kb)


class Hseq:
    """Immutable ordered segment container with an id index and a cached stream view."""

    __slots__ = ("_segments", "_index", "_stream")

    def __init__(self, segments: Iterable[Segment] = ()):
        self._segments = tuple(segments)
        index: dict[str, int] = {}
        for pos, seg in enumerate(self._segments):
            index.setdefault(seg.id, pos)
        self._index = MappingProxyType(index)
        self._stream = None

    @property
    def segments(self) -> tuple[Segment, ...]:
        return self._segments

    @property
    def index(self) -> Mapping[str, int]:
        return self._index

    def __len__(self):
        return len(self._segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self._segments)

    def __contains__(self, seg_id) -> bool:
        return seg_id in self._index

    def __getitem__(self, seg_id: str) -> Segment:
        return self._segments[self._index[seg_id]]

    def get(self, seg_id, default=None):
        pos = self._index.get(seg_id)
        return default if pos is None else self._segments[pos]

    def __eq__(self, other):
        if not isinstance(other, Hseq):
            return NotImplemented
        return self._segments == other._segments

    def __repr__(self):
        return f"Hseq({len(self._segments)} segments)"

    def stream(self) -> tuple[Segment, ...]:
        """Candidate-level segments sorted by :func:`rho_key`."""
        if self._stream is None:
            cands = [s for s in self._segments if s.level in CANDIDATE_LEVELS]
            self._stream = tuple(sorted(cands, key=rho_key))
        return self._stream

    def children(self, seg_id: str) -> list[Segment]:
        return [s for s in self._segments if s.parent == seg_id]

    def root_of(self, seg_id: str) -> Segment:
        seg = self[seg_id]
        while seg.parent is not None:
            seg = self[seg.parent]
        return seg

    def relabel(self, mapping: Mapping[str, str]) -> "Hseq":
        """Copy with ids renamed per ``mapping``; parent pointers follow."""
        out = []
        for s in self._segments:
            out.append(
                Segment(
                    id=mapping.get(s.id, s.id),
                    level=s.level,
                    parent=None if s.parent is None else mapping.get(s.parent, s.parent),
                    content=s.content,
                    metadata=s.metadata,
                )
            )
        return Hseq(out)

    def __add__(self, other: "Hseq") -> "Hseq":
        return Hseq(self._segments + tuple(other))


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    segment_id: str
    rule: str
    detail: str = ""


def _nonempty_str(x) -> bool:
    return isinstance(x, str) and x != ""


def validate(h: Hseq) -> list[Violation]:
    """Every invariant violation in ``h``; an empty list means valid."""
    report: list[Violation] = []
    seen: dict[str, Segment] = {}
    all_ids = {s.id for s in h}
    for seg in h:
        sid = seg.id
        if not _nonempty_str(sid):
            report.append(Violation(str(sid), "empty-id"))
        elif sid in seen:
            report.append(Violation(sid, "duplicate-id"))

        if seg.parent is None:
            if seg.level not in ROOT_LEVELS:
                report.append(Violation(sid, "root-level", f"{seg.level.value} segment has no parent"))
        else:
            if seg.level in ROOT_LEVELS:
                report.append(Violation(sid, "root-level", f"root level {seg.level.value} has a parent"))
            if seg.parent not in all_ids:
                report.append(Violation(sid, "dangling-parent", seg.parent))
            elif seg.parent not in seen:
                report.append(Violation(sid, "parent-before-child", seg.parent))
            else:
                want = EXPECTED_PARENT.get(seg.level)
                got = seen[seg.parent].level
                if want is not None and got is not want:
                    report.append(Violation(sid, "parent-level", f"expected {want.value}, got {got.value}"))

        report.extend(_content_violations(seg))
        report.extend(_metadata_violations(seg))
        if _nonempty_str(sid):
            seen.setdefault(sid, seg)
    return report


def _content_violations(seg: Segment):
    c = seg.content
    if seg.level is Level.TRIPLET:
        if not (isinstance(c, tuple) and len(c) == 3 and all(_nonempty_str(x) for x in c)):
            yield Violation(seg.id, "content-shape", "triplet needs three nonempty strings")
    elif seg.level is Level.TABLE_ROW:
        if not isinstance(c, Mapping):
            yield Violation(seg.id, "content-shape", "table_row content must be a mapping")
    elif not isinstance(c, str):
        yield Violation(seg.id, "content-shape", f"{seg.level.value} content must be a string")


def _metadata_violations(seg: Segment):
    md = seg.metadata
    a, b = md.offsets
    if seg.level in TEXT_LEVELS and not (0 <= a <= b):
        yield Violation(seg.id, "offsets", f"text offsets {md.offsets} not 0 <= a <= b")
    elif seg.level in (Level.KG_SUBGRAPH, Level.TRIPLET) and md.offsets != (-1, -1):
        yield Violation(seg.id, "offsets", f"kg offsets must be (-1, -1), got {md.offsets}")
    elif seg.level is Level.TABLE_ROW and not (a >= 0 and b == -1):
        yield Violation(seg.id, "offsets", f"row offsets must be [i, -1], got {md.offsets}")
    elif seg.level is Level.TABLE_CELL and not (a >= 0 and b >= 0):
        yield Violation(seg.id, "offsets", f"cell offsets must be [i, j], got {md.offsets}")
    if (md.schema is not None) != (seg.level is Level.TABLE):
        yield Violation(seg.id, "schema", "schema must be present exactly on table segments")
    if md.source_type is not SOURCE_TYPE_OF[seg.level]:
        yield Violation(seg.id, "source-type", f"{md.source_type.value} does not match {seg.level.value}")


# --- persistence ------------------------------------------------------------


class HseqFormatError(ValueError):
    """Malformed HSEQ file; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def dumps_segment(seg: Segment) -> str:
    return json.dumps(seg.to_dict(), ensure_ascii=False, separators=(",", ":"))


def serialize(h: Hseq) -> bytes:
    """Line-delimited UTF-8 JSON; raises ValueError if ``h`` is invalid."""
    problems = validate(h)
    if problems:
        first = problems[0]
        raise ValueError(f"cannot serialize invalid Hseq: {first.rule} at {first.segment_id!r} ({len(problems)} total)")
    return "".join(dumps_segment(s) + "\n" for s in h).encode("utf-8")


def deserialize(data: bytes | str) -> Hseq:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    segments: list[Segment] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise HseqFormatError(lineno, f"invalid JSON: {exc.msg}") from None
        try:
            seg = Segment.from_dict(record)
        except (ValueError, TypeError) as exc:
            raise HseqFormatError(lineno, str(exc)) from None
        if seg.parent is not None and seg.parent not in seen:
            raise HseqFormatError(lineno, f"dangling parent {seg.parent!r}")
        seen.add(seg.id)
        segments.append(seg)
    return Hseq(segments)


def save(h: Hseq, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(h))


def load(path) -> Hseq:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
