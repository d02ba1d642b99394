"""Modality adapters: encode a heterogeneous corpus into an :class:`~hseq.model.Hseq` and back.

Text is split into paragraphs on the exact sequence ``"\\n\\n"`` and into
sentences on ``.``/``?``/``!`` followed by whitespace or the paragraph end.
Every text segment stores the exact substring at its absolute offsets, so the
decoder can put the body back together character for character.  Tables keep
their header in the root's ``schema`` and emit one row segment per row with
offsets ``[i, -1]``.  Knowledge-graph edges map one-to-one onto triplet
segments grouped under one ``kg_subgraph`` root per head entity.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .model import LEVEL_PREFIX, Hseq, Level, Metadata, Segment, SourceType

_TERMINATORS = ".?!"


class Edge(NamedTuple):
    head: str
    relation: str
    tail: str
    time: str | None = None


@dataclass(frozen=True)
class TextItem:
    source_id: str
    uri: str
    body: str


@dataclass(frozen=True)
class TableItem:
    source_id: str
    uri: str
    header: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "header", tuple(self.header))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))


@dataclass
class Corpus:
    texts: list[TextItem] = field(default_factory=list)
    tables: list[TableItem] = field(default_factory=list)
    kg_edges: list[Edge] = field(default_factory=list)

    def __post_init__(self):
        self.kg_edges = [_as_edge(e) for e in self.kg_edges]

    def __len__(self):
        return len(self.texts) + len(self.tables) + len(self.kg_edges)


def _as_edge(e) -> Edge:
    return e if isinstance(e, Edge) else Edge(*e)


class IdMinter:
    """Deterministic ``<prefix>_<sha1 hex>`` ids; lengthens the digest on collision."""

    def __init__(self, used: Iterable[str] = ()):
        self.used = set(used)

    def __call__(self, uri: str, level: Level, offsets, salt: str = "") -> str:
        a, b = offsets
        digest = hashlib.sha1(f"{uri}\x00{level.value}\x00{a}:{b}\x00{salt}".encode("utf-8")).hexdigest()
        prefix = LEVEL_PREFIX[level]
        for n in (8, 12, 16, 24, 40):
            cand = f"{prefix}_{digest[:n]}"
            if cand not in self.used:
                break
        else:
            i = 1
            while f"{prefix}_{digest}-{i}" in self.used:
                i += 1
            cand = f"{prefix}_{digest}-{i}"
        self.used.add(cand)
        return cand


# --- text ------------------------------------------------------------------


def split_paragraphs(body: str) -> list[tuple[int, int]]:
    """Half-open spans of the nonempty ``"\\n\\n"``-delimited blocks."""
    spans = []
    pos = 0
    for block in body.split("\n\n"):
        end = pos + len(block)
        if block:
            spans.append((pos, end))
        pos = end + 2
    return spans


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Half-open spans of sentences inside ``text``, terminators included, whitespace trimmed."""
    spans = []
    n = len(text)
    start = None
    for i, ch in enumerate(text):
        if start is None:
            if ch.isspace():
                continue
            start = i
        if ch in _TERMINATORS and (i + 1 == n or text[i + 1].isspace()):
            spans.append((start, i + 1))
            start = None
    if start is not None:
        end = n
        while text[end - 1].isspace():
            end -= 1
        spans.append((start, end))
    return spans


def encode_text(source_id: str, uri: str, body: str, *, lang=None, source_version=None, minter=None) -> list[Segment]:
    minter = minter or IdMinter()

    def md(a, b):
        return Metadata(source_id, uri, (a, b), SourceType.TEXT, lang=lang, source_version=source_version)

    doc_id = minter(uri, Level.DOCUMENT, (0, len(body)))
    out = [Segment(doc_id, Level.DOCUMENT, None, "", md(0, len(body)))]
    for a, b in split_paragraphs(body):
        para = body[a:b]
        pid = minter(uri, Level.PARAGRAPH, (a, b))
        out.append(Segment(pid, Level.PARAGRAPH, doc_id, para, md(a, b)))
        for u, v in split_sentences(para):
            sid = minter(uri, Level.SENTENCE, (a + u, a + v))
            out.append(Segment(sid, Level.SENTENCE, pid, para[u:v], md(a + u, a + v)))
    return out


# --- tables ----------------------------------------------------------------


def encode_table(
    source_id: str,
    uri: str,
    header: Sequence[str],
    rows: Sequence[Sequence],
    *,
    cells: bool = False,
    source_version=None,
    minter=None,
) -> list[Segment]:
    """Table root plus one ``table_row`` per row; ``cells=True`` also emits ``table_cell`` children."""
    header = tuple(header)
    if len(set(header)) != len(header):
        raise ValueError(f"table {uri!r}: duplicate column names in header {header}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"table {uri!r}: row {i} has {len(row)} values, header has {len(header)}")
    minter = minter or IdMinter()

    def md(off, schema=None):
        return Metadata(source_id, uri, off, SourceType.TABLE, schema=schema, source_version=source_version)

    root_id = minter(uri, Level.TABLE, (-1, -1))
    out = [Segment(root_id, Level.TABLE, None, uri, md((-1, -1), header))]
    for i, row in enumerate(rows):
        rid = minter(uri, Level.TABLE_ROW, (i, -1))
        out.append(Segment(rid, Level.TABLE_ROW, root_id, dict(zip(header, row)), md((i, -1))))
        if cells:
            for j, value in enumerate(row):
                cid = minter(uri, Level.TABLE_CELL, (i, j))
                out.append(Segment(cid, Level.TABLE_CELL, rid, str(value), md((i, j))))
    return out


# --- knowledge graphs -------------------------------------------------------


def encode_kg(edges: Iterable, *, uri: str = "kg", source_id: str = "kg", minter=None) -> list[Segment]:
    """One ``kg_subgraph`` root per head entity (first-appearance order), one triplet per edge.

    Triplet uris are ``<uri>#<edge ordinal>`` so duplicate edges stay distinct
    items in an evidence package.
    """
    edges = [_as_edge(e) for e in edges]
    for i, e in enumerate(edges):
        if not all(isinstance(x, str) and x for x in e[:3]):
            raise ValueError(f"edge {i}: head, relation and tail must be nonempty strings, got {tuple(e[:3])}")
    minter = minter or IdMinter()
    groups: dict[str, list[int]] = {}
    for i, e in enumerate(edges):
        groups.setdefault(e.head, []).append(i)

    out = []
    for head, members in groups.items():
        root_uri = f"{uri}/{head}"
        root_id = minter(root_uri, Level.KG_SUBGRAPH, (-1, -1))
        out.append(Segment(root_id, Level.KG_SUBGRAPH, None, head, Metadata(source_id, root_uri, (-1, -1), SourceType.KG)))
        for i in members:
            e = edges[i]
            t_uri = f"{uri}#{i}"
            tid = minter(t_uri, Level.TRIPLET, (-1, -1))
            md = Metadata(source_id, t_uri, (-1, -1), SourceType.KG, time=e.time)
            out.append(Segment(tid, Level.TRIPLET, root_id, (e.head, e.relation, e.tail), md))
    return out


def encode(corpus: Corpus, *, kg_uri: str = "kg", cells: bool = False) -> Hseq:
    """Encode every item; texts then tables (each by source_id), then the KG."""
    minter = IdMinter()
    segs: list[Segment] = []
    for item in sorted(corpus.texts, key=lambda t: t.source_id):
        segs.extend(encode_text(item.source_id, item.uri, item.body, minter=minter))
    for item in sorted(corpus.tables, key=lambda t: t.source_id):
        segs.extend(encode_table(item.source_id, item.uri, item.header, item.rows, cells=cells, minter=minter))
    if corpus.kg_edges:
        segs.extend(encode_kg(corpus.kg_edges, uri=kg_uri, source_id=kg_uri, minter=minter))
    return Hseq(segs)


# --- decoding --------------------------------------------------------------


def decode(h: Hseq) -> Corpus:
    root_of: dict[str, str] = {}
    for s in h:
        root_of[s.id] = s.id if s.parent is None else root_of.get(s.parent, s.parent)

    text_parts: dict[str, list[Segment]] = {}
    rows_of: dict[str, list[Segment]] = {}
    corpus = Corpus()
    for s in h:
        if s.level in (Level.PARAGRAPH, Level.SENTENCE):
            text_parts.setdefault(root_of[s.id], []).append(s)
        elif s.level is Level.TABLE_ROW:
            rows_of.setdefault(s.parent, []).append(s)
        elif s.level is Level.TRIPLET:
            corpus.kg_edges.append(Edge(*s.content, time=s.metadata.time))

    for s in h:
        if s.level is Level.DOCUMENT:
            corpus.texts.append(_decode_text(s, text_parts.get(s.id, [])))
        elif s.level is Level.TABLE:
            corpus.tables.append(_decode_table(s, rows_of.get(s.id, [])))
    return corpus


def _decode_text(root: Segment, parts: list[Segment]) -> TextItem:
    n = max([root.offsets[1]] + [p.offsets[1] for p in parts])
    buf: list[str | None] = [None] * n
    for p in parts:
        a, b = p.offsets
        if len(p.content) != b - a:
            raise ValueError(f"segment {p.id}: content length {len(p.content)} does not match offsets {p.offsets}")
        for i, ch in enumerate(p.content, start=a):
            prev = buf[i]
            if prev is not None and prev != ch:
                raise ValueError(f"segment {p.id}: overlapping text offsets disagree at index {i}")
            buf[i] = ch
    # gaps are the "\n\n" paragraph separators
    body = "".join("\n" if ch is None else ch for ch in buf)
    return TextItem(root.metadata.source_id, root.uri, body)


def _decode_table(root: Segment, rows: list[Segment]) -> TableItem:
    header = tuple(root.metadata.schema or ())
    by_index = {}
    for r in rows:
        i = r.offsets[0]
        if i in by_index:
            raise ValueError(f"table {root.uri!r}: duplicate row index {i}")
        by_index[i] = r
    out = []
    for i in range(len(by_index)):
        if i not in by_index:
            raise ValueError(f"table {root.uri!r}: row index gap at {i}")
        content = by_index[i].content
        if list(content) != list(header):
            raise ValueError(f"table {root.uri!r}: row {i} keys do not match schema")
        out.append(tuple(content[c] for c in header))
    return TableItem(root.metadata.source_id, root.uri, header, out)


# --- benign equivalence ----------------------------------------------------


def _nonspace(s: str) -> str:
    return "".join(s.split())


def _text_equiv(x: TextItem, y: TextItem) -> bool:
    return x.source_id == y.source_id and x.uri == y.uri and _nonspace(x.body) == _nonspace(y.body)


def _columns(t: TableItem) -> Counter:
    return Counter((name, tuple(row[j] for row in t.rows)) for j, name in enumerate(t.header))


def _table_equiv(x: TableItem, y: TableItem) -> bool:
    # a column permutation aligning x with y exists iff the column multisets agree
    return (
        x.source_id == y.source_id
        and x.uri == y.uri
        and len(x.header) == len(y.header)
        and len(x.rows) == len(y.rows)
        and _columns(x) == _columns(y)
    )


def _match_all(xs, ys, equiv) -> bool:
    if len(xs) != len(ys):
        return False
    unused = list(ys)
    for x in xs:
        for j, y in enumerate(unused):
            if equiv(x, y):
                del unused[j]
                break
        else:
            return False
    return True


def equivalent(a: Corpus, b: Corpus) -> bool:
    """Benign equivalence: whitespace-insensitive text, column-permuted tables, KG as an edge multiset."""
    return (
        _match_all(a.texts, b.texts, _text_equiv)
        and _match_all(a.tables, b.tables, _table_equiv)
        and Counter(map(_as_edge, a.kg_edges)) == Counter(map(_as_edge, b.kg_edges))
    )
