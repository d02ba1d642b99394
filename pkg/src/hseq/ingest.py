"""Read raw corpora from disk: text files, delimited tables, and tab-separated KG edges."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .adapters import Corpus, Edge, TableItem, TextItem

FORMATS = ("text", "table", "kg")


class IngestError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _files(path: Path) -> list[Path]:
    if not path.exists():
        raise IngestError(path, None, "no such file or directory")
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))


def _read(p: Path) -> str:
    try:
        with open(p, encoding="utf-8", newline="") as fh:
            return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(p, None, f"unreadable: {exc}") from None


def _ident(p: Path, root: Path) -> str:
    return p.name if root.is_file() else p.relative_to(root).as_posix()


def ingest(path, fmt: str) -> Corpus:
    """Load a file or a directory of files (one source per file, sorted by name)."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    root = Path(path)
    files = _files(root)
    corpus = Corpus()
    for p in files:
        ident = _ident(p, root)
        if fmt == "text":
            corpus.texts.append(TextItem(ident, ident, _read(p)))
        elif fmt == "table":
            corpus.tables.append(_read_table(p, ident))
        else:
            corpus.kg_edges.extend(_read_kg(p))
    return corpus


def _read_table(p: Path, ident: str) -> TableItem:
    delim = "\t" if p.suffix.lower() in (".tsv", ".tab") else ","
    reader = csv.reader(io.StringIO(_read(p)), delimiter=delim)
    header = None
    body = []
    try:
        for row in reader:
            if header is None:
                if not row or not any(row):
                    raise IngestError(p, reader.line_num, "missing header line")
                if len(set(row)) != len(row):
                    raise IngestError(p, reader.line_num, f"duplicate column names in header {row}")
                header = row
                continue
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(p, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            body.append(row)
    except csv.Error as exc:
        raise IngestError(p, reader.line_num, f"malformed row: {exc}") from None
    if header is None:
        raise IngestError(p, 1, "missing header line")
    return TableItem(ident, ident, header, body)


def _read_kg(p: Path) -> list[Edge]:
    edges = []
    for lineno, line in enumerate(_read(p).splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (3, 4):
            raise IngestError(p, lineno, f"expected 3 or 4 tab-separated fields (head, relation, tail[, time]), got {len(fields)}")
        if not all(fields[:3]):
            raise IngestError(p, lineno, "empty head, relation or tail")
        time = fields[3] if len(fields) == 4 and fields[3] else None
        edges.append(Edge(fields[0], fields[1], fields[2], time))
    return edges
