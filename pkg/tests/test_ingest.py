import pytest

from hseq.adapters import Edge, decode, encode, equivalent
from hseq.ingest import IngestError, ingest


def test_empty_text_directory(tmp_path):
    c = ingest(tmp_path, "text")
    assert c.texts == [] and c.tables == [] and c.kg_edges == []


def test_text_files_sorted_and_verbatim(tmp_path):
    (tmp_path / "b.txt").write_bytes(b"Second.\r\n\r\nMore.")
    (tmp_path / "a.txt").write_text("First one.", encoding="utf-8")
    (tmp_path / ".hidden").write_text("skip", encoding="utf-8")
    c = ingest(tmp_path, "text")
    assert [t.source_id for t in c.texts] == ["a.txt", "b.txt"]
    assert c.texts[1].body == "Second.\r\n\r\nMore."
    assert equivalent(decode(encode(c)), c)


def test_two_line_table(tmp_path):
    p = tmp_path / "films.csv"
    p.write_text("title,year\nNight Watch,2004\n", encoding="utf-8")
    c = ingest(p, "table")
    assert len(c.tables) == 1 and c.tables[0].rows == (("Night Watch", "2004"),)


def test_quoted_multiline_cell_and_tsv(tmp_path):
    (tmp_path / "a.csv").write_text('x,y\n"line one\nline two",2\n', encoding="utf-8")
    (tmp_path / "b.tsv").write_text("x\ty\n1\t2\n", encoding="utf-8")
    c = ingest(tmp_path, "table")
    assert c.tables[0].rows[0][0] == "line one\nline two"
    assert c.tables[1].header == ("x", "y")


def test_ragged_table_row_cites_line(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,y\n1,2\n3\n", encoding="utf-8")
    with pytest.raises(IngestError, match=r"t.csv:3: expected 2 fields"):
        ingest(p, "table")


def test_kg_lines(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("# comment\na\tr\tb\n\nc\ts\td\t2004\n", encoding="utf-8")
    assert ingest(p, "kg").kg_edges == [Edge("a", "r", "b"), Edge("c", "s", "d", "2004")]


def test_kg_two_fields_cites_line(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("a\tr\tb\nbad\tline\n", encoding="utf-8")
    with pytest.raises(IngestError, match=r"g.tsv:2:") as err:
        ingest(p, "kg")
    assert err.value.line == 2


def test_missing_path_and_bad_format(tmp_path):
    with pytest.raises(IngestError):
        ingest(tmp_path / "nope", "text")
    with pytest.raises(ValueError):
        ingest(tmp_path, "xml")
