"""Small built-in corpora: a film-list fixture with a scripted six-step run, and planted-answer QA."""

from __future__ import annotations

import numpy as np

from .adapters import Corpus, TableItem, TextItem, encode
from .engine import IterationConfig, ScriptedPolicy
from .model import Hseq, Level
from .pipeline import QAExample

# --- film-list fixture -------------------------------------------------------

FILM_QUESTION = "Which writer authored the novel behind the 2004 Russian film directed by Timur Bekmambetov?"
FILM_ANSWER = "Sergei Lukyanenko"

_FILM_PARAGRAPHS = {
    "p_6df9c849": (
        "night-watch",
        "Night Watch is a Russian fantasy thriller released in 2004 and directed by Timur Bekmambetov. "
        "Its story is adapted from the novel The Night Watch, written by Sergei Lukyanenko.",
    ),
    "p_c15173df": (
        "russian-films-2004",
        "This page collects Russian feature films released in 2004, grouped by genre and director.",
    ),
    "p_3bc4a108": (
        "year-2004",
        "The year 2004 saw several Russian productions reach wide domestic release.",
    ),
    "p_54f6ef94": (
        "year-2004-film",
        "Box office records for 2004 were set by a fantasy picture from a Moscow studio.",
    ),
}

FILM_TABLE_URI = "russian-films-2004/table"
FILM_HEADER = ("Title", "Director", "Genre")
FILM_ROWS = (
    ("Night Watch", "Timur Bekmambetov", "Fantasy"),
    ("Arie", "n/a", "Drama"),
    ("Countdown", "n/a", "Action"),
    ("Dad or Papa", "n/a", "Drama"),
)
NIGHT_WATCH_ROW = "row_a44a4a17"


def film_fixture() -> tuple[Hseq, dict[str, str]]:
    """The fixture hseq and a map from row title to row segment id.

    Paragraph ids and the Night Watch row id are pinned so scripted runs and
    expected packages can name them.
    """
    texts = [TextItem(uri, uri, body) for uri, body in _FILM_PARAGRAPHS.values()]
    table = TableItem("russian-films-2004", FILM_TABLE_URI, FILM_HEADER, FILM_ROWS)
    h = encode(Corpus(texts, [table]))
    rename = {}
    wanted = {uri: pid for pid, (uri, _) in _FILM_PARAGRAPHS.items()}
    for s in h:
        if s.level is Level.PARAGRAPH:
            rename[s.id] = wanted[s.uri]
        elif s.level is Level.TABLE_ROW and s.content["Title"] == "Night Watch":
            rename[s.id] = NIGHT_WATCH_ROW
    h = h.relabel(rename)
    rows = {s.content["Title"]: s.id for s in h if s.level is Level.TABLE_ROW}
    return h, rows


def film_script(rows: dict[str, str]) -> list[tuple[list[str], bool]]:
    """Six scripted steps: the answer paragraph, three context paragraphs, then four rows one by one."""
    return [
        (["p_6df9c849"], False),
        (["p_c15173df", "p_3bc4a108", "p_54f6ef94"], False),
        ([rows["Night Watch"]], False),
        ([rows["Arie"]], False),
        ([rows["Countdown"]], False),
        ([rows["Dad or Papa"]], False),
    ]


def film_setup():
    """``(hseq, policy, iteration config)`` for the scripted film run."""
    h, rows = film_fixture()
    return h, ScriptedPolicy(film_script(rows)), IterationConfig(window_size=48, top_k=3, t_max=6)


# --- planted-answer QA -------------------------------------------------------

_SYLLABLES = "ka lo mi ne ru sa ti vo ze bra dul fen gor hal jin kes lum mor nal pev qui ros tav wen".split()
_RELATIONS = (
    ("capital", "The capital of {e} is {a}.", "What is the capital of {e}?"),
    ("founder", "{e} was founded by {a}.", "Who founded {e}?"),
    ("river", "The longest river in {e} is the {a}.", "Which river is the longest in {e}?"),
    ("currency", "People in {e} pay with the {a}.", "What currency is used in {e}?"),
)
_FILLER = (
    "Travelers often mention the mild climate of {x}.",
    "{x} exports timber, wool and dried fruit.",
    "A local festival in {x} lasts for three days every spring.",
    "Historians disagree about the early borders of {x}.",
)


def _name(rng, parts=2) -> str:
    return "".join(rng.choice(_SYLLABLES, size=parts)).capitalize()


def planted_examples(n: int = 200, seed: int = 0, dataset: str = "planted") -> list[QAExample]:
    """``n`` questions, each with its own small corpus; the gold answer appears in one paragraph or row."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        entity = f"{_name(rng, 3)}{i}"
        answer = _name(rng, 2)
        rel, fact, question = _RELATIONS[int(rng.integers(len(_RELATIONS)))]
        others = [f"{_name(rng, 3)}x{i}{j}" for j in range(3)]
        paras = [_FILLER[int(rng.integers(len(_FILLER)))].format(x=o) for o in others]
        in_table = bool(rng.integers(2))
        rows = [(o, _name(rng, 2)) for o in others]
        if in_table:
            rows.insert(int(rng.integers(len(rows) + 1)), (entity, answer))
        else:
            paras.insert(int(rng.integers(len(paras) + 1)), fact.format(e=entity, a=answer))
        body = "\n\n".join(paras)
        corpus = Corpus(
            [TextItem(f"{dataset}-{i}", f"{dataset}/{i}/notes", body)],
            [TableItem(f"{dataset}-{i}-t", f"{dataset}/{i}/{rel}", ("Entity", rel.capitalize()), rows)],
        )
        out.append(QAExample(question.format(e=entity), answer, encode(corpus)))
    return out
