import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpora import random_corpus
from hseq.adapters import Corpus, TableItem, TextItem, encode
from hseq.canonical import (
    ITEM_KEYS,
    EvidencePackage,
    canonicalize,
    evidence_id,
    provenance,
    verify_content_preserving,
)
from hseq.model import Level

# computed with the shell's sha1sum before the implementation existed:
#   printf 'u\0000:1' | sha1sum ; printf 'u\0000:2' | sha1sum
SHA_U_0_1 = "8379ded15f59206b294333d6dcf9afd0bf7141d4"
SHA_U_0_2 = "0badff617db73ea76c77c951ac32722881e53507"


def test_evidence_id_pinned():
    assert evidence_id("u", (0, 1)) == SHA_U_0_1
    assert evidence_id("u", [0, 1]) == evidence_id("u", (0, 1))
    assert evidence_id("u", (0, 2)) == SHA_U_0_2 != SHA_U_0_1


def fixture():
    texts = [TextItem("a", "doc/a", "Alpha one. Alpha two.\n\nBeta three."), TextItem("b", "doc/b", "Gamma.")]
    table = TableItem("t", "tab/t", ["name", "year"], [["Night Watch", "2004"], ["Arie", "2004"]])
    return encode(Corpus(texts, [table], [("a", "r", "b", "2001"), ("c", "s", "d")]))


def test_empty_selection():
    pkg = canonicalize([], fixture(), "q")
    assert pkg.items == () and verify_content_preserving(pkg, fixture())


def test_unresolved_id_is_named():
    with pytest.raises(KeyError, match="ghost"):
        canonicalize(["ghost"], fixture())


def test_root_rejected():
    h = fixture()
    with pytest.raises(ValueError):
        canonicalize([h.segments[0].id], h)


def test_same_uri_offsets_keeps_rho_earliest():
    h = fixture()
    # "Gamma." is a paragraph with one sentence spanning the same range
    para = [s for s in h if s.uri == "doc/b" and s.level is Level.PARAGRAPH][0]
    sent = [s for s in h if s.uri == "doc/b" and s.level is Level.SENTENCE][0]
    assert para.offsets == sent.offsets
    pkg = canonicalize([sent.id, para.id], h)
    assert len(pkg) == 1 and pkg.items[0].level is Level.PARAGRAPH
    assert pkg.items[0].segment_id == para.id


def test_five_item_permutations_are_byte_identical():
    h = fixture()
    ids = [s.id for s in h.stream()][:5]
    outs = {canonicalize(list(p), h, "q", episode_ref="e").to_json() for p in _some_perms(ids)}
    assert len(outs) == 1


def _some_perms(ids):
    import itertools

    return list(itertools.permutations(ids))


def test_rendering_and_keys():
    h = fixture()
    row = [s for s in h if s.level is Level.TABLE_ROW][0]
    trip = [s for s in h if s.level is Level.TRIPLET][0]
    pkg = canonicalize([row.id, trip.id], h)
    d = json.loads(pkg.to_json())
    assert list(d) == ["question", "episode_ref", "items"]
    for it in d["items"]:
        assert list(it) == list(ITEM_KEYS)
    by_level = {it.level: it for it in pkg.items}
    assert by_level[Level.TABLE_ROW].snippet == "name: Night Watch; year: 2004"
    assert by_level[Level.TABLE_ROW].meta["schema"] == ("name", "year")
    assert by_level[Level.TRIPLET].snippet == "a r b" and by_level[Level.TRIPLET].meta["time"] == "2001"


def test_tampered_snippet_fails():
    h = fixture()
    pkg = canonicalize([s.id for s in h.stream()[:4]], h)
    assert verify_content_preserving(pkg, h)
    bad = replace(pkg.items[1], snippet=pkg.items[1].snippet + "!")
    tampered = EvidencePackage((pkg.items[0], bad) + pkg.items[2:])
    assert not verify_content_preserving(tampered, h)


def test_unresolvable_item_fails():
    h = fixture()
    pkg = canonicalize([h.stream()[0].id], h)
    moved = replace(pkg.items[0], uri="doc/zzz", id=evidence_id("doc/zzz", pkg.items[0].offsets))
    assert not verify_content_preserving(EvidencePackage((moved,)), h)
    with pytest.raises(LookupError):
        provenance(EvidencePackage((moved,)), h)


def test_unsorted_or_duplicate_package_fails():
    h = fixture()
    pkg = canonicalize([s.id for s in h.stream()[:3]], h)
    assert not verify_content_preserving(EvidencePackage(pkg.items[::-1]), h)
    assert not verify_content_preserving(EvidencePackage(pkg.items[:1] * 2), h)


def test_json_round_trip():
    h = fixture()
    pkg = canonicalize([s.id for s in h.stream()], h, "q", episode_ref="x")
    assert EvidencePackage.from_json(pkg.to_json()) == pkg


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.data())
def test_soundness_idempotence_and_order_invariance(seed, data):
    rng = np.random.default_rng(seed)
    h = encode(random_corpus(rng))
    cands = [s.id for s in h.stream()]
    if not cands:
        return
    chosen = data.draw(st.lists(st.sampled_from(cands), max_size=12))
    pkg = canonicalize(chosen, h)
    assert verify_content_preserving(pkg, h)
    keys = [it.key for it in pkg.items]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)
    assert canonicalize(provenance(pkg, h), h) == pkg
    shuffled = data.draw(st.permutations(chosen))
    assert canonicalize(shuffled, h).to_json() == pkg.to_json()
