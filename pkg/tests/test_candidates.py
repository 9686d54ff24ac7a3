"""Window enumeration and the no-false-negative mention filter."""

import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_corpus
from eejoin.candidates import (
    apply_filter,
    build_filter,
    enumerate_substrings,
    iter_all_spans,
    iter_filtered_spans,
    substring_count,
)
from eejoin.corpus import WeightingScheme, dictionary_from_surfaces, make_document
from eejoin.oracle import brute_force_extract
from eejoin.text import Predicate

GAMMAS = [Fraction(1, 2), Fraction(3, 4), Fraction(9, 10), Fraction(1)]


@given(st.integers(0, 60), st.integers(1, 10))
def test_substring_count_matches_enumeration(doc_len, max_len):
    spans = 0
    for start in range(doc_len):
        spans += min(max_len, doc_len - start)
    assert substring_count(doc_len, max_len) == spans


def test_enumerate_substrings_covers_every_window():
    d = dictionary_from_surfaces([(0, ["a", "b", "c"])])
    doc = make_document(0, "a b a c", d)
    subs = list(enumerate_substrings(doc, 3))
    assert len(subs) == substring_count(4, 3)
    assert {(s.span.start, s.span.end) for s in subs} == {
        (i, j) for i in range(4) for j in range(i + 1, min(i + 3, 4) + 1)
    }
    with pytest.raises(ValueError):
        list(enumerate_substrings(doc, 0))


def test_filtered_spans_agree_with_reference_decision():
    rng = random.Random(3)
    for _ in range(25):
        d, docs = small_corpus(rng)
        gamma = rng.choice(GAMMAS)
        pred = rng.choice([Predicate.EXTRA, Predicate.MISSING])
        flt = build_filter(d.entities, gamma, pred)
        max_len = d.max_entity_length
        for doc in docs:
            passed = {
                (s, e) for s, e, _, _ in iter_filtered_spans(doc, max_len, flt)
            }
            for cand in enumerate_substrings(doc, max_len):
                expected = apply_filter(flt, cand, gamma)
                got = (cand.span.start, cand.span.end) in passed
                assert got == expected, (doc.doc_id, cand.span)


def test_filter_never_drops_a_true_mention():
    rng = random.Random(17)
    for _ in range(40):
        d, docs = small_corpus(
            rng, rng.choice([WeightingScheme.UNIT, WeightingScheme.IDF])
        )
        gamma = rng.choice(GAMMAS)
        pred = rng.choice([Predicate.EXTRA, Predicate.MISSING])
        oracle = brute_force_extract(d, docs, gamma, pred)
        flt = build_filter(d.entities, gamma, pred)
        surviving = {
            (doc.doc_id, s, e)
            for doc in docs
            for s, e, _, _ in iter_filtered_spans(doc, d.max_entity_length, flt)
        }
        for m in oracle.mentions:
            assert (m.doc_id, m.start, m.end) in surviving


def test_filtered_is_subset_of_all_spans():
    rng = random.Random(29)
    d, docs = small_corpus(rng)
    flt = build_filter(d.entities, Fraction(3, 4), Predicate.EXTRA)
    for doc in docs:
        every = list(iter_all_spans(doc, d.max_entity_length))
        kept = list(iter_filtered_spans(doc, d.max_entity_length, flt))
        assert set(kept) <= set(every)
        # identical span payloads for the windows both enumerate
        by_span = {(s, e): (items, w) for s, e, items, w in every}
        for s, e, items, w in kept:
            assert by_span[(s, e)] == (items, w)


def test_span_items_are_distinct_first_occurrence_pairs():
    d = dictionary_from_surfaces([(0, ["b", "a"])])
    doc = make_document(0, "b a b a", d)
    spans = {
        (s, e): items for s, e, items, _ in iter_all_spans(doc, 4)
    }
    b, a = doc.body.token_ids[0], doc.body.token_ids[1]
    assert spans[(0, 1)] == ((b, 1),)
    assert spans[(0, 2)] == ((b, 1), (a, 1))
    assert spans[(0, 4)] == ((b, 1), (a, 1))  # repeats collapse
    assert spans[(1, 3)] == ((a, 1), (b, 1))  # order follows the text


def test_filter_requires_matching_threshold():
    d = dictionary_from_surfaces([(0, ["a"])])
    flt = build_filter(d.entities, Fraction(3, 4), Predicate.EXTRA)
    doc = make_document(0, "a", d)
    cand = next(iter(enumerate_substrings(doc, 1)))
    with pytest.raises(ValueError):
        apply_filter(flt, cand, Fraction(1, 2))


def test_filter_rejects_empty_dictionary_and_bad_gamma():
    d = dictionary_from_surfaces([(0, ["a"])])
    with pytest.raises(ValueError):
        build_filter([], Fraction(3, 4), Predicate.EXTRA)
    with pytest.raises(ValueError):
        build_filter(d.entities, Fraction(0), Predicate.EXTRA)


def test_all_junk_document_yields_nothing_after_filtering():
    d = dictionary_from_surfaces([(0, ["needle"])])
    doc = make_document(0, "hay hay hay hay", d)
    flt = build_filter(d.entities, Fraction(1, 2), Predicate.EXTRA)
    assert list(iter_filtered_spans(doc, d.max_entity_length, flt)) == []
