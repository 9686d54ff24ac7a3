"""Candidate substring enumeration and the safe mention filter.

The filter may pass substrings that match nothing, but it must never reject
a substring that scores at or above the threshold against some dictionary
entity — downstream lookup/verification relies on that contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Iterator, Sequence

from .text import Predicate, WeightedTokenSeq

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import Document, Entity

SpanItems = tuple[tuple[int, int], ...]


@dataclass(frozen=True, order=True)
class Span:
    """A token-coordinate window ``[start, end)`` of one document."""

    doc_id: int
    start: int
    end: int

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span [{self.start}, {self.end})")


@dataclass(frozen=True)
class CandidateSubstring:
    span: Span
    tokens: WeightedTokenSeq


def enumerate_substrings(doc: "Document", max_len: int) -> Iterator[CandidateSubstring]:
    """Every contiguous token window of length 1..max_len, in (start, length) order."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = doc.body.token_ids
    ws = doc.body.weights
    n = len(ids)
    for start in range(n):
        for end in range(start + 1, min(start + max_len, n) + 1):
            yield CandidateSubstring(
                Span(doc.doc_id, start, end),
                WeightedTokenSeq(ids[start:end], ws[start:end]),
            )


def substring_count(doc_len: int, max_len: int) -> int:
    """Closed-form count of windows of length 1..max_len in a doc of doc_len tokens."""
    if doc_len <= 0:
        return 0
    m = min(max_len, doc_len)
    return m * doc_len - m * (m - 1) // 2


@dataclass(frozen=True)
class MentionFilter:
    """Token bitmap plus per-token attainable-score thresholds.

    ``required_weight[t]`` is the smallest dictionary-token weight a window
    containing ``t`` must reach for *any* entity containing ``t`` to be able
    to score ``gamma`` — i.e. ``gamma`` times the lightest such entity.
    Under the missing-words predicate the test is instead that dictionary
    tokens make up at least a ``gamma`` fraction of the window's weight.
    """

    gamma: Fraction
    predicate: Predicate
    token_ids: frozenset[int]
    required_weight: dict[int, Fraction]
    min_weight_fraction: Fraction

    @cached_property
    def _required_pairs(self) -> dict[int, tuple[int, int]]:
        return {
            t: (f.numerator, f.denominator) for t, f in self.required_weight.items()
        }


def build_filter(
    entities: Sequence["Entity"] | Iterable["Entity"],
    gamma: Fraction,
    predicate: Predicate,
) -> MentionFilter:
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise ValueError(f"similarity threshold must be in (0, 1], got {gamma}")
    entities = list(entities)
    if not entities:
        raise ValueError("cannot build a filter from an empty dictionary")
    min_entity_weight: dict[int, int] = {}
    for ent in entities:
        w = ent.surface.set_weight
        for t in ent.surface.weight_map:
            cur = min_entity_weight.get(t)
            if cur is None or w < cur:
                min_entity_weight[t] = w
    required = {t: gamma * w for t, w in min_entity_weight.items()}
    return MentionFilter(
        gamma=gamma,
        predicate=predicate,
        token_ids=frozenset(min_entity_weight),
        required_weight=required,
        min_weight_fraction=gamma,
    )


def apply_filter(
    flt: MentionFilter, cand: CandidateSubstring, gamma: Fraction
) -> bool:
    """Reference filter decision for one candidate window."""
    if Fraction(gamma) != flt.gamma:
        raise ValueError(
            f"filter built for threshold {flt.gamma}, queried with {gamma}"
        )
    dict_weight = 0
    best_required: Fraction | None = None
    for t, w in cand.tokens.weight_map.items():
        if t in flt.token_ids:
            dict_weight += w
            r = flt.required_weight[t]
            if best_required is None or r < best_required:
                best_required = r
    if best_required is None:
        return False
    if flt.predicate is Predicate.EXTRA:
        return dict_weight >= best_required
    return dict_weight >= flt.min_weight_fraction * cand.tokens.set_weight


def iter_filtered_spans(
    doc: "Document", max_len: int, flt: MentionFilter
) -> Iterator[tuple[int, int, SpanItems, int]]:
    """Yield surviving windows as ``(start, end, distinct items, set weight)``.

    ``items`` are the window's distinct ``(token, weight)`` pairs in first-
    occurrence order (deterministic for a given document).  Windows that
    contain no dictionary token are skipped without individual tests;
    remaining windows get the same decision as :func:`apply_filter`,
    computed incrementally.
    """
    ids = doc.body.token_ids
    ws = doc.body.weights
    n = len(ids)
    if n == 0:
        return
    limit = min(max_len, n)
    dict_tokens = flt.token_ids
    req = flt._required_pairs
    extra = flt.predicate is Predicate.EXTRA
    g_num = flt.min_weight_fraction.numerator
    g_den = flt.min_weight_fraction.denominator

    # next dictionary-token position at or after i; lets us skip whole starts
    nxt = [n] * (n + 1)
    for i in range(n - 1, -1, -1):
        nxt[i] = i if ids[i] in dict_tokens else nxt[i + 1]

    for start in range(n):
        if nxt[start] - start >= limit:
            continue
        seen: set[int] = set()
        items: SpanItems = ()
        set_weight = 0
        dict_weight = 0
        rn = rd = None  # tightest per-token requirement seen, as a num/den pair
        stop = min(start + limit, n)
        for pos in range(start, stop):
            t = ids[pos]
            if t not in seen:
                w = ws[pos]
                seen.add(t)
                items = items + ((t, w),)
                set_weight += w
                if t in dict_tokens:
                    dict_weight += w
                    num, den = req[t]
                    if rn is None or num * rd < rn * den:
                        rn, rd = num, den
            if rn is None:
                continue
            if extra:
                ok = dict_weight * rd >= rn
            else:
                ok = dict_weight * g_den >= g_num * set_weight
            if ok:
                yield start, pos + 1, items, set_weight


def iter_all_spans(
    doc: "Document", max_len: int
) -> Iterator[tuple[int, int, SpanItems, int]]:
    """Unfiltered counterpart of :func:`iter_filtered_spans` (baseline plans)."""
    ids = doc.body.token_ids
    ws = doc.body.weights
    n = len(ids)
    limit = min(max_len, n)
    for start in range(n):
        seen: set[int] = set()
        items: SpanItems = ()
        set_weight = 0
        stop = min(start + limit, n)
        for pos in range(start, stop):
            t = ids[pos]
            if t not in seen:
                seen.add(t)
                items = items + ((t, ws[pos]),)
                set_weight += ws[pos]
            yield start, pos + 1, items, set_weight
