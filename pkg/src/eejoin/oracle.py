"""Brute-force reference extraction, used to check every optimized path.

Scores all (entity, window) pairs directly from the definitions.  The only
shortcut is skipping pairs with zero token overlap, which cannot reach any
positive threshold.  A comparison cap guards against accidentally feeding
it an input far too large for quadratic work.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .candidates import iter_all_spans
from .corpus import Dictionary, Document
from .plans import Mention
from .text import Predicate

DEFAULT_PAIR_CAP = 10**9


class PairBudgetError(RuntimeError):
    """The quadratic sweep would exceed the comparison cap."""


@dataclass
class OracleResult:
    mentions: list[Mention]
    pair_comparisons: int


def brute_force_extract(
    dictionary: Dictionary,
    documents: Sequence[Document],
    gamma: Fraction,
    predicate: Predicate,
    *,
    pair_cap: int = DEFAULT_PAIR_CAP,
) -> OracleResult:
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise ValueError(f"similarity threshold must be in (0, 1], got {gamma}")
    by_token: dict[int, list[int]] = {}
    surfaces = {}
    entity_tokens: dict[int, frozenset[int]] = {}
    unit_entity: dict[int, bool] = {}
    for ent in dictionary.entities:
        eid = ent.entity_id
        surfaces[eid] = ent.surface
        entity_tokens[eid] = frozenset(ent.surface.weight_map)
        unit_entity[eid] = ent.surface.set_weight == len(ent.surface.weight_map)
        for t in ent.surface.weight_map:
            by_token.setdefault(t, []).append(eid)
    g_num, g_den = gamma.numerator, gamma.denominator
    extra = predicate is Predicate.EXTRA
    max_len = dictionary.max_entity_length
    mentions: list[Mention] = []
    comparisons = 0
    for doc in documents:
        doc_id = doc.doc_id
        for start, end, items, set_weight in iter_all_spans(doc, max_len):
            candidates: set[int] = set()
            for t, _ in items:
                ids = by_token.get(t)
                if ids:
                    candidates.update(ids)
            if not candidates:
                continue
            span_unit = set_weight == len(items)
            span_set = frozenset(t for t, _ in items)
            probe = None
            comparisons += len(candidates)
            if comparisons > pair_cap:
                raise PairBudgetError(
                    f"needed more than {pair_cap} pair comparisons"
                )
            for eid in sorted(candidates):
                surface = surfaces[eid]
                if span_unit and unit_entity[eid]:
                    num = len(entity_tokens[eid] & span_set)
                    den = surface.set_weight if extra else set_weight
                elif extra:
                    num = sum(
                        w for t, w in surface.weight_map.items() if t in span_set
                    )
                    den = surface.set_weight
                else:
                    if probe is None:
                        probe = dict(items)
                    num = sum(w for t, w in probe.items() if t in surface.weight_map)
                    den = set_weight
                if num * g_den >= g_num * den:
                    mentions.append(
                        Mention(eid, doc_id, start, end, Fraction(num, den))
                    )
    mentions.sort(key=Mention.sort_key)
    return OracleResult(mentions, comparisons)
