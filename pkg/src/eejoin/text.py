"""Tokenization, token weighting, and weighted set-similarity measures.

All similarity scores are exact rationals (`fractions.Fraction`); token
weights are non-negative integers.  Set-level operations work on the
*distinct* tokens of a sequence, so repeated tokens contribute once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable

TokenSetKey = tuple[int, ...]

#: default ceiling on the number of token subsets enumerated per item
DEFAULT_VARIANT_CAP = 4096


class VariantExplosionError(RuntimeError):
    """Raised when an item has more qualifying token subsets than the cap."""

    def __init__(self, partial_count: int, cap: int):
        super().__init__(
            f"variant explosion: more than {cap} qualifying subsets "
            f"(stopped after {partial_count})"
        )
        self.partial_count = partial_count
        self.cap = cap


class Predicate(str, Enum):
    """Which side's weight divides the containment score.

    ``EXTRA`` divides by the entity weight: a mention may carry extra words
    that the entity does not have.  ``MISSING`` divides by the substring
    weight: a mention may be missing words of the entity.
    """

    EXTRA = "extra"
    MISSING = "missing"


class WeightingScheme(str, Enum):
    UNIT = "unit"
    IDF = "idf"


class TokenTable:
    """Interns token strings to dense integer ids for one corpus session."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._texts: list[str] = []

    def intern(self, text: str) -> int:
        tid = self._ids.get(text)
        if tid is None:
            tid = len(self._texts)
            self._ids[text] = tid
            self._texts.append(text)
        return tid

    def id_of(self, text: str) -> int | None:
        return self._ids.get(text)

    def text_of(self, tid: int) -> str:
        return self._texts[tid]

    def __len__(self) -> int:
        return len(self._texts)

    def __iter__(self):
        return iter(range(len(self._texts)))


def split_tokens(text: str) -> list[str]:
    """Lowercase ``text`` and split it into tokens.

    Tokens break on whitespace and on punctuation, except that a punctuation
    character directly between two alphanumerics stays inside the token
    ("at&t", "12:30").  Runs of punctuation always split.
    """
    folded = text.casefold()
    n = len(folded)
    out: list[str] = []
    cur: list[str] = []
    for i, ch in enumerate(folded):
        if ch.isalnum():
            cur.append(ch)
        elif (
            not ch.isspace()
            and 0 < i < n - 1
            and folded[i - 1].isalnum()
            and folded[i + 1].isalnum()
        ):
            cur.append(ch)
        else:
            if cur:
                out.append("".join(cur))
                cur = []
    if cur:
        out.append("".join(cur))
    return out


@dataclass(frozen=True)
class WeightedTokenSeq:
    """An ordered token sequence with one non-negative integer weight per slot."""

    token_ids: tuple[int, ...]
    weights: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.token_ids) != len(self.weights):
            raise ValueError("token/weight length mismatch")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")

    @classmethod
    def unit(cls, token_ids: Iterable[int]) -> "WeightedTokenSeq":
        ids = tuple(token_ids)
        return cls(ids, (1,) * len(ids))

    def __len__(self) -> int:
        return len(self.token_ids)

    @cached_property
    def total_weight(self) -> int:
        """Sum of all slot weights, duplicates included."""
        return sum(self.weights)

    @cached_property
    def weight_map(self) -> dict[int, int]:
        """Distinct token -> weight (first occurrence wins)."""
        m: dict[int, int] = {}
        for t, w in zip(self.token_ids, self.weights):
            if t not in m:
                m[t] = w
        return m

    @cached_property
    def set_weight(self) -> int:
        """Weight of the distinct-token set."""
        return sum(self.weight_map.values())

    @cached_property
    def key(self) -> TokenSetKey:
        """Canonical sorted distinct-token key."""
        return tuple(sorted(self.weight_map))

    def reweighted(self, weight_of) -> "WeightedTokenSeq":
        """Return a copy with each token's weight taken from ``weight_of(token)``."""
        return WeightedTokenSeq(
            self.token_ids, tuple(weight_of(t) for t in self.token_ids)
        )


def tokenize(text: str, table: TokenTable) -> WeightedTokenSeq:
    """Tokenize ``text`` into a unit-weighted sequence, interning via ``table``."""
    return WeightedTokenSeq.unit(table.intern(t) for t in split_tokens(text))


def _intersection_weight(weights_from: WeightedTokenSeq, other: WeightedTokenSeq) -> int:
    om = other.weight_map
    return sum(w for t, w in weights_from.weight_map.items() if t in om)


def jaccard_similarity(a: WeightedTokenSeq, b: WeightedTokenSeq) -> Fraction:
    """Weighted Jaccard similarity over the distinct-token sets of ``a`` and ``b``.

    Both sides are assumed to carry the same per-token weights (they come
    from one global weighting scheme).
    """
    if len(a) == 0 and len(b) == 0:
        raise ValueError("similarity undefined for two empty sequences")
    inter = _intersection_weight(a, b)
    union = a.set_weight + b.set_weight - inter
    if union == 0:
        raise ValueError("similarity undefined for zero-weight operands")
    return Fraction(inter, union)


def jaccard_containment_missing(e: WeightedTokenSeq, s: WeightedTokenSeq) -> Fraction:
    """Containment of ``e`` in ``s`` divided by the weight of ``s``.

    Equals 1 when every distinct token of ``s`` belongs to ``e`` — i.e. the
    substring may be *missing* words of the entity but adds none of its own.
    """
    if len(s) == 0:
        raise ValueError("containment undefined for an empty substring")
    den = s.set_weight
    if den == 0:
        raise ValueError("containment undefined for a zero-weight divisor")
    return Fraction(_intersection_weight(s, e), den)


def jaccard_containment_extra(e: WeightedTokenSeq, s: WeightedTokenSeq) -> Fraction:
    """Containment of ``e`` in ``s`` divided by the weight of ``e``.

    Equals 1 when every distinct token of ``e`` occurs in ``s``; tokens of
    ``s`` outside ``e`` (*extra* words) do not lower the score.
    """
    if len(e) == 0:
        raise ValueError("containment undefined for an empty entity")
    den = e.set_weight
    if den == 0:
        raise ValueError("containment undefined for a zero-weight divisor")
    return Fraction(_intersection_weight(e, s), den)


def containment(
    e: WeightedTokenSeq, s: WeightedTokenSeq, predicate: Predicate
) -> Fraction:
    if predicate is Predicate.EXTRA:
        return jaccard_containment_extra(e, s)
    return jaccard_containment_missing(e, s)


def _check_gamma(gamma: Fraction) -> Fraction:
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise ValueError(f"similarity threshold must be in (0, 1], got {gamma}")
    return gamma


def subsets_with_min_weight(
    items: Iterable[tuple[int, int]],
    min_weight: Fraction | int,
    cap: int = DEFAULT_VARIANT_CAP,
) -> set[TokenSetKey]:
    """All non-empty token subsets of ``items`` whose weight reaches ``min_weight``.

    ``items`` are distinct ``(token, weight)`` pairs.  Raises
    :class:`VariantExplosionError` once more than ``cap`` subsets qualify.
    """
    # explore heavy tokens first so the weight bound prunes early
    order = sorted(items, key=lambda tw: (-tw[1], tw[0]))
    tokens = [t for t, _ in order]
    weights = [w for _, w in order]
    n = len(order)
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + weights[i]

    found: list[TokenSetKey] = []
    chosen: list[int] = []

    def walk(i: int, weight: int) -> None:
        if weight + suffix[i] < min_weight:
            return  # even taking every remaining token cannot qualify
        if i == n:
            if chosen and weight >= min_weight:
                if len(found) >= cap:
                    raise VariantExplosionError(len(found), cap)
                found.append(tuple(sorted(chosen)))
            return
        chosen.append(tokens[i])
        walk(i + 1, weight + weights[i])
        chosen.pop()
        walk(i + 1, weight)

    walk(0, 0)
    return set(found)


def jaccard_variants(
    seq: WeightedTokenSeq,
    gamma: Fraction,
    cap: int = DEFAULT_VARIANT_CAP,
) -> set[TokenSetKey]:
    """Distinct-token subsets of ``seq`` whose weight is at least ``gamma``
    times the sequence's set weight.

    The full token set is always a member.  A sequence's containment in a
    probe reaches ``gamma`` exactly when their token intersection is one of
    these subsets, which is what makes exact-key matching possible.
    """
    gamma = _check_gamma(gamma)
    if len(seq) == 0:
        raise ValueError("variants undefined for an empty sequence")
    return subsets_with_min_weight(
        seq.weight_map.items(), gamma * seq.set_weight, cap
    )


def variant_count(
    seq: WeightedTokenSeq, gamma: Fraction, cap: int = DEFAULT_VARIANT_CAP
) -> int:
    """Number of qualifying subsets, without materializing them.

    Raises :class:`VariantExplosionError` past ``cap`` like
    :func:`jaccard_variants`.
    """
    gamma = _check_gamma(gamma)
    if len(seq) == 0:
        raise ValueError("variants undefined for an empty sequence")
    items = sorted(seq.weight_map.items(), key=lambda tw: (-tw[1], tw[0]))
    weights = [w for _, w in items]
    n = len(items)
    min_weight = gamma * seq.set_weight
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + weights[i]
    count = 0

    def walk(i: int, weight: int, nonempty: bool) -> None:
        nonlocal count
        if weight + suffix[i] < min_weight:
            return
        if i == n:
            if nonempty and weight >= min_weight:
                count += 1
                if count > cap:
                    raise VariantExplosionError(count, cap)
            return
        walk(i + 1, weight + weights[i], True)
        walk(i + 1, weight, nonempty)

    walk(0, 0, False)
    return count


def idf_weight(total_entities: int, entity_freq: int, scale: int = 10) -> int:
    """Scaled-integer inverse-frequency weight, floored at 1."""
    if total_entities <= 0:
        raise ValueError("need a positive entity count")
    if entity_freq <= 0:
        entity_freq = 1
    return max(1, round(scale * math.log(total_entities / entity_freq)))


def assign_weights(
    seq: WeightedTokenSeq,
    scheme: WeightingScheme,
    stats,
    *,
    scale: int = 10,
    default_weight: int | None = None,
) -> WeightedTokenSeq:
    """Reweight ``seq`` under ``scheme``.

    ``stats`` must expose ``total_entities`` and ``token_entity_freq`` (see
    :class:`eejoin.corpus.CorpusStats`).  Tokens unknown to the dictionary
    get ``default_weight`` (by default the weight of a token occurring in a
    single entity).
    """
    if scheme is WeightingScheme.UNIT:
        return WeightedTokenSeq.unit(seq.token_ids)
    n = stats.total_entities
    freqs = stats.token_entity_freq
    if default_weight is None:
        default_weight = idf_weight(n, 1, scale) if n > 0 else 1

    def weight_of(t: int) -> int:
        df = freqs.get(t, 0)
        if df <= 0:
            return default_weight
        return idf_weight(n, df, scale)

    return seq.reweighted(weight_of)
