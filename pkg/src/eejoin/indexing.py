"""Inverted entity indexes: per-word, rarity-ordered prefix, and token-subset keys.

Key generation lives here and is shared with the shuffle-join signature
schemes so that index lookups and join reducers agree on which pairs must
meet.  The guiding contract: for the configured containment predicate, any
(entity, window) pair scoring at or above the threshold shares at least one
key, and subset keys match only pairs that already score.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .engine import fnv1a64
from .formats import DataFormatError, format_fraction, parse_fraction
from .text import (
    DEFAULT_VARIANT_CAP,
    Predicate,
    TokenSetKey,
    TokenTable,
    VariantExplosionError,
    WeightedTokenSeq,
    jaccard_containment_extra,
    jaccard_containment_missing,
    jaccard_variants,
    subsets_with_min_weight,
)

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import CorpusStats, Entity

INDEX_HEADER = "ee-index v1"

#: modeled bytes per posting-list entry and per distinct key
POSTING_ENTRY_BYTES = 16
KEY_BYTES = 32


class IndexScheme(str, Enum):
    PER_WORD = "per_word"
    PREFIX = "prefix"
    JACCARD_VARIANT = "jaccard_variant"


class MemoryBudgetError(RuntimeError):
    """A single entity's postings do not fit the per-partition budget."""


@dataclass(frozen=True)
class TokenOrder:
    """A global token ranking (rarest first by default) used for prefixes."""

    rank: dict[int, int]
    signature: str

    def key_fn(self, token_id: int) -> tuple[int, int]:
        r = self.rank.get(token_id)
        if r is None:
            # unseen tokens sort after every ranked one, by id
            return (1, token_id)
        return (0, r)


def build_token_order(
    stats: "CorpusStats", table: TokenTable, *, rare_first: bool = True
) -> TokenOrder:
    df = stats.token_doc_freq
    tokens = sorted(
        range(len(table)),
        key=(lambda t: (df.get(t, 0), t)) if rare_first else (lambda t: (-df.get(t, 0), t)),
    )
    rank = {t: i for i, t in enumerate(tokens)}
    digest = fnv1a64(",".join(table.text_of(t) for t in tokens).encode("utf-8"))
    return TokenOrder(rank=rank, signature=f"{digest:016x}")


def default_token_order(table: TokenTable) -> TokenOrder:
    """Rank tokens by id; any fixed order keeps prefixes correct."""
    return TokenOrder(rank={t: t for t in range(len(table))}, signature="identity")


def prefix_tokens(
    items: Sequence[tuple[int, int]],
    set_weight: int,
    gamma: Fraction,
    order: TokenOrder | None,
) -> tuple[int, ...]:
    """Shortest rarity-first prefix whose weight exceeds ``(1 - gamma)`` of the set.

    Dropping the whole prefix would leave less than ``gamma`` of the weight,
    so a window containing none of these tokens cannot reach the threshold
    against this item.
    """
    if order is None:
        ranked = sorted(items)
    else:
        ranked = sorted(items, key=lambda tw: order.key_fn(tw[0]))
    need = (1 - Fraction(gamma)) * set_weight
    acc = 0
    out: list[int] = []
    for t, w in ranked:
        out.append(t)
        acc += w
        if acc > need:
            break
    return tuple(out)


def entity_keys(
    surface: WeightedTokenSeq,
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
    cap: int = DEFAULT_VARIANT_CAP,
) -> tuple[list[TokenSetKey], list[TokenSetKey]]:
    """Index keys for one entity as ``(exact_keys, verify_keys)``.

    Exact keys match only windows that already score (no verification);
    verify keys are an over-approximation whose hits must be scored.  An
    entity whose subset enumeration overflows the cap degrades to prefix
    keys, which always need verification.
    """
    items = sorted(surface.weight_map.items())
    singles = [(t,) for t, _ in items]
    if scheme is IndexScheme.PER_WORD:
        return [], singles
    if scheme is IndexScheme.PREFIX:
        if predicate is Predicate.EXTRA:
            pref = prefix_tokens(items, surface.set_weight, gamma, order)
            return [], [(t,) for t in sorted(pref)]
        return [], singles
    # token-subset keys
    try:
        if predicate is Predicate.EXTRA:
            keys = jaccard_variants(surface, gamma, cap)
        else:
            keys = subsets_with_min_weight(items, 0, cap)
        return sorted(keys), []
    except VariantExplosionError:
        if predicate is Predicate.EXTRA:
            pref = prefix_tokens(items, surface.set_weight, gamma, order)
            return [], [(t,) for t in sorted(pref)]
        return [], singles


def probe_keys(
    items: Sequence[tuple[int, int]],
    set_weight: int,
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
    *,
    dict_tokens: frozenset[int] | set[int] | None = None,
    subset_tokens: frozenset[int] | set[int] | None = None,
    min_subset_weight: Fraction | int | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
    with_fallback: bool = False,
) -> tuple[list[TokenSetKey], list[TokenSetKey]]:
    """Lookup keys for one window, mirroring :func:`entity_keys`.

    The side whose weight divides the containment score gets the short
    key set (prefix or threshold subsets); the probe side of the division
    must offer every token, or every dictionary-token subset, so that no
    scoring pair is missed.

    When ``dict_tokens`` is given, single-token keys are restricted to it:
    any token shared with an entity is by definition a dictionary token, so
    keys for out-of-dictionary tokens can never meet a posting.  Prefix
    thresholds still accumulate over the full window weight before the
    restriction applies.  ``subset_tokens`` (defaulting to ``dict_tokens``)
    bounds the universe for threshold-subset enumeration — the tokens of
    subset-keyed entities.
    """
    if dict_tokens is None:
        singles = [(t,) for t, _ in items]
    else:
        singles = [(t,) for t, _ in items if t in dict_tokens]
    if scheme is IndexScheme.PER_WORD:
        return [], singles
    if scheme is IndexScheme.PREFIX:
        if predicate is Predicate.EXTRA:
            return [], singles
        if order is None:
            return [], singles
        pref = prefix_tokens(items, set_weight, gamma, order)
        if dict_tokens is not None:
            pref = [t for t in pref if t in dict_tokens]
        return [], [(t,) for t in sorted(pref)]
    # token-subset keys against subset-keyed entities
    universe = subset_tokens if subset_tokens is not None else dict_tokens
    dict_items = (
        items
        if universe is None
        else [(t, w) for t, w in items if t in universe]
    )
    if predicate is Predicate.EXTRA:
        floor = min_subset_weight if min_subset_weight is not None else 0
        exact = sorted(subsets_with_min_weight(dict_items, floor, cap)) if dict_items else []
        verify: list[TokenSetKey] = singles if with_fallback else []
        return exact, verify
    exact = (
        sorted(subsets_with_min_weight(dict_items, Fraction(gamma) * set_weight, cap))
        if dict_items
        else []
    )
    if with_fallback:
        if order is None:
            return exact, singles
        pref = prefix_tokens(items, set_weight, gamma, order)
        if dict_tokens is not None:
            pref = [t for t in pref if t in dict_tokens]
        return exact, [(t,) for t in sorted(pref)]
    return exact, []


def _entity_key_sets(
    entity: "Entity",
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
    cap: int,
) -> tuple[list[TokenSetKey], list[TokenSetKey], int]:
    exact, verify = entity_keys(entity.surface, scheme, gamma, predicate, order, cap)
    footprint = (len(exact) + len(verify)) * (POSTING_ENTRY_BYTES + KEY_BYTES)
    return exact, verify, footprint


def estimate_footprint(
    entities: Sequence["Entity"],
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate = Predicate.EXTRA,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
) -> int:
    """Deterministic additive upper bound on the slice's index bytes."""
    return sum(
        _entity_key_sets(e, scheme, gamma, predicate, order, cap)[2] for e in entities
    )


@dataclass(frozen=True)
class EntityIndex:
    scheme: IndexScheme
    gamma: Fraction | None
    predicate: Predicate
    postings_exact: dict[TokenSetKey, tuple[int, ...]]
    postings_verify: dict[TokenSetKey, tuple[int, ...]]
    entity_surfaces: dict[int, WeightedTokenSeq]
    token_order: TokenOrder | None
    size_bytes: int
    token_ids: frozenset[int]
    min_subset_weight: Fraction | None


@dataclass(frozen=True)
class IndexPartition:
    """One memory-budget-sized index over a contiguous slice of the ordering."""

    index: EntityIndex
    lo: int
    hi: int


def _build_one(
    entities: Sequence["Entity"],
    keyed: Sequence[tuple[list[TokenSetKey], list[TokenSetKey], int]],
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
) -> EntityIndex:
    exact: dict[TokenSetKey, list[int]] = {}
    verify: dict[TokenSetKey, list[int]] = {}
    surfaces: dict[int, WeightedTokenSeq] = {}
    tokens: set[int] = set()
    size = 0
    min_subset: Fraction | None = None
    for ent, (ex, ver, footprint) in zip(entities, keyed):
        size += footprint
        surfaces[ent.entity_id] = ent.surface
        tokens.update(ent.surface.weight_map)
        for k in ex:
            exact.setdefault(k, []).append(ent.entity_id)
        for k in ver:
            verify.setdefault(k, []).append(ent.entity_id)
        if ex:
            floor = Fraction(gamma) * ent.surface.set_weight
            if min_subset is None or floor < min_subset:
                min_subset = floor
    return EntityIndex(
        scheme=scheme,
        gamma=None if scheme is IndexScheme.PER_WORD else Fraction(gamma),
        predicate=predicate,
        postings_exact={k: tuple(sorted(v)) for k, v in exact.items()},
        postings_verify={k: tuple(sorted(v)) for k, v in verify.items()},
        entity_surfaces=surfaces,
        token_order=order,
        size_bytes=size,
        token_ids=frozenset(tokens),
        min_subset_weight=min_subset,
    )


def build_index(
    entities: Sequence["Entity"],
    scheme: IndexScheme,
    gamma: Fraction,
    memory_budget: int,
    *,
    predicate: Predicate = Predicate.EXTRA,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
    base_offset: int = 0,
) -> list[IndexPartition]:
    """Greedy-pack ``entities`` (in the given order) into budget-sized partitions."""
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise ValueError(f"similarity threshold must be in (0, 1], got {gamma}")
    if memory_budget <= 0:
        raise ValueError("memory budget must be positive")
    partitions: list[IndexPartition] = []
    cur_entities: list["Entity"] = []
    cur_keyed: list[tuple[list[TokenSetKey], list[TokenSetKey], int]] = []
    cur_size = 0
    cur_lo = base_offset

    def close(hi: int) -> None:
        nonlocal cur_entities, cur_keyed, cur_size, cur_lo
        if cur_entities:
            partitions.append(
                IndexPartition(
                    _build_one(cur_entities, cur_keyed, scheme, gamma, predicate, order),
                    cur_lo,
                    hi,
                )
            )
            cur_entities = []
            cur_keyed = []
            cur_size = 0
            cur_lo = hi

    for pos, ent in enumerate(entities):
        ks = _entity_key_sets(ent, scheme, gamma, predicate, order, cap)
        if ks[2] > memory_budget:
            raise MemoryBudgetError(
                f"entity {ent.entity_id} needs {ks[2]} bytes, budget is {memory_budget}"
            )
        if cur_entities and cur_size + ks[2] > memory_budget:
            close(base_offset + pos)
        cur_entities.append(ent)
        cur_keyed.append(ks)
        cur_size += ks[2]
    close(base_offset + len(entities))
    return partitions


def _score_pair(
    surface: WeightedTokenSeq,
    probe_map: dict[int, int],
    probe_set_weight: int,
    predicate: Predicate,
) -> tuple[int, int]:
    """Containment score of (entity surface, probe window) as (num, den)."""
    smap = surface.weight_map
    sweight = surface.set_weight
    # all-unit weights show up as weight == distinct count; intersection
    # size then equals intersection weight
    if probe_set_weight == len(probe_map) and sweight == len(smap):
        num = len(smap.keys() & probe_map.keys())
        return num, (sweight if predicate is Predicate.EXTRA else probe_set_weight)
    if predicate is Predicate.EXTRA:
        num = sum(w for t, w in smap.items() if t in probe_map)
        return num, sweight
    num = sum(w for t, w in probe_map.items() if t in smap)
    return num, probe_set_weight


def lookup_items(
    index: EntityIndex,
    items: Sequence[tuple[int, int]],
    set_weight: int,
    gamma: Fraction,
    *,
    cap: int = DEFAULT_VARIANT_CAP,
    counters=None,
) -> dict[int, Fraction]:
    """Entity ids scoring at least ``gamma`` against the window, with scores."""
    gamma = Fraction(gamma)
    if index.gamma is not None and index.gamma != gamma:
        raise ValueError(
            f"index built for threshold {index.gamma}, queried with {gamma}"
        )
    exact_keys, verify_keys = probe_keys(
        items,
        set_weight,
        index.scheme,
        gamma,
        index.predicate,
        index.token_order,
        dict_tokens=index.token_ids,
        subset_tokens=index.token_ids if index.postings_exact else frozenset(),
        min_subset_weight=index.min_subset_weight,
        cap=cap,
        with_fallback=bool(index.postings_verify),
    )
    probe_map = dict(items)
    results: dict[int, Fraction] = {}
    for key in exact_keys:
        ids = index.postings_exact.get(key)
        if not ids:
            continue
        for eid in ids:
            if eid not in results:
                num, den = _score_pair(
                    index.entity_surfaces[eid], probe_map, set_weight, index.predicate
                )
                results[eid] = Fraction(num, den)
    if index.postings_verify and verify_keys:
        candidates: set[int] = set()
        for key in verify_keys:
            ids = index.postings_verify.get(key)
            if ids:
                candidates.update(ids)
        g_num, g_den = gamma.numerator, gamma.denominator
        for eid in sorted(candidates):
            if eid in results:
                continue
            if counters is not None:
                counters["verifications"] += 1
            num, den = _score_pair(
                index.entity_surfaces[eid], probe_map, set_weight, index.predicate
            )
            if num * g_den >= g_num * den:
                results[eid] = Fraction(num, den)
    return results


def lookup(
    index: EntityIndex, probe: WeightedTokenSeq, gamma: Fraction
) -> dict[int, Fraction]:
    """Score ``probe`` against the indexed entities (reference entry point)."""
    items = sorted(probe.weight_map.items())
    return lookup_items(index, items, probe.set_weight, gamma)


def verify_score(
    surface: WeightedTokenSeq, probe: WeightedTokenSeq, predicate: Predicate
) -> Fraction:
    if predicate is Predicate.EXTRA:
        return jaccard_containment_extra(surface, probe)
    return jaccard_containment_missing(surface, probe)


def write_index(path, index: EntityIndex) -> None:
    lines = [INDEX_HEADER]
    lines.append(f"scheme\t{index.scheme.value}")
    lines.append(f"gamma\t{format_fraction(index.gamma) if index.gamma is not None else '-'}")
    lines.append(f"predicate\t{index.predicate.value}")
    if index.token_order is None:
        lines.append("orderSig\t-")
    else:
        lines.append(f"orderSig\t{index.token_order.signature}")
        ranked = sorted(index.token_order.rank, key=index.token_order.rank.get)
        lines.append(f"orderRank\t{','.join(str(t) for t in ranked)}")
    lines.append(f"sizeBytes\t{index.size_bytes}")
    for eid in sorted(index.entity_surfaces):
        surf = index.entity_surfaces[eid]
        body = ",".join(f"{t}:{w}" for t, w in zip(surf.token_ids, surf.weights))
        lines.append(f"e\t{eid}\t{body}")
    for tag, postings in (("k", index.postings_exact), ("v", index.postings_verify)):
        for key in sorted(postings):
            ids = ",".join(str(i) for i in postings[key])
            lines.append(f"{tag}\t{','.join(str(t) for t in key)}\t{ids}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_index(path) -> EntityIndex:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != INDEX_HEADER:
        raise DataFormatError(path, 1, f"expected header {INDEX_HEADER!r}")
    meta: dict[str, str] = {}
    surfaces: dict[int, WeightedTokenSeq] = {}
    exact: dict[TokenSetKey, tuple[int, ...]] = {}
    verify: dict[TokenSetKey, tuple[int, ...]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            if parts[0] in {"e", "k", "v"}:
                if parts[0] == "e":
                    eid = int(parts[1])
                    pairs = [p.split(":") for p in parts[2].split(",") if p]
                    surfaces[eid] = WeightedTokenSeq(
                        tuple(int(t) for t, _ in pairs),
                        tuple(int(w) for _, w in pairs),
                    )
                else:
                    key = tuple(int(t) for t in parts[1].split(",") if t)
                    ids = tuple(int(i) for i in parts[2].split(",") if i)
                    (exact if parts[0] == "k" else verify)[key] = ids
            else:
                meta[parts[0]] = parts[1]
        except (IndexError, ValueError) as exc:
            raise DataFormatError(path, line_no, f"bad index line: {line!r}") from exc
    try:
        scheme = IndexScheme(meta["scheme"])
        gamma = None if meta["gamma"] == "-" else parse_fraction(meta["gamma"])
        predicate = Predicate(meta["predicate"])
        size = int(meta["sizeBytes"])
        order: TokenOrder | None = None
        if meta.get("orderSig", "-") != "-":
            ranked = [int(t) for t in meta.get("orderRank", "").split(",") if t]
            order = TokenOrder(
                rank={t: i for i, t in enumerate(ranked)},
                signature=meta["orderSig"],
            )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(path, None, f"bad index metadata: {exc}") from exc
    tokens: set[int] = set()
    for surf in surfaces.values():
        tokens.update(surf.weight_map)
    min_subset: Fraction | None = None
    if gamma is not None and exact:
        indexed = {eid for ids in exact.values() for eid in ids}
        min_subset = min(gamma * surfaces[e].set_weight for e in indexed)
    return EntityIndex(
        scheme=scheme,
        gamma=gamma,
        predicate=predicate,
        postings_exact=exact,
        postings_verify=verify,
        entity_surfaces=surfaces,
        token_order=order,
        size_bytes=size,
        token_ids=frozenset(tokens),
        min_subset_weight=min_subset,
    )
