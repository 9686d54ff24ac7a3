"""Executable extraction methods: index probing and signature shuffle joins.

Both methods run on the deterministic local runtime from :mod:`.engine` and
produce the same mention set for the same dictionary slice; they differ in
how (entity, window) pairs meet.  Index methods replicate budget-sized
partitions of the dictionary to every map task and probe them per window.
Shuffle joins key both sides by signatures — single words, rarity prefixes,
minhash bands, or token subsets — and pair them in reducers, where hits
from approximate signatures are re-scored before anything is emitted.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .candidates import build_filter, iter_all_spans, iter_filtered_spans
from .corpus import Dictionary, Document, Entity
from .engine import JobMetrics, JobSpec, KeyedRecord, run_job
from .formats import DataFormatError, format_fraction, parse_fraction
from .indexing import (
    IndexScheme,
    TokenOrder,
    build_index,
    entity_keys,
    lookup_items,
    probe_keys,
)
from .text import (
    DEFAULT_VARIANT_CAP,
    Predicate,
    TokenSetKey,
    WeightedTokenSeq,
)

MENTIONS_HEADER = "# ee-mentions v1"

DEFAULT_MAX_GROUP = 1_000_000

_LSH_PRIME = (1 << 61) - 1


class SignatureKind(str, Enum):
    SINGLE_WORD = "single_word"
    PREFIX = "prefix"
    LSH = "lsh"
    JACCARD_VARIANT = "jaccard_variant"


@dataclass(frozen=True)
class SignatureScheme:
    kind: SignatureKind
    bands: int = 16
    rows: int = 4
    seed: int = 42

    def __post_init__(self) -> None:
        if self.kind is SignatureKind.LSH and (self.bands < 1 or self.rows < 1):
            raise ValueError("minhash needs at least one band and one row")

    def label(self) -> str:
        if self.kind is SignatureKind.LSH:
            return f"lsh[{self.bands}x{self.rows},seed={self.seed}]"
        return self.kind.value


class Method(str, Enum):
    INDEX = "index"
    SSJOIN = "ssjoin"


@dataclass(frozen=True)
class MethodAssignment:
    """One method applied to a contiguous slice of the entity ordering."""

    method: Method
    lo: int
    hi: int
    index_scheme: IndexScheme | None = None
    signature_scheme: SignatureScheme | None = None

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi < self.lo:
            raise ValueError(f"bad slice [{self.lo}, {self.hi})")
        if self.method is Method.INDEX and self.index_scheme is None:
            raise ValueError("index assignment needs an index scheme")
        if self.method is Method.SSJOIN and self.signature_scheme is None:
            raise ValueError("join assignment needs a signature scheme")

    def label(self) -> str:
        detail = (
            self.index_scheme.value
            if self.method is Method.INDEX
            else self.signature_scheme.label()
        )
        return f"{self.method.value}/{detail}[{self.lo}:{self.hi})"


@dataclass(frozen=True)
class Mention:
    entity_id: int
    doc_id: int
    start: int
    end: int
    score: Fraction

    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.doc_id, self.start, self.entity_id, self.end)

    def row(self) -> str:
        return (
            f"{self.entity_id}\t{self.doc_id}\t{self.start}\t{self.end}"
            f"\t{format_fraction(self.score)}"
        )


@dataclass
class PlanRun:
    mentions: list[Mention]
    metrics: list[JobMetrics]
    counters: Counter = field(default_factory=Counter)


class LshHasher:
    """Seeded per-(band, row) universal hashes over token ids mod 2^61 - 1."""

    def __init__(self, bands: int, rows: int, seed: int):
        rng = random.Random(seed)
        self.bands = bands
        self.rows = rows
        self.coeffs = [
            [(rng.randrange(1, _LSH_PRIME), rng.randrange(_LSH_PRIME)) for _ in range(rows)]
            for _ in range(bands)
        ]

    def band_keys(self, token_ids: Iterable[int]) -> list[bytes]:
        tokens = sorted(set(token_ids))
        if not tokens:
            return []
        keys = []
        for band, rows in enumerate(self.coeffs):
            mins = (
                str(min((a * t + b) % _LSH_PRIME for t in tokens)) for a, b in rows
            )
            keys.append(f"l:{band}:{','.join(mins)}".encode("ascii"))
        return keys

    def collision_probability(self, similarity: float) -> float:
        """Chance at least one band agrees for sets at the given resemblance."""
        return 1.0 - (1.0 - similarity**self.rows) ** self.bands


def encode_word_key(token_id: int) -> bytes:
    return b"w:%d" % token_id


def encode_subset_key(key: TokenSetKey) -> bytes:
    return b"v:" + ",".join(str(t) for t in key).encode("ascii")


def _word_keys(keys: Iterable[TokenSetKey]) -> list[bytes]:
    return [encode_word_key(k[0]) for k in keys]


_SIG_TO_INDEX = {
    SignatureKind.SINGLE_WORD: IndexScheme.PER_WORD,
    SignatureKind.PREFIX: IndexScheme.PREFIX,
    SignatureKind.JACCARD_VARIANT: IndexScheme.JACCARD_VARIANT,
}


def entity_signatures(
    surface: WeightedTokenSeq,
    scheme: SignatureScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
    cap: int = DEFAULT_VARIANT_CAP,
    hasher: LshHasher | None = None,
) -> tuple[list[bytes], list[bytes]]:
    """Signatures for the dictionary side as ``(exact, verify)`` byte keys."""
    if scheme.kind is SignatureKind.LSH:
        assert hasher is not None
        return [], hasher.band_keys(surface.weight_map)
    exact, verify = entity_keys(
        surface, _SIG_TO_INDEX[scheme.kind], gamma, predicate, order, cap
    )
    return [encode_subset_key(k) for k in exact], _word_keys(verify)


def probe_signatures(
    items: Sequence[tuple[int, int]],
    set_weight: int,
    scheme: SignatureScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None,
    *,
    dict_tokens: frozenset[int],
    subset_tokens: frozenset[int] | None = None,
    min_subset_weight: Fraction | int | None,
    with_fallback: bool,
    cap: int = DEFAULT_VARIANT_CAP,
    hasher: LshHasher | None = None,
) -> tuple[list[bytes], list[bytes]]:
    """Signatures for one document window, mirroring :func:`entity_signatures`."""
    if scheme.kind is SignatureKind.LSH:
        assert hasher is not None
        return [], hasher.band_keys(t for t, _ in items)
    exact, verify = probe_keys(
        items,
        set_weight,
        _SIG_TO_INDEX[scheme.kind],
        gamma,
        predicate,
        order,
        dict_tokens=dict_tokens,
        subset_tokens=subset_tokens,
        min_subset_weight=min_subset_weight,
        cap=cap,
        with_fallback=with_fallback,
    )
    return [encode_subset_key(k) for k in exact], _word_keys(verify)


def signature_count(
    surface: WeightedTokenSeq,
    scheme: SignatureScheme,
    gamma: Fraction,
    predicate: Predicate,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
) -> int:
    """How many signatures the dictionary side emits for this surface."""
    if scheme.kind is SignatureKind.LSH:
        return scheme.bands
    exact, verify = entity_keys(
        surface, _SIG_TO_INDEX[scheme.kind], gamma, predicate, order, cap
    )
    return len(exact) + len(verify)


def _mention_key(doc_id: int, start: int, entity_id: int, end: int) -> bytes:
    return f"{doc_id:012d}\t{start:012d}\t{entity_id:012d}\t{end:012d}".encode("ascii")


def _encode_span(doc_id: int, start: int, end: int, set_weight: int,
                 items: Sequence[tuple[int, int]]) -> bytes:
    body = ",".join(f"{t}:{w}" for t, w in items)
    return f"1{doc_id}\t{start}\t{end}\t{set_weight}\t{body}".encode("ascii")


def _decode_span(payload: bytes) -> tuple[int, int, int, int, list[tuple[int, int]]]:
    doc_id, start, end, sw, body = payload[1:].decode("ascii").split("\t")
    items = [
        (int(t), int(w)) for t, w in (p.split(":") for p in body.split(",") if p)
    ]
    return int(doc_id), int(start), int(end), int(sw), items


def _dedup_sorted(mentions: Iterable[Mention]) -> list[Mention]:
    return sorted(set(mentions), key=Mention.sort_key)


def run_index_method(
    dictionary: Dictionary,
    documents: Sequence[Document],
    entities: Sequence[Entity],
    scheme: IndexScheme,
    gamma: Fraction,
    predicate: Predicate,
    memory_budget: int,
    *,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
    num_mappers: int = 1,
    workers: int | None = None,
    base_offset: int = 0,
    job_name: str = "index",
) -> PlanRun:
    """Probe every filtered window against each index partition (map-only)."""
    if not entities:
        return PlanRun([], [], Counter())
    gamma = Fraction(gamma)
    partitions = build_index(
        entities,
        scheme,
        gamma,
        memory_budget,
        predicate=predicate,
        order=order,
        cap=cap,
        base_offset=base_offset,
    )
    flt = build_filter(entities, gamma, predicate)
    max_len = dictionary.max_entity_length
    mentions: list[Mention] = []
    all_metrics: list[JobMetrics] = []
    totals: Counter = Counter()
    for part in partitions:
        index = part.index

        def probe_doc(doc, counters, index=index):
            out: list[KeyedRecord] = []
            doc_id = doc.doc_id
            for start, end, items, set_weight in iter_filtered_spans(doc, max_len, flt):
                counters["candidates"] += 1
                counters["lookups"] += 1
                hits = lookup_items(
                    index, items, set_weight, gamma, cap=cap, counters=counters
                )
                for eid in sorted(hits):
                    counters["mentions"] += 1
                    score = hits[eid]
                    row = (
                        f"{eid}\t{doc_id}\t{start}\t{end}"
                        f"\t{score.numerator}/{score.denominator}"
                    )
                    out.append((_mention_key(doc_id, start, eid, end),
                                row.encode("ascii")))
            return out

        records, metrics = run_job(
            JobSpec(
                name=f"{job_name}[{part.lo}:{part.hi})",
                map_fn=probe_doc,
                inputs=documents,
                num_mappers=num_mappers,
                workers=workers,
            )
        )
        all_metrics.append(metrics)
        totals.update(metrics.counters)
        # each (window, entity) pair is scored once and partitions hold
        # disjoint entity slices, so these rows are already unique
        mentions.extend(_parse_mention_row(v.decode("ascii")) for _, v in records)
    mentions.sort(key=Mention.sort_key)
    return PlanRun(mentions, all_metrics, totals)


def run_ssjoin_method(
    dictionary: Dictionary,
    documents: Sequence[Document],
    entities: Sequence[Entity],
    scheme: SignatureScheme,
    gamma: Fraction,
    predicate: Predicate,
    *,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
    num_mappers: int = 1,
    num_reducers: int = 1,
    workers: int | None = None,
    max_group_size: int | None = DEFAULT_MAX_GROUP,
    filtered: bool = True,
    job_name: str = "ssjoin",
) -> PlanRun:
    """Key both sides by signatures and pair them in reducers (one job).

    ``filtered=False`` is the baseline that signs every substring without
    consulting the mention filter; it exists to measure how much shuffle
    the filter saves and must produce the same mentions.
    """
    if not entities:
        return PlanRun([], [], Counter())
    gamma = Fraction(gamma)
    hasher = (
        LshHasher(scheme.bands, scheme.rows, scheme.seed)
        if scheme.kind is SignatureKind.LSH
        else None
    )
    surfaces = {e.entity_id: e.surface for e in entities}
    entity_sigs = {
        e.entity_id: entity_signatures(
            e.surface, scheme, gamma, predicate, order, cap, hasher
        )
        for e in entities
    }
    with_fallback = any(vs for _, vs in entity_sigs.values())
    dict_tokens = frozenset(t for s in surfaces.values() for t in s.weight_map)
    min_subset: Fraction | None = None
    if scheme.kind is SignatureKind.JACCARD_VARIANT and predicate is Predicate.EXTRA:
        floors = [
            gamma * surfaces[eid].set_weight
            for eid, (ex, _) in entity_sigs.items()
            if ex
        ]
        min_subset = min(floors) if floors else None
    subset_tokens = (
        frozenset(
            t
            for eid, (ex, _) in entity_sigs.items()
            if ex
            for t in surfaces[eid].weight_map
        )
        if scheme.kind is SignatureKind.JACCARD_VARIANT
        else None
    )
    flt = build_filter(entities, gamma, predicate)
    max_len = dictionary.max_entity_length

    def doc_spans(doc):
        if filtered:
            return iter_filtered_spans(doc, max_len, flt)
        return iter_all_spans(doc, max_len)

    def sig_map(item, counters):
        kind, payload = item
        out: list[KeyedRecord] = []
        if kind == "e":
            eid = payload.entity_id
            exact, verify = entity_sigs[eid]
            tag = b"0" + str(eid).encode("ascii")
            for sig in exact:
                out.append((sig, tag))
            for sig in verify:
                out.append((sig, tag))
            counters["entitySignatures"] += len(exact) + len(verify)
            return out
        doc = payload
        for start, end, items, set_weight in doc_spans(doc):
            counters["candidates"] += 1
            exact, verify = probe_signatures(
                items,
                set_weight,
                scheme,
                gamma,
                predicate,
                order,
                dict_tokens=dict_tokens,
                subset_tokens=subset_tokens,
                min_subset_weight=min_subset,
                with_fallback=with_fallback,
                cap=cap,
                hasher=hasher,
            )
            span = _encode_span(doc.doc_id, start, end, set_weight, items)
            for sig in exact:
                out.append((sig, span))
            for sig in verify:
                out.append((sig, span))
            counters["probeSignatures"] += len(exact) + len(verify)
        return out

    g_num, g_den = gamma.numerator, gamma.denominator
    extra = predicate is Predicate.EXTRA
    entity_sides = {
        eid: (
            tuple(s.weight_map.items()),
            frozenset(s.weight_map),
            s.weight_map,
            s.set_weight,
            s.set_weight == len(s.weight_map),  # all-unit weights
        )
        for eid, s in surfaces.items()
    }
    # payload -> decoded span; shared across groups (pure function of the
    # bytes, so concurrent recomputation is harmless)
    span_cache: dict[bytes, tuple] = {}

    def pair_reduce(key, values, counters):
        # values are byte-sorted, so all b"0" entity tags precede b"1" spans
        split = 0
        while split < len(values) and values[split][:1] == b"0":
            split += 1
        group = []
        for v in values[:split]:
            eid = int(v[1:])
            group.append((eid,) + entity_sides[eid])
        exact = key[:1] == b"v"
        out: list[KeyedRecord] = []
        for payload in values[split:]:
            span = span_cache.get(payload)
            if span is None:
                doc_id, start, end, set_weight, items = _decode_span(payload)
                span = (
                    doc_id, start, end, set_weight, items,
                    frozenset(t for t, _ in items),
                    set_weight == len(items),
                )
                span_cache[payload] = span
            doc_id, start, end, set_weight, items, token_set, span_unit = span
            for eid, entity_items, entity_tokens, weight_map, entity_weight, entity_unit in group:
                counters["pairs"] += 1
                if span_unit and entity_unit:
                    num = len(entity_tokens & token_set)
                    den = entity_weight if extra else set_weight
                elif extra:
                    num = sum(w for t, w in entity_items if t in token_set)
                    den = entity_weight
                else:
                    num = sum(w for t, w in items if t in weight_map)
                    den = set_weight
                if not exact:
                    counters["verifications"] += 1
                    if num * g_den < g_num * den:
                        continue
                counters["mentions"] += 1
                out.append((
                    _mention_key(doc_id, start, eid, end),
                    f"{eid}\t{doc_id}\t{start}\t{end}\t{num}/{den}".encode("ascii"),
                ))
        return out

    inputs: list[tuple[str, object]] = [("e", e) for e in entities]
    inputs += [("d", d) for d in documents]
    records, metrics = run_job(
        JobSpec(
            name=job_name,
            map_fn=sig_map,
            inputs=inputs,
            reduce_fn=pair_reduce,
            num_mappers=num_mappers,
            num_reducers=num_reducers,
            workers=workers,
            max_group_size=max_group_size,
        )
    )
    # duplicate mentions arrive as byte-identical rows (same pair, same
    # arithmetic) so dedup can happen before any parsing
    rows = {v for _, v in records}
    mentions = sorted(
        (_parse_mention_row(v.decode("ascii")) for v in rows),
        key=Mention.sort_key,
    )
    return PlanRun(mentions, [metrics], Counter(metrics.counters))


def run_assignments(
    dictionary: Dictionary,
    documents: Sequence[Document],
    assignments: Sequence[MethodAssignment],
    gamma: Fraction,
    predicate: Predicate,
    memory_budget: int,
    *,
    order: TokenOrder | None = None,
    cap: int = DEFAULT_VARIANT_CAP,
    num_mappers: int = 1,
    num_reducers: int = 1,
    workers: int | None = None,
    max_group_size: int | None = DEFAULT_MAX_GROUP,
) -> PlanRun:
    """Execute every assignment over its dictionary slice and merge mentions."""
    ordered = dictionary.ordered_entities()
    mentions: list[Mention] = []
    all_metrics: list[JobMetrics] = []
    totals: Counter = Counter()
    for n, asg in enumerate(assignments):
        if asg.hi > dictionary.n:
            raise ValueError(
                f"assignment {asg.label()} exceeds dictionary size {dictionary.n}"
            )
        entities = ordered[asg.lo : asg.hi]
        if not entities:
            continue
        if asg.method is Method.INDEX:
            run = run_index_method(
                dictionary,
                documents,
                entities,
                asg.index_scheme,
                gamma,
                predicate,
                memory_budget,
                order=order,
                cap=cap,
                num_mappers=num_mappers,
                workers=workers,
                base_offset=asg.lo,
                job_name=f"index#{n}",
            )
        else:
            run = run_ssjoin_method(
                dictionary,
                documents,
                entities,
                asg.signature_scheme,
                gamma,
                predicate,
                order=order,
                cap=cap,
                num_mappers=num_mappers,
                num_reducers=num_reducers,
                workers=workers,
                max_group_size=max_group_size,
                job_name=f"ssjoin#{n}",
            )
        mentions.extend(run.mentions)
        all_metrics.extend(run.metrics)
        totals.update(run.counters)
    return PlanRun(_dedup_sorted(mentions), all_metrics, totals)


def _parse_mention_row(row: str, path=None, line_no: int | None = None) -> Mention:
    parts = row.rstrip("\n").split("\t")
    if len(parts) != 5:
        raise DataFormatError(path, line_no, f"expected 5 mention fields: {row!r}")
    try:
        return Mention(
            entity_id=int(parts[0]),
            doc_id=int(parts[1]),
            start=int(parts[2]),
            end=int(parts[3]),
            score=parse_fraction(parts[4]),
        )
    except ValueError as exc:
        raise DataFormatError(path, line_no, f"bad mention row: {row!r}") from exc


def write_mentions(path, mentions: Sequence[Mention]) -> None:
    lines = [MENTIONS_HEADER]
    lines.extend(m.row() for m in sorted(set(mentions), key=Mention.sort_key))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mentions(path) -> list[Mention]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != MENTIONS_HEADER:
        raise DataFormatError(path, 1, f"expected header {MENTIONS_HEADER!r}")
    out: list[Mention] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        out.append(_parse_mention_row(line, path, line_no))
    return out
