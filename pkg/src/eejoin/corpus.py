"""Dictionary and document ingestion, corpus statistics, frequency ordering.

Dictionaries are TSV files of ``entityId<TAB>surface``; documents are TSV
files of ``docId<TAB>body``.  Lines starting with ``#`` are comments.
Statistics serialize to the ``ee-stats v1`` key-value format with per-entity
frequencies in an adjacent ``<path>.freq.tsv``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .formats import DataFormatError, format_fraction, parse_fraction
from .text import (
    Predicate,
    TokenTable,
    WeightedTokenSeq,
    WeightingScheme,
    idf_weight,
    tokenize,
)

STATS_HEADER = "ee-stats v1"


@dataclass(frozen=True)
class Entity:
    entity_id: int
    surface: WeightedTokenSeq


@dataclass(frozen=True)
class Document:
    doc_id: int
    body: WeightedTokenSeq


@dataclass(frozen=True)
class Dictionary:
    """A deduplicated, weighted entity dictionary plus its processing order."""

    entities: tuple[Entity, ...]
    tokens: TokenTable
    max_entity_length: int
    ordering: tuple[int, ...]
    weighting: WeightingScheme
    token_weights: dict[int, int]
    default_token_weight: int

    @property
    def n(self) -> int:
        return len(self.entities)

    def ordered_entities(self) -> list[Entity]:
        return [self.entities[i] for i in self.ordering]

    def slice(self, lo: int, hi: int) -> list[Entity]:
        """Entities at positions ``[lo, hi)`` of the ordering."""
        return [self.entities[i] for i in self.ordering[lo:hi]]

    def weight_of(self, token_id: int) -> int:
        return self.token_weights.get(token_id, self.default_token_weight)

    def token_ids(self) -> set[int]:
        out: set[int] = set()
        for ent in self.entities:
            out.update(ent.surface.weight_map)
        return out


@dataclass(frozen=True)
class CorpusStats:
    """Profiled corpus statistics; sampled estimates scale by 1/sample_rate."""

    total_docs: int
    total_tokens: int
    total_entities: int
    token_doc_freq: dict[int, int]
    token_entity_freq: dict[int, int]
    est_candidates: int
    per_entity_mention_freq: dict[int, Fraction]
    sample_rate: Fraction
    avg_candidate_tokens: Fraction
    avg_candidate_subset_keys: Fraction


def dictionary_from_surfaces(
    pairs: Iterable[tuple[int, Sequence[str]]],
    *,
    weighting: WeightingScheme = WeightingScheme.UNIT,
    idf_scale: int = 10,
    table: TokenTable | None = None,
    source: str = "<memory>",
) -> Dictionary:
    """Build a dictionary from ``(entityId, token list)`` pairs.

    Entities whose distinct-token set repeats an earlier one are dropped
    (first id wins).  Under IDF weighting, token weights derive from how many
    kept entities contain each token.
    """
    table = table if table is not None else TokenTable()
    seen_ids: set[int] = set()
    seen_keys: set[tuple[int, ...]] = set()
    raw: list[tuple[int, WeightedTokenSeq]] = []
    for line_no, (eid, tokens) in enumerate(pairs, start=1):
        if eid in seen_ids:
            raise DataFormatError(source, line_no, f"duplicate entity id {eid}")
        seen_ids.add(eid)
        seq = WeightedTokenSeq.unit(table.intern(t) for t in tokens)
        if len(seq) == 0:
            raise DataFormatError(source, line_no, "entity surface has no tokens")
        if seq.key in seen_keys:
            continue
        seen_keys.add(seq.key)
        raw.append((eid, seq))
    if not raw:
        raise DataFormatError(source, None, "empty dictionary")

    entity_freq: dict[int, int] = {}
    for _, seq in raw:
        for t in seq.weight_map:
            entity_freq[t] = entity_freq.get(t, 0) + 1

    n = len(raw)
    if weighting is WeightingScheme.IDF:
        token_weights = {
            t: idf_weight(n, df, idf_scale) for t, df in entity_freq.items()
        }
        default_weight = idf_weight(n, 1, idf_scale)
    else:
        token_weights = {t: 1 for t in entity_freq}
        default_weight = 1

    entities = tuple(
        Entity(eid, seq.reweighted(lambda t: token_weights[t])) for eid, seq in raw
    )
    max_len = max(len(e.surface) for e in entities)
    return Dictionary(
        entities=entities,
        tokens=table,
        max_entity_length=max_len,
        ordering=tuple(range(len(entities))),
        weighting=weighting,
        token_weights=token_weights,
        default_token_weight=default_weight,
    )


def _parse_tsv_rows(path) -> Iterable[tuple[int, int, str]]:
    """Yield (line_no, id, payload) rows of an id<TAB>text file."""
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        head, sep, payload = line.partition("\t")
        if not sep:
            raise DataFormatError(path, line_no, "expected id<TAB>text")
        try:
            ident = int(head)
        except ValueError:
            raise DataFormatError(path, line_no, f"bad id {head!r}") from None
        yield line_no, ident, payload


def load_dictionary(
    path,
    *,
    weighting: WeightingScheme = WeightingScheme.UNIT,
    idf_scale: int = 10,
    table: TokenTable | None = None,
) -> Dictionary:
    """Load a ``entityId<TAB>surface`` TSV into a :class:`Dictionary`."""
    from .text import split_tokens

    pairs = [
        (eid, split_tokens(surface)) for _, eid, surface in _parse_tsv_rows(path)
    ]
    return dictionary_from_surfaces(
        pairs, weighting=weighting, idf_scale=idf_scale, table=table, source=path
    )


_UNESCAPES = {"\\n": "\n", "\\t": "\t", "\\\\": "\\"}


def _unescape_body(body: str) -> str:
    if "\\" not in body:
        return body
    out: list[str] = []
    i = 0
    while i < len(body):
        pair = body[i : i + 2]
        if pair in _UNESCAPES:
            out.append(_UNESCAPES[pair])
            i += 2
        else:
            out.append(body[i])
            i += 1
    return "".join(out)


def load_documents(path, dictionary: Dictionary) -> list[Document]:
    """Load a ``docId<TAB>body`` TSV, weighting tokens like the dictionary.

    Bodies may carry ``\\n``/``\\t`` escapes for embedded whitespace.  Bodies
    may be empty; doc ids must be unique.
    """
    docs: list[Document] = []
    seen: set[int] = set()
    for line_no, doc_id, body in _parse_tsv_rows(path):
        if doc_id in seen:
            raise DataFormatError(path, line_no, f"duplicate doc id {doc_id}")
        seen.add(doc_id)
        docs.append(make_document(doc_id, _unescape_body(body), dictionary))
    return docs


def make_document(doc_id: int, body: str, dictionary: Dictionary) -> Document:
    seq = tokenize(body, dictionary.tokens)
    return Document(doc_id, seq.reweighted(dictionary.weight_of))


def profile_corpus(
    dictionary: Dictionary,
    documents: Sequence[Document],
    sample_rate: Fraction,
    gamma: Fraction,
    predicate: Predicate,
    *,
    variant_cap: int | None = None,
) -> CorpusStats:
    """Scan a systematic document sample and estimate extraction statistics.

    The sample takes every k-th document in doc-id order, ``k =
    round(1/sample_rate)``.  Candidate counts are substrings that survive the
    mention filter at ``gamma``; per-entity frequencies count the sample
    substrings whose tokens hit the entity in a per-word map.  Sampled
    estimates scale by exactly ``1/sample_rate``.
    """
    from .candidates import build_filter, iter_filtered_spans
    from .text import DEFAULT_VARIANT_CAP

    cap = DEFAULT_VARIANT_CAP if variant_cap is None else variant_cap
    sample_rate = Fraction(sample_rate)
    if not 0 < sample_rate <= 1:
        raise ValueError(f"sample rate must be in (0, 1], got {sample_rate}")
    inv = 1 / sample_rate
    k = round(inv)

    docs_sorted = sorted(documents, key=lambda d: d.doc_id)
    sample = docs_sorted[::k] if docs_sorted else []

    total_docs = len(documents)
    total_tokens = sum(len(d.body) for d in documents)

    word_hits: dict[int, list[int]] = {}
    for ent in dictionary.entities:
        for t in ent.surface.weight_map:
            word_hits.setdefault(t, []).append(ent.entity_id)

    doc_freq: dict[int, int] = {}
    raw_candidates = 0
    distinct_sum = 0
    subset_key_sum = 0
    hits: dict[int, int] = {e.entity_id: 0 for e in dictionary.entities}

    flt = build_filter(dictionary.entities, gamma, predicate)
    max_len = dictionary.max_entity_length
    for doc in sample:
        for t in set(doc.body.token_ids):
            doc_freq[t] = doc_freq.get(t, 0) + 1
        for _start, _end, items, _sw in iter_filtered_spans(doc, max_len, flt):
            raw_candidates += 1
            distinct_sum += len(items)
            dict_distinct = 0
            span_entities: set[int] = set()
            for t, _w in items:
                ids = word_hits.get(t)
                if ids is not None:
                    dict_distinct += 1
                    span_entities.update(ids)
            subset_key_sum += min((1 << dict_distinct) - 1, cap)
            for eid in span_entities:
                hits[eid] += 1

    per_entity = {eid: count * inv for eid, count in hits.items()}
    est_candidates = int(round(raw_candidates * inv))
    scaled_df = {t: int(round(c * inv)) for t, c in sorted(doc_freq.items())}
    if raw_candidates:
        avg_tokens = Fraction(distinct_sum, raw_candidates)
        avg_subsets = Fraction(subset_key_sum, raw_candidates)
    else:
        avg_tokens = Fraction(0)
        avg_subsets = Fraction(0)

    return CorpusStats(
        total_docs=total_docs,
        total_tokens=total_tokens,
        total_entities=dictionary.n,
        token_doc_freq=scaled_df,
        token_entity_freq=dict(
            sorted(
                (t, df)
                for t, df in _entity_freq(dictionary).items()
            )
        ),
        est_candidates=est_candidates,
        per_entity_mention_freq=per_entity,
        sample_rate=sample_rate,
        avg_candidate_tokens=avg_tokens,
        avg_candidate_subset_keys=avg_subsets,
    )


def _entity_freq(dictionary: Dictionary) -> dict[int, int]:
    freq: dict[int, int] = {}
    for ent in dictionary.entities:
        for t in ent.surface.weight_map:
            freq[t] = freq.get(t, 0) + 1
    return freq


def sort_by_frequency(dictionary: Dictionary, stats: CorpusStats) -> Dictionary:
    """Reorder the dictionary by estimated mention frequency, descending.

    Ties break on ascending entity id; the sort is stable and idempotent.
    Entities absent from the stats count as frequency zero.
    """
    freqs = stats.per_entity_mention_freq
    order = sorted(
        range(dictionary.n),
        key=lambda i: (
            -freqs.get(dictionary.entities[i].entity_id, Fraction(0)),
            dictionary.entities[i].entity_id,
        ),
    )
    return replace(dictionary, ordering=tuple(order))


def _freq_path(path) -> Path:
    return Path(str(path) + ".freq.tsv")


def write_stats(path, stats: CorpusStats, table: TokenTable) -> None:
    from .formats import write_kv

    pairs: list[tuple[str, str]] = [
        ("totalDocs", str(stats.total_docs)),
        ("totalTokens", str(stats.total_tokens)),
        ("totalEntities", str(stats.total_entities)),
        ("sampleRate", format_fraction(stats.sample_rate)),
        ("estCandidates", str(stats.est_candidates)),
        ("avgCandidateTokens", format_fraction(stats.avg_candidate_tokens)),
        ("avgCandidateSubsetKeys", format_fraction(stats.avg_candidate_subset_keys)),
    ]
    for t, c in sorted(stats.token_doc_freq.items(), key=lambda kv: table.text_of(kv[0])):
        pairs.append((f"df:{table.text_of(t)}", str(c)))
    for t, c in sorted(stats.token_entity_freq.items(), key=lambda kv: table.text_of(kv[0])):
        pairs.append((f"ef:{table.text_of(t)}", str(c)))
    write_kv(path, STATS_HEADER, pairs)

    freq_lines = ["# entityId\testimatedMentionFreq"]
    for eid in sorted(stats.per_entity_mention_freq):
        freq_lines.append(
            f"{eid}\t{format_fraction(stats.per_entity_mention_freq[eid])}"
        )
    _freq_path(path).write_text("\n".join(freq_lines) + "\n", encoding="utf-8")


def read_stats(path, table: TokenTable) -> CorpusStats:
    from .formats import read_kv

    scalars: dict[str, str] = {}
    doc_freq: dict[int, int] = {}
    entity_freq: dict[int, int] = {}
    for k, v in read_kv(path, STATS_HEADER):
        if k.startswith("df:"):
            doc_freq[table.intern(k[3:])] = int(v)
        elif k.startswith("ef:"):
            entity_freq[table.intern(k[3:])] = int(v)
        else:
            scalars[k] = v
    try:
        per_entity: dict[int, Fraction] = {}
        freq_file = _freq_path(path)
        if freq_file.exists():
            for line_no, line in enumerate(
                freq_file.read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip() or line.startswith("#"):
                    continue
                eid_text, sep, frac_text = line.partition("\t")
                if not sep:
                    raise DataFormatError(freq_file, line_no, "expected two columns")
                per_entity[int(eid_text)] = parse_fraction(frac_text)
        return CorpusStats(
            total_docs=int(scalars["totalDocs"]),
            total_tokens=int(scalars["totalTokens"]),
            total_entities=int(scalars["totalEntities"]),
            token_doc_freq=doc_freq,
            token_entity_freq=entity_freq,
            est_candidates=int(scalars["estCandidates"]),
            per_entity_mention_freq=per_entity,
            sample_rate=parse_fraction(scalars["sampleRate"]),
            avg_candidate_tokens=parse_fraction(scalars["avgCandidateTokens"]),
            avg_candidate_subset_keys=parse_fraction(
                scalars["avgCandidateSubsetKeys"]
            ),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(path, None, f"bad stats file: {exc}") from exc
