"""Shared corpus builders.

Most tests run against randomly generated corpora with mentions planted
under drop/insert noise, so similarity scores land on both sides of the
threshold instead of only at exact matches.
"""

from __future__ import annotations

import random
from fractions import Fraction

from eejoin.corpus import (
    CorpusStats,
    Dictionary,
    Document,
    WeightingScheme,
    dictionary_from_surfaces,
    make_document,
    sort_by_frequency,
)
from eejoin.costs import CostConstants, CostEnv, Objective
from eejoin.text import Predicate


def build_corpus(
    seed: int,
    *,
    n_entities: int = 500,
    n_docs: int = 200,
    doc_tokens: int = 100,
    plant: float = 0.12,
    vocab_size: int = 350,
    junk_size: int = 1000,
    sizes: tuple[int, ...] = (1, 2, 2, 3, 3, 4),
    weighting: WeightingScheme = WeightingScheme.UNIT,
    idf_scale: int = 10,
) -> tuple[Dictionary, list[Document]]:
    """Corpus with ``plant`` probability of dropping an entity surface into
    the word stream, 40% of those with a token dropped and 20% with a junk
    token appended."""
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(vocab_size)]
    junk = [f"j{i}" for i in range(junk_size)]
    pairs: list[tuple[int, list[str]]] = []
    seen: set[tuple[str, ...]] = set()
    while len(pairs) < n_entities:
        toks = tuple(rng.sample(vocab, rng.choice(sizes)))
        if toks not in seen:
            seen.add(toks)
            pairs.append((len(pairs), list(toks)))
    dictionary = dictionary_from_surfaces(
        pairs, weighting=weighting, idf_scale=idf_scale
    )
    docs = []
    for d in range(n_docs):
        words: list[str] = []
        while len(words) < doc_tokens:
            if rng.random() < plant:
                surface = list(rng.choice(pairs)[1])
                roll = rng.random()
                if roll < 0.4 and len(surface) > 1:
                    surface = [t for t in surface if rng.random() > 0.3]
                elif roll < 0.6:
                    surface.append(rng.choice(junk))
                words.extend(surface)
            else:
                words.append(rng.choice(junk))
        docs.append(make_document(d, " ".join(words[:doc_tokens]), dictionary))
    return dictionary, docs


def small_corpus(
    rng: random.Random, weighting: WeightingScheme = WeightingScheme.UNIT
) -> tuple[Dictionary, list[Document]]:
    """A few dozen entities over a deliberately tiny vocabulary, so token
    collisions (and therefore near-matches) are common."""
    vocab = [f"t{i}" for i in range(rng.randint(6, 30))]
    junk = [f"x{i}" for i in range(rng.randint(2, 20))]
    n_entities = rng.randint(3, 40)
    pairs: list[tuple[int, list[str]]] = []
    seen: set[tuple[str, ...]] = set()
    while len(pairs) < n_entities:
        k = rng.randint(1, min(5, len(vocab)))
        toks = tuple(rng.sample(vocab, k))
        if toks in seen:
            continue
        seen.add(toks)
        pairs.append((len(pairs), list(toks)))
    dictionary = dictionary_from_surfaces(
        pairs, weighting=weighting, idf_scale=rng.choice([5, 10])
    )
    docs = []
    for i in range(rng.randint(1, 8)):
        words = [rng.choice(vocab + junk) for _ in range(rng.randint(0, 60))]
        docs.append(make_document(i, " ".join(words), dictionary))
    return dictionary, docs


def random_cost_env(
    rng: random.Random, n_entities: int | None = None, **overrides
) -> CostEnv:
    """A pricing context over synthetic profiling stats.

    Entities carry a private token each, so the dictionary keeps exactly the
    requested count, and the ordering is frequency-descending as the planner
    expects.  ``overrides`` pin any :class:`CostEnv` keyword.
    """
    n = n_entities if n_entities is not None else rng.randint(2, 25)
    pairs = []
    for i in range(n):
        extra = rng.randint(0, 3)
        toks = [f"u{i}"] + [f"w{rng.randrange(3 * n)}" for _ in range(extra)]
        pairs.append((i + 1, toks))
    dictionary = dictionary_from_surfaces(pairs)
    freqs = {
        e.entity_id: Fraction(rng.randint(0, 60), rng.choice([1, 2, 4]))
        for e in dictionary.entities
    }
    stats = CorpusStats(
        total_docs=rng.randint(1, 50),
        total_tokens=rng.randint(100, 5000),
        total_entities=dictionary.n,
        token_doc_freq={t: rng.randint(0, 40) for t in range(len(dictionary.tokens))},
        token_entity_freq={},
        est_candidates=rng.randint(0, 4000),
        per_entity_mention_freq=freqs,
        sample_rate=Fraction(1),
        avg_candidate_tokens=Fraction(rng.randint(1, 8), rng.choice([1, 2])),
        avg_candidate_subset_keys=Fraction(rng.randint(1, 20), rng.choice([1, 2])),
    )
    dictionary = sort_by_frequency(dictionary, stats)
    kwargs = dict(
        constants=CostConstants(
            Fraction(rng.randint(0, 8), 2),
            Fraction(rng.randint(0, 8), 4),
            Fraction(rng.randint(0, 12), 2),
            Fraction(rng.randint(0, 8), 4),
        ),
        objective=rng.choice(list(Objective)),
        gamma=rng.choice(
            [Fraction(1, 2), Fraction(3, 5), Fraction(3, 4), Fraction(9, 10)]
        ),
        predicate=rng.choice([Predicate.EXTRA, Predicate.MISSING]),
        num_mappers=rng.choice([1, 2, 4, 10]),
        memory_budget=rng.choice([1 << 8, 1 << 10, 1 << 14, 1 << 22]),
    )
    kwargs.update(overrides)
    return CostEnv(dictionary, stats, **kwargs)
