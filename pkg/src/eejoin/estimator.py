"""A scikit-learn style wrapper around the profile/optimize/extract pipeline.

``fit`` profiles the training documents against the configured entity
dictionary and picks an execution plan; ``transform`` runs that plan over
documents and returns per-document mention lists.  The dictionary rides in
the constructor the way ``vocabulary`` does for text vectorizers.
"""

from __future__ import annotations

from fractions import Fraction
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import dictionary_from_surfaces, make_document, profile_corpus, sort_by_frequency
from .costs import CostEnv, Objective
from .engine import resolve_workers
from .indexing import build_token_order
from .optimize import optimize
from .plans import Mention, run_assignments
from .text import Predicate, WeightingScheme, split_tokens


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


class MentionExtractor(TransformerMixin, BaseEstimator):
    """Find dictionary entities mentioned approximately in documents.

    Parameters mirror the CLI settings; ``entities`` is a sequence of
    ``(entity_id, surface text)`` pairs.  After ``fit`` the instance
    exposes ``dictionary_``, ``stats_`` and ``plan_``.
    """

    def __init__(
        self,
        entities=None,
        gamma=0.75,
        predicate="extra",
        weighting="unit",
        idf_scale=10,
        ordering="frequency",
        mappers=4,
        reducers=4,
        memory_budget=64 * 1024 * 1024,
        sample_rate=1,
        objective="job_completion",
        variant_cap=4096,
        workers=None,
    ):
        self.entities = entities
        self.gamma = gamma
        self.predicate = predicate
        self.weighting = weighting
        self.idf_scale = idf_scale
        self.ordering = ordering
        self.mappers = mappers
        self.reducers = reducers
        self.memory_budget = memory_budget
        self.sample_rate = sample_rate
        self.objective = objective
        self.variant_cap = variant_cap
        self.workers = workers

    def _check_texts(self, X, what: str) -> list[str]:
        if isinstance(X, str):
            raise ValueError(f"{what} must be an iterable of texts, not a single string")
        texts = list(X)
        for i, text in enumerate(texts):
            if not isinstance(text, str):
                raise ValueError(f"{what}[{i}] is {type(text).__name__}, expected str")
        return texts

    def fit(self, X, y=None):
        if not self.entities:
            raise ValueError("entities must be a non-empty list of (id, surface) pairs")
        texts = self._check_texts(X, "X")
        gamma = _as_fraction(self.gamma)
        predicate = Predicate(self.predicate)
        dictionary = dictionary_from_surfaces(
            ((int(eid), split_tokens(surface)) for eid, surface in self.entities),
            weighting=WeightingScheme(self.weighting),
            idf_scale=self.idf_scale,
        )
        documents = [make_document(i, text, dictionary) for i, text in enumerate(texts)]
        stats = profile_corpus(
            dictionary,
            documents,
            _as_fraction(self.sample_rate),
            gamma,
            predicate,
            variant_cap=self.variant_cap,
        )
        if self.ordering == "frequency":
            dictionary = sort_by_frequency(dictionary, stats)
        elif self.ordering != "identity":
            raise ValueError(f"unknown ordering {self.ordering!r}")
        order = build_token_order(stats, dictionary.tokens)
        env = CostEnv(
            dictionary,
            stats,
            objective=Objective(self.objective),
            gamma=gamma,
            predicate=predicate,
            num_mappers=self.mappers,
            memory_budget=self.memory_budget,
            order=order,
            cap=self.variant_cap,
        )
        result = optimize(env, ordering=self.ordering)
        self.dictionary_ = dictionary
        self.stats_ = stats
        self.token_order_ = order
        self.plan_ = result.plan
        self.searches_ = result.searches
        return self

    def transform(self, X) -> list[list[Mention]]:
        check_is_fitted(self, "plan_")
        texts = self._check_texts(X, "X")
        documents = [
            make_document(i, text, self.dictionary_) for i, text in enumerate(texts)
        ]
        run = run_assignments(
            self.dictionary_,
            documents,
            self.plan_.assignments,
            self.plan_.gamma,
            self.plan_.predicate,
            self.plan_.memory_budget,
            order=self.token_order_,
            cap=self.variant_cap,
            num_mappers=self.plan_.num_mappers,
            num_reducers=self.reducers,
            workers=resolve_workers(self.workers),
        )
        grouped: list[list[Mention]] = [[] for _ in texts]
        for mention in run.mentions:
            grouped[mention.doc_id].append(mention)
        return grouped

    def _more_tags(self):  # pragma: no cover - consulted by sklearn tooling only
        return {"X_types": ["string"], "requires_fit": True}
