"""Analytic cost model for extraction plans, kept in exact rationals.

An index slice costs one lookup per candidate window per memory-budget
partition; a join slice costs signing every candidate plus shuffling and
re-scoring every signature record.  Per-entity key and signature counts
are precomputed as cumulative sums over the dictionary ordering, so any
contiguous slice prices in O(1) — the split optimizer leans on that.
Constants come from defaults or least-squares calibration against runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .corpus import CorpusStats, Dictionary
from .engine import JobMetrics
from .formats import DataFormatError, format_fraction, parse_fraction, read_kv, write_kv
from .indexing import IndexScheme, TokenOrder, entity_keys, POSTING_ENTRY_BYTES, KEY_BYTES
from .plans import (
    Method,
    MethodAssignment,
    PlanRun,
    SignatureKind,
    SignatureScheme,
    signature_count,
)
from .text import DEFAULT_VARIANT_CAP, Predicate

COSTS_HEADER = "ee-costs v1"


class Objective(str, Enum):
    #: minimize the modeled critical path (map work splits across mappers)
    JOB_COMPLETION = "job_completion"
    #: minimize total modeled work regardless of parallelism
    WORK_DONE = "work_done"


@dataclass(frozen=True)
class CostConstants:
    lookup: Fraction = Fraction(1)
    sign: Fraction = Fraction(1, 5)
    shuffle: Fraction = Fraction(2)
    verify: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        for name in ("lookup", "sign", "shuffle", "verify"):
            value = getattr(self, name)
            object.__setattr__(self, name, Fraction(value))
            if getattr(self, name) < 0:
                raise ValueError(f"cost constant {name} must be non-negative")


def write_costs(path, constants: CostConstants) -> None:
    write_kv(
        path,
        COSTS_HEADER,
        [
            ("cLookup", format_fraction(constants.lookup)),
            ("cSign", format_fraction(constants.sign)),
            ("cShuffle", format_fraction(constants.shuffle)),
            ("cVerify", format_fraction(constants.verify)),
        ],
    )


def read_costs(path) -> CostConstants:
    values = dict(read_kv(path, COSTS_HEADER))
    try:
        return CostConstants(
            lookup=parse_fraction(values["cLookup"]),
            sign=parse_fraction(values["cSign"]),
            shuffle=parse_fraction(values["cShuffle"]),
            verify=parse_fraction(values["cVerify"]),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(path, None, f"bad cost constants: {exc}") from exc


@dataclass(frozen=True)
class CostEstimate:
    total: Fraction
    breakdown: tuple[tuple[str, Fraction], ...]


class CostEnv:
    """Pricing context: dictionary ordering, stats, and cumulative arrays."""

    def __init__(
        self,
        dictionary: Dictionary,
        stats: CorpusStats,
        *,
        constants: CostConstants | None = None,
        objective: Objective = Objective.JOB_COMPLETION,
        gamma: Fraction = Fraction(3, 4),
        predicate: Predicate = Predicate.EXTRA,
        num_mappers: int = 1,
        memory_budget: int = 64 * 1024 * 1024,
        order: TokenOrder | None = None,
        cap: int = DEFAULT_VARIANT_CAP,
    ):
        if num_mappers < 1:
            raise ValueError("mapper count must be at least 1")
        if memory_budget <= 0:
            raise ValueError("memory budget must be positive")
        self.dictionary = dictionary
        self.stats = stats
        self.constants = constants or CostConstants()
        self.objective = objective
        self.gamma = Fraction(gamma)
        self.predicate = predicate
        self.num_mappers = num_mappers
        self.memory_budget = memory_budget
        self.order = order
        self.cap = cap
        self.candidates = Fraction(stats.est_candidates)
        self._ordered = dictionary.ordered_entities()
        self._freq = [
            stats.per_entity_mention_freq.get(e.entity_id, Fraction(0))
            for e in self._ordered
        ]
        self._footprints: dict[IndexScheme, list[int]] = {}
        self._sig_weights: dict[SignatureScheme, list[Fraction]] = {}
        # The planner prices the same slice under the same scheme many
        # times (each index curve repeats across every signature scheme
        # and vice versa), so slice costs are memoized per environment.
        self._index_cost_cache: dict[tuple[IndexScheme, int, int], Fraction] = {}
        self._ssjoin_cost_cache: dict[tuple[SignatureScheme, int, int], Fraction] = {}

    @property
    def n(self) -> int:
        return len(self._ordered)

    def _footprint_cum(self, scheme: IndexScheme) -> list[int]:
        cum = self._footprints.get(scheme)
        if cum is None:
            per_key = POSTING_ENTRY_BYTES + KEY_BYTES
            cum = [0]
            for ent in self._ordered:
                exact, verify = entity_keys(
                    ent.surface, scheme, self.gamma, self.predicate, self.order, self.cap
                )
                cum.append(cum[-1] + (len(exact) + len(verify)) * per_key)
            self._footprints[scheme] = cum
        return cum

    def _sig_weight_cum(self, scheme: SignatureScheme) -> list[Fraction]:
        cum = self._sig_weights.get(scheme)
        if cum is None:
            cum = [Fraction(0)]
            for ent, freq in zip(self._ordered, self._freq):
                count = signature_count(
                    ent.surface, scheme, self.gamma, self.predicate, self.order, self.cap
                )
                cum.append(cum[-1] + count * (1 + freq))
            self._sig_weights[scheme] = cum
        return cum

    def slice_footprint(self, scheme: IndexScheme, lo: int, hi: int) -> int:
        cum = self._footprint_cum(scheme)
        return cum[hi] - cum[lo]

    def candidate_signatures(self, scheme: SignatureScheme) -> Fraction:
        """Modeled signatures emitted per candidate window."""
        if scheme.kind is SignatureKind.LSH:
            return Fraction(scheme.bands)
        if scheme.kind is SignatureKind.JACCARD_VARIANT:
            return Fraction(self.stats.avg_candidate_subset_keys)
        return Fraction(self.stats.avg_candidate_tokens)

    def index_cost(self, scheme: IndexScheme, lo: int, hi: int) -> Fraction:
        if lo == hi:
            return Fraction(0)
        key = (scheme, lo, hi)
        cached = self._index_cost_cache.get(key)
        if cached is not None:
            return cached
        footprint = self.slice_footprint(scheme, lo, hi)
        partitions = max(1, math.ceil(Fraction(footprint, self.memory_budget)))
        per_candidate = self.candidates * self.constants.lookup
        if self.objective is Objective.JOB_COMPLETION:
            per_candidate /= self.num_mappers
        cost = per_candidate * partitions
        self._index_cost_cache[key] = cost
        return cost

    def ssjoin_cost(self, scheme: SignatureScheme, lo: int, hi: int) -> Fraction:
        if lo == hi:
            return Fraction(0)
        key = (scheme, lo, hi)
        cached = self._ssjoin_cost_cache.get(key)
        if cached is not None:
            return cached
        cum = self._sig_weight_cum(scheme)
        sig_records = (cum[hi] - cum[lo]) + self.candidates * self.candidate_signatures(
            scheme
        )
        sign_cost = self.candidates * self.constants.sign
        if self.objective is Objective.JOB_COMPLETION:
            sign_cost /= self.num_mappers
        cost = sign_cost + sig_records * (self.constants.shuffle + self.constants.verify)
        self._ssjoin_cost_cache[key] = cost
        return cost

    def assignment_cost(self, asg: MethodAssignment) -> Fraction:
        if asg.method is Method.INDEX:
            return self.index_cost(asg.index_scheme, asg.lo, asg.hi)
        return self.ssjoin_cost(asg.signature_scheme, asg.lo, asg.hi)

    def plan_cost(self, assignments: Sequence[MethodAssignment]) -> CostEstimate:
        breakdown = tuple(
            (asg.label(), self.assignment_cost(asg)) for asg in assignments
        )
        return CostEstimate(sum((c for _, c in breakdown), Fraction(0)), breakdown)


def split_cost_curve(
    env: CostEnv,
    index_scheme: IndexScheme,
    signature_scheme: SignatureScheme,
    *,
    index_first: bool = True,
) -> list[Fraction]:
    """Plan cost for every split point k; index side gets [0, k) when
    ``index_first`` else [k, n)."""
    n = env.n
    out = []
    for k in range(n + 1):
        if index_first:
            cost = env.index_cost(index_scheme, 0, k) + env.ssjoin_cost(
                signature_scheme, k, n
            )
        else:
            cost = env.ssjoin_cost(signature_scheme, 0, k) + env.index_cost(
                index_scheme, k, n
            )
        out.append(cost)
    return out


@dataclass(frozen=True)
class CalibrationSample:
    lookups: int
    signed: int
    shuffled: int
    verified: int
    clock: int


def sample_from_metrics(metrics: Sequence[JobMetrics]) -> CalibrationSample:
    """Collapse one run's job metrics into model-aligned activity counts."""
    lookups = signed = shuffled = verified = clock = 0
    for m in metrics:
        clock += m.wall_clock
        shuffled += m.shuffled_records
        if m.name.startswith("index"):
            lookups += m.counters.get("lookups", 0)
        else:
            signed += m.counters.get("candidates", 0)
            verified += m.counters.get("pairs", 0)
    return CalibrationSample(lookups, signed, shuffled, verified, clock)


def sample_from_run(run: PlanRun) -> CalibrationSample:
    return sample_from_metrics(run.metrics)


def calibrate(samples: Sequence[CalibrationSample]) -> CostConstants:
    """Least-squares fit of the four constants, clamped to non-negative."""
    import numpy as np

    if len(samples) < 4:
        raise ValueError("calibration needs at least four samples")
    for s in samples:
        if s.lookups == s.signed == s.shuffled == s.verified == 0:
            raise ValueError(
                "degenerate calibration sample: no recorded activity to attribute"
            )
    a = np.array(
        [[s.lookups, s.signed, s.shuffled, s.verified] for s in samples],
        dtype=float,
    )
    b = np.array([float(s.clock) for s in samples])
    if np.linalg.matrix_rank(a) < 4:
        raise ValueError("calibration samples do not span all four constants")
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    fitted = [
        Fraction(float(v)).limit_denominator(1_000_000) if v > 0 else Fraction(0)
        for v in solution
    ]
    return CostConstants(*fitted)
