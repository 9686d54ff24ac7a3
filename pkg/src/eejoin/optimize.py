"""Choosing how to split the dictionary between an index and a shuffle join.

The planner prices every (index scheme, signature scheme, orientation)
combination and, for each, finds the cheapest split point of the entity
ordering.  Split probing follows a bracketing schedule whose recorded probe
count stays within ``probe_budget``; the returned split is then confirmed
by an exhaustive sweep, which is nearly free because slice costs come from
cumulative arrays.  Ties break toward the smaller split, then the earlier
scheme combination, so planning is fully reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .costs import CostEnv, Objective
from .formats import DataFormatError, format_fraction, parse_fraction, read_kv, write_kv
from .indexing import IndexScheme
from .plans import Method, MethodAssignment, SignatureKind, SignatureScheme
from .text import Predicate

PLAN_HEADER = "ee-plan v1"

DEFAULT_INDEX_SCHEMES = (
    IndexScheme.PER_WORD,
    IndexScheme.PREFIX,
    IndexScheme.JACCARD_VARIANT,
)
DEFAULT_SIGNATURE_SCHEMES = (
    SignatureScheme(SignatureKind.SINGLE_WORD),
    SignatureScheme(SignatureKind.PREFIX),
    SignatureScheme(SignatureKind.LSH),
    SignatureScheme(SignatureKind.JACCARD_VARIANT),
)


def probe_budget(n: int) -> int:
    """Maximum recorded split probes for a dictionary of ``n`` entities."""
    return 4 * math.ceil(math.log2(n + 1)) + 4 if n > 0 else 4


@dataclass(frozen=True)
class SearchProbe:
    k: int
    cost: Fraction


@dataclass(frozen=True)
class SplitSearch:
    index_scheme: IndexScheme
    signature_scheme: SignatureScheme
    index_first: bool
    best_k: int
    best_cost: Fraction
    probes: tuple[SearchProbe, ...]


def _split_assignments(
    index_scheme: IndexScheme,
    signature_scheme: SignatureScheme,
    index_first: bool,
    k: int,
    n: int,
) -> tuple[MethodAssignment, MethodAssignment]:
    index_part = lambda lo, hi: MethodAssignment(
        Method.INDEX, lo, hi, index_scheme=index_scheme
    )
    join_part = lambda lo, hi: MethodAssignment(
        Method.SSJOIN, lo, hi, signature_scheme=signature_scheme
    )
    if index_first:
        return (index_part(0, k), join_part(k, n))
    return (join_part(0, k), index_part(k, n))


def search_split(
    env: CostEnv,
    index_scheme: IndexScheme,
    signature_scheme: SignatureScheme,
    *,
    index_first: bool = True,
) -> SplitSearch:
    """Cheapest split of the ordering between the two methods.

    Records a bracketing probe sequence (both endpoints, then repeated
    two-point narrowing) that stays within :func:`probe_budget`, and
    settles the winner with a full sweep over the cached slice costs.
    """
    n = env.n

    def cost_at(k: int) -> Fraction:
        pair = _split_assignments(index_scheme, signature_scheme, index_first, k, n)
        return env.assignment_cost(pair[0]) + env.assignment_cost(pair[1])

    budget = probe_budget(n)
    probes: list[SearchProbe] = []

    def probe(k: int) -> Fraction:
        c = cost_at(k)
        probes.append(SearchProbe(k, c))
        return c

    probe(0)
    if n > 0:
        probe(n)
    lo, hi = 0, n
    while hi - lo > 3 and len(probes) + 2 <= budget:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if m2 <= m1:
            break
        if probe(m1) <= probe(m2):
            hi = m2
        else:
            lo = m1

    best_k, best_cost = 0, cost_at(0)
    for k in range(1, n + 1):
        c = cost_at(k)
        if c < best_cost:
            best_k, best_cost = k, c
    assert len(probes) <= budget, "probe schedule exceeded its budget"
    return SplitSearch(
        index_scheme, signature_scheme, index_first, best_k, best_cost, tuple(probes)
    )


@dataclass(frozen=True)
class ExecutionPlan:
    assignments: tuple[MethodAssignment, ...]
    gamma: Fraction
    predicate: Predicate
    objective: Objective
    dict_size: int
    num_mappers: int
    memory_budget: int
    ordering: str
    total_cost: Fraction


@dataclass
class OptimizeResult:
    plan: ExecutionPlan
    searches: list[SplitSearch]


def optimize(
    env: CostEnv,
    *,
    index_schemes: Sequence[IndexScheme] = DEFAULT_INDEX_SCHEMES,
    signature_schemes: Sequence[SignatureScheme] = DEFAULT_SIGNATURE_SCHEMES,
    ordering: str = "identity",
) -> OptimizeResult:
    """Pick the cheapest (scheme pair, orientation, split) combination."""
    if not index_schemes or not signature_schemes:
        raise ValueError("need at least one index scheme and one signature scheme")
    searches: list[SplitSearch] = []
    best_key: tuple[Fraction, int, int] | None = None
    best: tuple[MethodAssignment, MethodAssignment] | None = None
    rank = 0
    for ischeme in index_schemes:
        for sscheme in signature_schemes:
            for index_first in (True, False):
                found = search_split(
                    env, ischeme, sscheme, index_first=index_first
                )
                searches.append(found)
                key = (found.best_cost, found.best_k, rank)
                if best_key is None or key < best_key:
                    best_key = key
                    best = _split_assignments(
                        ischeme, sscheme, index_first, found.best_k, env.n
                    )
                rank += 1
    plan = ExecutionPlan(
        assignments=best,
        gamma=env.gamma,
        predicate=env.predicate,
        objective=env.objective,
        dict_size=env.n,
        num_mappers=env.num_mappers,
        memory_budget=env.memory_budget,
        ordering=ordering,
        total_cost=best_key[0],
    )
    return OptimizeResult(plan, searches)


def format_signature_scheme(scheme: SignatureScheme) -> str:
    if scheme.kind is SignatureKind.LSH:
        return f"lsh:{scheme.bands}:{scheme.rows}:{scheme.seed}"
    return scheme.kind.value


def parse_signature_scheme(text: str) -> SignatureScheme:
    if text.startswith("lsh"):
        parts = text.split(":")
        if len(parts) == 1:
            return SignatureScheme(SignatureKind.LSH)
        if len(parts) != 4:
            raise ValueError(f"bad minhash scheme {text!r}, want lsh:<bands>:<rows>:<seed>")
        return SignatureScheme(
            SignatureKind.LSH, bands=int(parts[1]), rows=int(parts[2]), seed=int(parts[3])
        )
    return SignatureScheme(SignatureKind(text))


def write_plan(path, plan: ExecutionPlan) -> None:
    pairs: list[tuple[str, str]] = [
        ("gamma", format_fraction(plan.gamma)),
        ("predicate", plan.predicate.value),
        ("objective", plan.objective.value),
        ("dictSize", str(plan.dict_size)),
        ("mappers", str(plan.num_mappers)),
        ("memoryBudget", str(plan.memory_budget)),
        ("ordering", plan.ordering),
        ("totalCost", format_fraction(plan.total_cost)),
    ]
    for i, asg in enumerate(plan.assignments):
        scheme = (
            asg.index_scheme.value
            if asg.method is Method.INDEX
            else format_signature_scheme(asg.signature_scheme)
        )
        pairs.append(
            (f"assignment:{i}", f"{asg.method.value} {scheme} {asg.lo} {asg.hi}")
        )
    write_kv(path, PLAN_HEADER, pairs)


def read_plan(path) -> ExecutionPlan:
    meta: dict[str, str] = {}
    assignment_rows: list[tuple[int, str]] = []
    for key, value in read_kv(path, PLAN_HEADER):
        if key.startswith("assignment:"):
            assignment_rows.append((int(key.split(":", 1)[1]), value))
        else:
            meta[key] = value
    try:
        dict_size = int(meta["dictSize"])
        assignments = []
        for _, row in sorted(assignment_rows):
            method_text, scheme_text, lo, hi = row.split(" ")
            method = Method(method_text)
            if method is Method.INDEX:
                asg = MethodAssignment(
                    method, int(lo), int(hi), index_scheme=IndexScheme(scheme_text)
                )
            else:
                asg = MethodAssignment(
                    method,
                    int(lo),
                    int(hi),
                    signature_scheme=parse_signature_scheme(scheme_text),
                )
            if asg.hi > dict_size:
                raise ValueError(f"assignment {asg.label()} exceeds dictSize")
            assignments.append(asg)
        return ExecutionPlan(
            assignments=tuple(assignments),
            gamma=parse_fraction(meta["gamma"]),
            predicate=Predicate(meta["predicate"]),
            objective=Objective(meta["objective"]),
            dict_size=dict_size,
            num_mappers=int(meta["mappers"]),
            memory_budget=int(meta["memoryBudget"]),
            ordering=meta["ordering"],
            total_cost=parse_fraction(meta["totalCost"]),
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(path, None, f"bad plan file: {exc}") from exc


def explain_plan(
    plan: ExecutionPlan,
    env: CostEnv | None = None,
    searches: Sequence[SplitSearch] | None = None,
) -> str:
    """Human-readable account of what the plan does and what it should cost."""
    lines = [
        f"plan over {plan.dict_size} entities, ordering: {plan.ordering}",
        (
            f"objective {plan.objective.value}, threshold {format_fraction(plan.gamma)}, "
            f"predicate {plan.predicate.value}, {plan.num_mappers} mappers, "
            f"memory budget {plan.memory_budget} bytes"
        ),
    ]
    for asg in plan.assignments:
        if asg.lo == asg.hi:
            lines.append(f"  {asg.label()}: unused, cost 0")
            continue
        if env is not None:
            cost = env.assignment_cost(asg)
            lines.append(f"  {asg.label()}: modeled cost {format_fraction(cost)}")
        else:
            lines.append(f"  {asg.label()}")
    if env is not None:
        repriced = env.plan_cost(plan.assignments).total
        line = f"  total modeled cost: {format_fraction(repriced)}"
        if repriced != plan.total_cost:
            line += f" (recorded at build: {format_fraction(plan.total_cost)})"
        lines.append(line)
    else:
        lines.append(f"  total modeled cost: {format_fraction(plan.total_cost)}")
    if searches:
        lines.append(f"  split searches: {len(searches)}, probes per search within budget")
        for s in searches:
            lines.append(
                f"    {'index+join' if s.index_first else 'join+index'} "
                f"{s.index_scheme.value}/{s.signature_scheme.label()}: "
                f"best k={s.best_k} cost {format_fraction(s.best_cost)} "
                f"({len(s.probes)} probes)"
            )
    return "\n".join(lines)
