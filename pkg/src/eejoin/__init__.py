"""Approximate dictionary-based entity mention extraction.

Weighted set-containment matching of an entity dictionary against document
substrings, with cost-based planning that splits the dictionary between
replicated inverted indexes and signature shuffle joins.
"""

from .candidates import MentionFilter, Span, build_filter, iter_filtered_spans
from .corpus import (
    CorpusStats,
    Dictionary,
    Document,
    Entity,
    dictionary_from_surfaces,
    load_dictionary,
    load_documents,
    make_document,
    profile_corpus,
    read_stats,
    sort_by_frequency,
    write_stats,
)
from .costs import (
    CalibrationSample,
    CostConstants,
    CostEnv,
    Objective,
    calibrate,
    read_costs,
    write_costs,
)
from .engine import JobMetrics, JobSpec, fnv1a64, measure_skew, run_job
from .estimator import MentionExtractor
from .formats import DataFormatError
from .indexing import (
    EntityIndex,
    IndexScheme,
    TokenOrder,
    build_index,
    build_token_order,
    estimate_footprint,
    lookup,
    read_index,
    write_index,
)
from .optimize import (
    ExecutionPlan,
    OptimizeResult,
    explain_plan,
    optimize,
    probe_budget,
    read_plan,
    search_split,
    write_plan,
)
from .oracle import OracleResult, brute_force_extract
from .plans import (
    Mention,
    Method,
    MethodAssignment,
    PlanRun,
    SignatureKind,
    SignatureScheme,
    read_mentions,
    run_assignments,
    run_index_method,
    run_ssjoin_method,
    write_mentions,
)
from .text import (
    Predicate,
    TokenTable,
    WeightedTokenSeq,
    WeightingScheme,
    jaccard_containment_extra,
    jaccard_containment_missing,
    jaccard_similarity,
    jaccard_variants,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
