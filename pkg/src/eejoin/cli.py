"""Command-line entry points.

Subcommands mirror the pipeline: ``profile`` a corpus into stats,
``optimize`` a plan from stats, ``extract`` mentions with a plan,
``calibrate`` cost constants from instrumented runs, and ``explain`` a
stored plan.  Exit codes: 0 success, 1 usage or runtime failure, 2
malformed input data, 3 extraction differs from the exhaustive scan.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, RunConfig, load_config
from .corpus import (
    load_dictionary,
    load_documents,
    profile_corpus,
    read_stats,
    sort_by_frequency,
    write_stats,
)
from .costs import (
    CostConstants,
    CostEnv,
    calibrate,
    read_costs,
    sample_from_run,
    write_costs,
)
from .engine import METRICS_HEADER, resolve_workers
from .formats import DataFormatError, format_fraction, write_kv
from .indexing import build_token_order, default_token_order
from .optimize import explain_plan, optimize, read_plan, write_plan
from .oracle import brute_force_extract
from .plans import PlanRun, run_assignments, run_index_method, run_ssjoin_method, write_mentions

USAGE_EXIT = 1
DATA_EXIT = 2
VERIFY_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; keep 2 for data
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key=value settings file")
    parser.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        dest="overrides",
        help="override one setting (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eejoin", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="COMMAND", parser_class=_Parser
    )

    p = sub.add_parser("profile",
                       help="scan a corpus sample and write statistics")
    p.add_argument("--dictionary", required=True, metavar="TSV")
    p.add_argument("--documents", required=True, metavar="TSV")
    p.add_argument("--out", required=True, metavar="FILE")
    _add_common(p)
    p.set_defaults(handler=_cmd_profile)

    p = sub.add_parser("optimize",
                       help="choose the cheapest extraction plan from stats")
    p.add_argument("--dictionary", required=True, metavar="TSV")
    p.add_argument("--stats", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--costs", metavar="FILE", help="calibrated cost constants")
    p.add_argument("--explain", action="store_true", help="print the chosen plan")
    _add_common(p)
    p.set_defaults(handler=_cmd_optimize)

    p = sub.add_parser("extract",
                       help="run a plan and write the mention list")
    p.add_argument("--dictionary", required=True, metavar="TSV")
    p.add_argument("--documents", required=True, metavar="TSV")
    p.add_argument("--plan", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--stats", metavar="FILE",
                   help="profile stats (required for frequency-ordered plans)")
    p.add_argument("--metrics", metavar="FILE", help="write run metrics here")
    p.add_argument("--workers", type=int, metavar="N",
                   help="thread workers (default: EE_WORKERS or 1)")
    p.add_argument("--verify-against-oracle", action="store_true",
                   help="re-extract exhaustively and compare")
    _add_common(p)
    p.set_defaults(handler=_cmd_extract)

    p = sub.add_parser("calibrate",
                       help="fit cost constants from instrumented runs")
    p.add_argument("--dictionary", required=True, metavar="TSV")
    p.add_argument("--documents", required=True, metavar="TSV")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--workers", type=int, metavar="N")
    _add_common(p)
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("explain",
                       help="describe a stored plan, with costs when stats are given")
    p.add_argument("--plan", required=True, metavar="FILE")
    p.add_argument("--dictionary", metavar="TSV")
    p.add_argument("--stats", metavar="FILE")
    p.add_argument("--costs", metavar="FILE")
    _add_common(p)
    p.set_defaults(handler=_cmd_explain)

    return parser


def _load_inputs(args, config: RunConfig):
    dictionary = load_dictionary(
        args.dictionary, weighting=config.weighting, idf_scale=config.idf_scale
    )
    documents = load_documents(args.documents, dictionary)
    return dictionary, documents


def _cmd_profile(args, config: RunConfig) -> int:
    dictionary, documents = _load_inputs(args, config)
    stats = profile_corpus(
        dictionary,
        documents,
        config.sample_rate,
        config.gamma,
        config.predicate,
        variant_cap=config.variant_cap,
    )
    write_stats(args.out, stats, dictionary.tokens)
    print(
        f"profiled {stats.total_docs} documents, {stats.total_entities} entities: "
        f"~{stats.est_candidates} candidate windows "
        f"(sample rate {format_fraction(stats.sample_rate)}) -> {args.out}"
    )
    return 0


def _make_env(dictionary, stats, config: RunConfig, constants: CostConstants):
    order = build_token_order(stats, dictionary.tokens)
    return CostEnv(
        dictionary,
        stats,
        constants=constants,
        objective=config.objective,
        gamma=config.gamma,
        predicate=config.predicate,
        num_mappers=config.mappers,
        memory_budget=config.memory_budget,
        order=order,
        cap=config.variant_cap,
    )


def _cmd_optimize(args, config: RunConfig) -> int:
    dictionary = load_dictionary(
        args.dictionary, weighting=config.weighting, idf_scale=config.idf_scale
    )
    stats = read_stats(args.stats, dictionary.tokens)
    if config.ordering == "frequency":
        dictionary = sort_by_frequency(dictionary, stats)
    constants = read_costs(args.costs) if args.costs else CostConstants()
    env = _make_env(dictionary, stats, config, constants)
    result = optimize(
        env,
        index_schemes=config.index_schemes,
        signature_schemes=config.signature_schemes(),
        ordering=config.ordering,
    )
    write_plan(args.out, result.plan)
    print(
        f"plan -> {args.out}: modeled cost {format_fraction(result.plan.total_cost)} "
        f"({len(result.searches)} split searches)"
    )
    if args.explain:
        print(explain_plan(result.plan, env, result.searches))
    return 0


def _write_run_metrics(path, run: PlanRun) -> None:
    pairs = [
        ("jobs", str(len(run.metrics))),
        ("wallClock", str(sum(m.wall_clock for m in run.metrics))),
        ("totalWork", str(sum(m.total_work for m in run.metrics))),
        ("shuffledRecords", str(sum(m.shuffled_records for m in run.metrics))),
        ("sortComparisons", str(sum(m.sort_comparisons for m in run.metrics))),
    ]
    for name in sorted(run.counters):
        pairs.append((f"counter:{name}", str(run.counters[name])))
    write_kv(path, METRICS_HEADER, pairs)


def _cmd_extract(args, config: RunConfig) -> int:
    dictionary, documents = _load_inputs(args, config)
    plan = read_plan(args.plan)
    if plan.dict_size != dictionary.n:
        raise DataFormatError(
            args.plan,
            None,
            f"plan was built for {plan.dict_size} entities, dictionary has {dictionary.n}",
        )
    stats = None
    if args.stats:
        stats = read_stats(args.stats, dictionary.tokens)
    if plan.ordering == "frequency":
        if stats is None:
            print(
                "eejoin extract: error: the plan orders entities by frequency; "
                "pass --stats from the profile step",
                file=sys.stderr,
            )
            return USAGE_EXIT
        dictionary = sort_by_frequency(dictionary, stats)
    order = (
        build_token_order(stats, dictionary.tokens)
        if stats is not None
        else default_token_order(dictionary.tokens)
    )
    workers = resolve_workers(args.workers)
    # logical parameters (threshold, predicate, slices, budget) come from the
    # plan; parallelism is a runtime choice and may differ from what the plan
    # was optimized for without affecting output
    run = run_assignments(
        dictionary,
        documents,
        plan.assignments,
        plan.gamma,
        plan.predicate,
        plan.memory_budget,
        order=order,
        cap=config.variant_cap,
        num_mappers=config.mappers,
        num_reducers=config.reducers,
        workers=workers,
        max_group_size=config.max_group_size,
    )
    write_mentions(args.out, run.mentions)
    if args.metrics:
        _write_run_metrics(args.metrics, run)
    print(f"{len(run.mentions)} mentions -> {args.out}")
    if args.verify_against_oracle:
        reference = brute_force_extract(
            dictionary, documents, plan.gamma, plan.predicate
        )
        if run.mentions != reference.mentions:
            got = set(run.mentions)
            want = set(reference.mentions)
            print(
                f"verification failed: {len(want - got)} missing, "
                f"{len(got - want)} spurious mentions "
                f"(exhaustive scan found {len(want)})",
                file=sys.stderr,
            )
            return VERIFY_EXIT
        print(
            f"verified against exhaustive scan: {len(reference.mentions)} mentions, "
            f"{reference.pair_comparisons} pair comparisons"
        )
    return 0


def _cmd_calibrate(args, config: RunConfig) -> int:
    dictionary, documents = _load_inputs(args, config)
    workers = resolve_workers(args.workers)
    order = default_token_order(dictionary.tokens)
    entities = dictionary.ordered_entities()
    samples = []
    for scheme in config.index_schemes:
        run = run_index_method(
            dictionary,
            documents,
            entities,
            scheme,
            config.gamma,
            config.predicate,
            config.memory_budget,
            order=order,
            cap=config.variant_cap,
            num_mappers=config.mappers,
            workers=workers,
        )
        samples.append(sample_from_run(run))
    for scheme in config.signature_schemes():
        run = run_ssjoin_method(
            dictionary,
            documents,
            entities,
            scheme,
            config.gamma,
            config.predicate,
            order=order,
            cap=config.variant_cap,
            num_mappers=config.mappers,
            num_reducers=config.reducers,
            workers=workers,
            max_group_size=config.max_group_size,
        )
        samples.append(sample_from_run(run))
    constants = calibrate(samples)
    write_costs(args.out, constants)
    print(
        f"calibrated over {len(samples)} runs -> {args.out}: "
        f"lookup {format_fraction(constants.lookup)}, "
        f"sign {format_fraction(constants.sign)}, "
        f"shuffle {format_fraction(constants.shuffle)}, "
        f"verify {format_fraction(constants.verify)}"
    )
    return 0


def _cmd_explain(args, config: RunConfig) -> int:
    plan = read_plan(args.plan)
    env = None
    if args.dictionary and args.stats:
        dictionary = load_dictionary(
            args.dictionary, weighting=config.weighting, idf_scale=config.idf_scale
        )
        stats = read_stats(args.stats, dictionary.tokens)
        if plan.ordering == "frequency":
            dictionary = sort_by_frequency(dictionary, stats)
        constants = read_costs(args.costs) if args.costs else CostConstants()
        env = CostEnv(
            dictionary,
            stats,
            constants=constants,
            objective=plan.objective,
            gamma=plan.gamma,
            predicate=plan.predicate,
            num_mappers=plan.num_mappers,
            memory_budget=plan.memory_budget,
            order=build_token_order(stats, dictionary.tokens),
            cap=config.variant_cap,
        )
    elif args.dictionary or args.stats:
        print(
            "eejoin explain: error: --dictionary and --stats go together",
            file=sys.stderr,
        )
        return USAGE_EXIT
    print(explain_plan(plan, env))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
        return args.handler(args, config)
    except ConfigError as exc:
        print(f"eejoin: config error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except DataFormatError as exc:
        print(f"eejoin: {exc}", file=sys.stderr)
        return DATA_EXIT
    except FileNotFoundError as exc:
        print(f"eejoin: file not found: {exc.filename}", file=sys.stderr)
        return DATA_EXIT
    except (ValueError, RuntimeError) as exc:
        print(f"eejoin: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
