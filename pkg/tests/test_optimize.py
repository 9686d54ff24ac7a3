"""Tests for the plan optimizer: split search, plan files, explanations."""

import random
from fractions import Fraction

import pytest

from conftest import random_cost_env
from eejoin.costs import Objective, split_cost_curve
from eejoin.formats import DataFormatError
from eejoin.indexing import IndexScheme
from eejoin.optimize import (
    DEFAULT_SIGNATURE_SCHEMES,
    ExecutionPlan,
    explain_plan,
    format_signature_scheme,
    optimize,
    parse_signature_scheme,
    probe_budget,
    read_plan,
    search_split,
    write_plan,
)
from eejoin.plans import Method, MethodAssignment, SignatureKind, SignatureScheme
from eejoin.text import Predicate


def test_probe_budget_growth():
    assert probe_budget(0) == 4
    assert probe_budget(1) == 8
    assert probe_budget(10) == 20
    assert probe_budget(100) == 32
    assert probe_budget(1000) == 44


def test_search_split_finds_the_exhaustive_minimum():
    rng = random.Random(21)
    for trial in range(30):
        env = random_cost_env(rng)
        ischeme = rng.choice(list(IndexScheme))
        sscheme = rng.choice(list(DEFAULT_SIGNATURE_SCHEMES))
        index_first = rng.random() < 0.5
        found = search_split(env, ischeme, sscheme, index_first=index_first)
        curve = split_cost_curve(env, ischeme, sscheme, index_first=index_first)
        assert found.best_cost == min(curve)
        assert curve[found.best_k] == found.best_cost
        assert len(found.probes) <= probe_budget(env.n)
        # both pure plans are probed before any narrowing
        assert found.probes[0].k == 0
        assert found.probes[0].cost == curve[0]
        if env.n > 0:
            assert found.probes[1].k == env.n


def test_search_split_never_beats_nor_loses_to_pure_plans():
    rng = random.Random(22)
    for trial in range(20):
        env = random_cost_env(rng)
        found = search_split(
            env, IndexScheme.PREFIX, SignatureScheme(SignatureKind.PREFIX)
        )
        n = env.n
        assert found.best_cost <= env.index_cost(IndexScheme.PREFIX, 0, n)
        assert found.best_cost <= env.ssjoin_cost(
            SignatureScheme(SignatureKind.PREFIX), 0, n
        )


def test_optimize_reports_the_cheapest_search():
    rng = random.Random(23)
    for trial in range(10):
        env = random_cost_env(rng)
        result = optimize(env)
        assert len(result.searches) == 3 * 4 * 2
        assert result.plan.total_cost == min(s.best_cost for s in result.searches)
        assert result.plan.total_cost == env.plan_cost(result.plan.assignments).total
        (head, tail) = result.plan.assignments
        assert head.lo == 0 and tail.hi == env.n and head.hi == tail.lo
        assert result.plan.dict_size == env.n
        assert result.plan.gamma == env.gamma


def test_optimize_is_deterministic():
    env1 = random_cost_env(random.Random(99))
    env2 = random_cost_env(random.Random(99))
    assert optimize(env1).plan == optimize(env2).plan


def test_optimize_handles_single_and_empty_dictionaries():
    env = random_cost_env(random.Random(24), n_entities=1)
    result = optimize(env)
    assert result.plan.dict_size == 1
    assert result.plan.total_cost <= env.index_cost(IndexScheme.PER_WORD, 0, 1)


def test_optimize_rejects_empty_scheme_lists():
    env = random_cost_env(random.Random(25))
    with pytest.raises(ValueError):
        optimize(env, index_schemes=())
    with pytest.raises(ValueError):
        optimize(env, signature_schemes=())


def test_signature_scheme_text_round_trip():
    for scheme in DEFAULT_SIGNATURE_SCHEMES:
        assert parse_signature_scheme(format_signature_scheme(scheme)) == scheme
    custom = SignatureScheme(SignatureKind.LSH, bands=8, rows=2, seed=7)
    assert format_signature_scheme(custom) == "lsh:8:2:7"
    assert parse_signature_scheme("lsh:8:2:7") == custom
    assert parse_signature_scheme("lsh") == SignatureScheme(SignatureKind.LSH)
    with pytest.raises(ValueError):
        parse_signature_scheme("lsh:8:2")
    with pytest.raises(ValueError):
        parse_signature_scheme("sorted")


def test_plan_file_round_trip(tmp_path):
    env = random_cost_env(random.Random(26), objective=Objective.WORK_DONE)
    plan = optimize(env).plan
    path = tmp_path / "plan.txt"
    write_plan(path, plan)
    assert read_plan(path) == plan


def test_plan_file_round_trip_with_custom_lsh(tmp_path):
    plan = ExecutionPlan(
        assignments=(
            MethodAssignment(Method.INDEX, 0, 3, index_scheme=IndexScheme.PREFIX),
            MethodAssignment(
                Method.SSJOIN,
                3,
                9,
                signature_scheme=SignatureScheme(
                    SignatureKind.LSH, bands=4, rows=8, seed=3
                ),
            ),
        ),
        gamma=Fraction(4, 5),
        predicate=Predicate.MISSING,
        objective=Objective.JOB_COMPLETION,
        dict_size=9,
        num_mappers=3,
        memory_budget=1 << 20,
        ordering="frequency",
        total_cost=Fraction(123, 7),
    )
    path = tmp_path / "plan.txt"
    write_plan(path, plan)
    assert read_plan(path) == plan


def test_read_plan_rejects_malformed_files(tmp_path):
    path = tmp_path / "plan.txt"
    path.write_text("not a plan\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_plan(path)
    env = random_cost_env(random.Random(27), n_entities=4)
    plan = optimize(env).plan
    write_plan(path, plan)
    text = path.read_text()
    path.write_text(text.replace("dictSize\t4", "dictSize\t2"), encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_plan(path)
    path.write_text(text.replace("index", "xyzzy"), encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_plan(path)


def test_explain_plan_mentions_every_assignment():
    env = random_cost_env(random.Random(28))
    result = optimize(env)
    text = explain_plan(result.plan, env, result.searches)
    assert f"plan over {env.n} entities" in text
    for asg in result.plan.assignments:
        if asg.lo != asg.hi:
            assert asg.label() in text
    assert "total modeled cost" in text
    assert f"split searches: {len(result.searches)}" in text
    bare = explain_plan(result.plan)
    assert "modeled cost" not in bare.replace("total modeled cost", "")


def test_explain_plan_marks_unused_sides():
    plan = ExecutionPlan(
        assignments=(
            MethodAssignment(Method.INDEX, 0, 0, index_scheme=IndexScheme.PER_WORD),
            MethodAssignment(
                Method.SSJOIN,
                0,
                5,
                signature_scheme=SignatureScheme(SignatureKind.SINGLE_WORD),
            ),
        ),
        gamma=Fraction(1, 2),
        predicate=Predicate.EXTRA,
        objective=Objective.JOB_COMPLETION,
        dict_size=5,
        num_mappers=1,
        memory_budget=1 << 20,
        ordering="identity",
        total_cost=Fraction(10),
    )
    text = explain_plan(plan)
    assert "unused, cost 0" in text
