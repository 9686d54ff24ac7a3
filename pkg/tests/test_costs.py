"""Tests for the cost model: per-method pricing, plan laws, calibration."""

import math
import random
from dataclasses import replace
from fractions import Fraction

import pytest

from conftest import random_cost_env
from eejoin.corpus import dictionary_from_surfaces
from eejoin.costs import (
    CalibrationSample,
    CostConstants,
    CostEnv,
    Objective,
    calibrate,
    read_costs,
    sample_from_metrics,
    split_cost_curve,
    write_costs,
)
from eejoin.engine import JobMetrics
from eejoin.formats import DataFormatError
from eejoin.indexing import KEY_BYTES, POSTING_ENTRY_BYTES, IndexScheme
from eejoin.plans import Method, MethodAssignment, SignatureKind, SignatureScheme

ALL_SIGS = [
    SignatureScheme(SignatureKind.SINGLE_WORD),
    SignatureScheme(SignatureKind.PREFIX),
    SignatureScheme(SignatureKind.JACCARD_VARIANT),
    SignatureScheme(SignatureKind.LSH),
]


def _freq_scaled(env: CostEnv, factor: int) -> CostEnv:
    stats = replace(
        env.stats,
        per_entity_mention_freq={
            k: v * factor for k, v in env.stats.per_entity_mention_freq.items()
        },
    )
    return CostEnv(
        env.dictionary,
        stats,
        constants=env.constants,
        objective=env.objective,
        gamma=env.gamma,
        predicate=env.predicate,
        num_mappers=env.num_mappers,
        memory_budget=env.memory_budget,
    )


# ------------------------------------------------------------ constants IO


def test_cost_constants_validate_and_coerce():
    c = CostConstants(lookup="3/2", sign=1, shuffle=0, verify=Fraction(1, 4))
    assert c.lookup == Fraction(3, 2)
    assert isinstance(c.sign, Fraction)
    with pytest.raises(ValueError):
        CostConstants(lookup=-1)


def test_costs_file_round_trip(tmp_path):
    c = CostConstants(Fraction(7, 3), Fraction(1, 5), Fraction(2), Fraction(0))
    path = tmp_path / "costs.txt"
    write_costs(path, c)
    assert read_costs(path) == c
    path.write_text("ee-costs v1\ncLookup\t1\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_costs(path)


# ------------------------------------------------------ worked-out pricing


def test_index_cost_single_pass_divides_by_mappers():
    rng = random.Random(0)
    env = random_cost_env(
        rng,
        n_entities=4,
        constants=CostConstants(lookup=1, sign=1, shuffle=1, verify=1),
        objective=Objective.JOB_COMPLETION,
        num_mappers=10,
        memory_budget=1 << 30,
    )
    env.candidates = Fraction(10_000)
    assert env.index_cost(IndexScheme.PER_WORD, 0, env.n) == Fraction(1000)


def test_index_cost_charges_one_scan_per_partition_pass():
    rng = random.Random(1)
    base = random_cost_env(rng, n_entities=10)
    d = dictionary_from_surfaces([(i, [f"u{i}"]) for i in range(1, 11)])
    wide = CostEnv(d, base.stats, memory_budget=1 << 30)
    footprint = wide.slice_footprint(IndexScheme.PER_WORD, 0, 10)
    assert footprint == 10 * 48
    single = wide.index_cost(IndexScheme.PER_WORD, 0, 10)
    # budget at 2/5 of the footprint: 2.5 passes round up to 3 full scans
    tight = CostEnv(d, base.stats, memory_budget=footprint * 2 // 5)
    assert tight.index_cost(IndexScheme.PER_WORD, 0, 10) == 3 * single
    for budget in (1, 47, 48, 479, 480, 481, footprint * 7):
        env = CostEnv(d, base.stats, memory_budget=budget)
        passes = math.ceil(Fraction(footprint, budget))
        assert env.index_cost(IndexScheme.PER_WORD, 0, 10) == passes * single


def test_ssjoin_cost_matches_hand_computation():
    d = dictionary_from_surfaces([(i, [f"u{i}"]) for i in range(1, 5)])
    rng = random.Random(2)
    env = random_cost_env(
        rng,
        n_entities=4,
        constants=CostConstants(lookup=1, sign=1, shuffle=2, verify=1),
        objective=Objective.JOB_COMPLETION,
        num_mappers=10,
    )
    # pin the stats: 10000 candidates, 24 planted mentions per entity,
    # 1/25 signatures per candidate -> |Sig| = 4*(1+24) + 10000/25 = 500
    env.candidates = Fraction(10_000)
    env.stats = replace(
        env.stats,
        per_entity_mention_freq={e.entity_id: Fraction(24) for e in d.entities},
        avg_candidate_tokens=Fraction(1, 25),
    )
    env._sig_weights.clear()
    env._ssjoin_cost_cache.clear()
    env._ordered = d.ordered_entities()
    env._freq = [Fraction(24)] * 4
    cost = env.ssjoin_cost(SignatureScheme(SignatureKind.SINGLE_WORD), 0, 4)
    assert cost == Fraction(10_000, 10) * 1 + 500 * (2 + 1)


def test_per_key_footprint_is_48_bytes():
    assert POSTING_ENTRY_BYTES + KEY_BYTES == 48
    rng = random.Random(3)
    env = random_cost_env(rng, n_entities=6)
    one_token = dictionary_from_surfaces([(1, ["only"])])
    solo = CostEnv(one_token, env.stats, gamma=env.gamma, predicate=env.predicate)
    assert solo.slice_footprint(IndexScheme.PER_WORD, 0, 1) == 48


# ------------------------------------------------------------- model laws


def test_empty_slice_costs_zero():
    rng = random.Random(4)
    for trial in range(20):
        env = random_cost_env(rng)
        k = rng.randint(0, env.n)
        for scheme in IndexScheme:
            assert env.index_cost(scheme, k, k) == 0
        for sig in ALL_SIGS:
            assert env.ssjoin_cost(sig, k, k) == 0


def test_plan_cost_is_additive_and_zero_at_the_ends():
    rng = random.Random(5)
    for trial in range(40):
        env = random_cost_env(rng)
        scheme = rng.choice(list(IndexScheme))
        sig = rng.choice(ALL_SIGS)
        k = rng.randint(0, env.n)
        head = MethodAssignment(Method.INDEX, 0, k, index_scheme=scheme)
        tail = MethodAssignment(Method.SSJOIN, k, env.n, signature_scheme=sig)
        est = env.plan_cost([head, tail])
        assert est.total == env.index_cost(scheme, 0, k) + env.ssjoin_cost(
            sig, k, env.n
        )
        assert est.total == sum(c for _, c in est.breakdown)
        if k == 0:
            assert env.index_cost(scheme, 0, k) == 0
            assert est.total == env.ssjoin_cost(sig, 0, env.n)
        if k == env.n:
            assert est.total == env.index_cost(scheme, 0, env.n)


def test_cost_curves_are_monotone_with_frequency_sorted_entities():
    rng = random.Random(6)
    for trial in range(25):
        env = random_cost_env(rng)
        n = env.n
        for scheme in IndexScheme:
            tail = [env.index_cost(scheme, k, n) for k in range(n + 1)]
            assert all(a >= b for a, b in zip(tail, tail[1:]))
        for sig in ALL_SIGS:
            head = [env.ssjoin_cost(sig, 0, k) for k in range(n + 1)]
            assert all(a <= b for a, b in zip(head, head[1:]))


def test_ssjoin_cost_is_affine_in_mention_frequencies():
    rng = random.Random(7)
    for trial in range(25):
        env1 = random_cost_env(rng)
        env0 = _freq_scaled(env1, 0)
        env2 = _freq_scaled(env1, 2)
        lo = rng.randint(0, env1.n)
        hi = rng.randint(lo, env1.n)
        for sig in ALL_SIGS:
            c0 = env0.ssjoin_cost(sig, lo, hi)
            c1 = env1.ssjoin_cost(sig, lo, hi)
            c2 = env2.ssjoin_cost(sig, lo, hi)
            assert c2 - c1 == c1 - c0  # frequency term scales linearly
            # index pricing never looks at frequencies at all
        for scheme in IndexScheme:
            assert env0.index_cost(scheme, lo, hi) == env2.index_cost(scheme, lo, hi)


def test_work_done_objective_undoes_the_mapper_discount():
    rng = random.Random(8)
    for trial in range(15):
        seed = rng.randrange(1 << 30)
        m = rng.choice([2, 4, 10])
        jc = random_cost_env(
            random.Random(seed), objective=Objective.JOB_COMPLETION, num_mappers=m
        )
        wd = random_cost_env(
            random.Random(seed), objective=Objective.WORK_DONE, num_mappers=m
        )
        for scheme in IndexScheme:
            assert wd.index_cost(scheme, 0, wd.n) == m * jc.index_cost(
                scheme, 0, jc.n
            )
        for sig in ALL_SIGS:
            gap = wd.ssjoin_cost(sig, 0, wd.n) - jc.ssjoin_cost(sig, 0, jc.n)
            assert gap == wd.candidates * wd.constants.sign * (1 - Fraction(1, m))
        eq = random_cost_env(random.Random(seed), num_mappers=1)
        eq_wd = random_cost_env(
            random.Random(seed), objective=Objective.WORK_DONE, num_mappers=1
        )
        assert eq.index_cost(IndexScheme.PREFIX, 0, eq.n) == eq_wd.index_cost(
            IndexScheme.PREFIX, 0, eq_wd.n
        )


def test_split_cost_curve_matches_pointwise_pricing():
    rng = random.Random(9)
    env = random_cost_env(rng, n_entities=9)
    sig = SignatureScheme(SignatureKind.PREFIX)
    curve = split_cost_curve(env, IndexScheme.PREFIX, sig, index_first=True)
    assert len(curve) == env.n + 1
    for k in (0, 3, env.n):
        assert curve[k] == env.index_cost(IndexScheme.PREFIX, 0, k) + env.ssjoin_cost(
            sig, k, env.n
        )
    flipped = split_cost_curve(env, IndexScheme.PREFIX, sig, index_first=False)
    assert flipped[0] == env.index_cost(IndexScheme.PREFIX, 0, env.n)


def test_cost_env_validation():
    rng = random.Random(10)
    with pytest.raises(ValueError):
        random_cost_env(rng, num_mappers=0)
    with pytest.raises(ValueError):
        random_cost_env(rng, memory_budget=0)


# ------------------------------------------------------------- calibration


def test_calibrate_recovers_known_constants():
    truth = CostConstants(Fraction(3, 2), Fraction(1, 4), Fraction(2), Fraction(1, 2))
    rng = random.Random(11)
    samples = []
    for _ in range(12):
        lookups = rng.randint(0, 5000)
        signed = rng.randint(0, 5000)
        shuffled = rng.randint(0, 5000)
        verified = rng.randint(0, 5000)
        clock = (
            truth.lookup * lookups
            + truth.sign * signed
            + truth.shuffle * shuffled
            + truth.verify * verified
        )
        samples.append(
            CalibrationSample(lookups, signed, shuffled, verified, int(clock))
        )
    fitted = calibrate(samples)
    for name in ("lookup", "sign", "shuffle", "verify"):
        got, want = getattr(fitted, name), getattr(truth, name)
        assert abs(got - want) <= want * Fraction(1, 100)


def test_calibrate_rejects_degenerate_input():
    good = CalibrationSample(10, 10, 10, 10, 50)
    with pytest.raises(ValueError):
        calibrate([good] * 3)  # too few
    with pytest.raises(ValueError):
        calibrate([good] * 3 + [CalibrationSample(0, 0, 0, 0, 9)])
    with pytest.raises(ValueError):
        calibrate([good] * 6)  # rank-deficient: every row identical


def test_calibrate_clamps_negative_coefficients():
    # clock ignores lookups entirely and is sub-linear in them, so the
    # unconstrained fit would go negative on the lookup column
    samples = [
        CalibrationSample(1000, 10, 0, 0, 10),
        CalibrationSample(2000, 10, 0, 0, 9),
        CalibrationSample(3000, 20, 0, 0, 19),
        CalibrationSample(4000, 20, 0, 0, 18),
        CalibrationSample(10, 5, 1, 0, 8),
        CalibrationSample(10, 5, 0, 1, 8),
    ]
    fitted = calibrate(samples)
    assert fitted.lookup == 0


def test_sample_from_metrics_attributes_by_job_kind():
    index_job = JobMetrics("index#0", [5], [], 0, 0)
    index_job.counters["lookups"] = 40
    index_job.counters["candidates"] = 11
    join_job = JobMetrics("ssjoin#1", [3], [4], 25, 9)
    join_job.counters["candidates"] = 7
    join_job.counters["pairs"] = 13
    sample = sample_from_metrics([index_job, join_job])
    assert sample.lookups == 40
    assert sample.signed == 7
    assert sample.shuffled == 25
    assert sample.verified == 13
    assert sample.clock == index_job.wall_clock + join_job.wall_clock


def test_candidate_signatures_by_scheme():
    rng = random.Random(12)
    env = random_cost_env(rng)
    assert env.candidate_signatures(
        SignatureScheme(SignatureKind.SINGLE_WORD)
    ) == env.stats.avg_candidate_tokens
    assert env.candidate_signatures(
        SignatureScheme(SignatureKind.JACCARD_VARIANT)
    ) == env.stats.avg_candidate_subset_keys
    assert env.candidate_signatures(
        SignatureScheme(SignatureKind.LSH, bands=9, rows=3)
    ) == Fraction(9)
