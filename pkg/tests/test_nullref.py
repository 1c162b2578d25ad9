import itertools
import math

import numpy as np
import pytest

from clonality.errors import ClonalityError
from clonality.inference import ConditionalData, conditional_statistic
from clonality.model import PairObservation
from clonality.nullref import (
    NullDistribution,
    calibrated_rejection,
    cached_unconditional_null,
    conditional_test,
    critical_value,
    exact_conditional_null,
    p_value,
    sample_conditional_null,
    sample_unconditional_null,
)
from clonality.rng import RngStream

MUCINOUS_PS = [0.081] + [0.004] * 9


def observation(shared_ps, unshared_ps):
    return PairObservation(
        shared=tuple((f"s{i}", p) for i, p in enumerate(shared_ps)),
        unshared=tuple((f"u{i}", p) for i, p in enumerate(unshared_ps)),
    )


def brute_force_pvalue(ps, matched):
    """Independent enumeration: every match vector, plain-float probabilities."""
    q = [p / (2.0 - p) for p in ps]
    s_obs = conditional_statistic(ConditionalData.from_pairs(zip(ps, matched))).statistic
    total = 0.0
    for bits in itertools.product((False, True), repeat=len(ps)):
        prob = 1.0
        for qi, b in zip(q, bits):
            prob *= qi if b else 1.0 - qi
        s = conditional_statistic(ConditionalData.from_pairs(zip(ps, bits))).statistic
        if s >= s_obs - 1e-9:
            total += prob
    return total


# --- exact null -------------------------------------------------------------

def test_exact_null_single_marker_atoms():
    null = exact_conditional_null([0.081])
    assert null.mode == "exact"
    assert null.n == 2
    by_stat = dict(zip(np.round(null.statistics, 6), null.probabilities))
    q = 0.081 / 1.919
    assert by_stat[0.0] == pytest.approx(1.0 - q, rel=1e-12)
    assert by_stat[round(math.log(1.919 / 0.081), 6)] == pytest.approx(q, rel=1e-12)


def test_exact_null_half_probability_marker():
    null = exact_conditional_null([0.5])
    match_mass = null.probabilities[null.statistics > 0].sum()
    assert match_mass == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_exact_null_case_pair_has_1024_atoms():
    null = exact_conditional_null(MUCINOUS_PS)
    assert null.n == 1024
    assert null.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    s_obs = conditional_statistic(
        ConditionalData.from_pairs([(0.081, True)] + [(0.004, False)] * 9)
    ).statistic
    # exact tail mass; the published 0.063 was read off a finite Monte Carlo run
    assert p_value(s_obs, null) == pytest.approx(0.059346433338968926, rel=1e-10)


def test_exact_null_matches_brute_force_enumeration():
    gen = np.random.default_rng(31)
    for _ in range(8):
        m = int(gen.integers(1, 6))
        ps = list(gen.uniform(0.01, 0.4, m))
        matched = list(gen.random(m) < 0.5)
        null = exact_conditional_null(ps)
        assert null.n == 2 ** m
        s_obs = conditional_statistic(ConditionalData.from_pairs(zip(ps, matched))).statistic
        assert p_value(s_obs, null) == pytest.approx(brute_force_pvalue(ps, matched), rel=1e-9)


def test_exact_null_size_guard():
    with pytest.raises(ClonalityError, match="Monte Carlo"):
        exact_conditional_null([0.01] * 21)
    exact_conditional_null([0.01] * 5, exact_max=5)  # boundary is allowed


# --- Monte Carlo null ---------------------------------------------------------

def test_sampled_null_single_marker_frequencies():
    n_sims = 50_000
    null = sample_conditional_null([0.081], n_sims, RngStream(42))
    assert null.mode == "monte-carlo"
    assert null.n == n_sims
    values = set(np.round(null.statistics, 6))
    assert values == {0.0, round(math.log(1.919 / 0.081), 6)}
    q = 0.081 / 1.919
    freq = np.mean(null.statistics > 0)
    assert abs(freq - q) <= 4.0 * math.sqrt(q * (1 - q) / n_sims)


def test_sampled_null_rare_markers_all_zero():
    null = sample_conditional_null([1e-6] * 5, 10_000, RngStream(1))
    assert np.mean(null.statistics == 0.0) > 0.99


def test_sampled_null_deterministic_per_stream():
    a = sample_conditional_null(MUCINOUS_PS, 5000, RngStream(7, 3))
    b = sample_conditional_null(MUCINOUS_PS, 5000, RngStream(7, 3))
    c = sample_conditional_null(MUCINOUS_PS, 5000, RngStream(7, 4))
    assert np.array_equal(a.statistics, b.statistics)
    assert not np.array_equal(a.statistics, c.statistics)


def test_sampled_null_requires_positive_sims():
    with pytest.raises(ValueError):
        sample_conditional_null([0.1], 0, RngStream(1))


# --- p-values and critical values ----------------------------------------------

def test_p_value_examples():
    null = exact_conditional_null([0.081])
    assert p_value(math.log(1.919 / 0.081), null) == pytest.approx(0.042209484106, rel=1e-9)
    assert p_value(0.0, null) == 1.0

    metastasis_null = exact_conditional_null([0.004, 0.008, 0.023])
    s = math.log(499.0) + math.log(249.0) + math.log(1.977 / 0.023)
    expected = (0.004 / 1.996) * (0.008 / 1.992) * (0.023 / 1.977)
    assert p_value(s, metastasis_null) == pytest.approx(expected, rel=1e-9)
    assert p_value(s, metastasis_null) < 0.001


def test_p_value_is_one_without_matches():
    obs = observation([], [0.1, 0.004, 0.02])
    result = conditional_test(obs)
    assert result.p_value == 1.0
    assert result.statistic == 0.0


def test_critical_value_two_atom_example():
    null = NullDistribution("exact", np.array([0.0, 3.17]), np.array([0.96, 0.04]))
    assert critical_value(null, 0.05) == 0.0
    # mass above 0 is 0.04 >= 0.03, so the next atom is needed at alpha=0.03
    assert critical_value(null, 0.03) == 3.17


def test_critical_value_near_one_returns_minimum():
    gen = np.random.default_rng(5)
    samples = gen.uniform(0, 10, size=101)
    null = NullDistribution("monte-carlo", samples)
    assert critical_value(null, 0.999) == samples.min()


def test_critical_value_order_statistic_oracle():
    gen = np.random.default_rng(11)
    samples = gen.uniform(0, 1, size=999)  # all distinct almost surely
    null = NullDistribution("monte-carlo", samples)
    alpha = 0.05
    k = critical_value(null, alpha)
    # direct-scan definition
    expected = min(v for v in samples if np.mean(samples > v) < alpha)
    assert k == expected
    # order-statistic form for distinct samples
    assert k == np.sort(samples)[math.ceil(0.95 * 999) - 1]


# --- end-to-end conditional test -------------------------------------------------

def test_conditional_test_published_cases():
    kras_only = conditional_test(observation([0.081], []))
    assert kras_only.method == "exact"
    assert kras_only.n_sims == 0 and kras_only.seed is None
    assert kras_only.p_value == pytest.approx(0.0422094841, rel=1e-8)

    mucinous = conditional_test(observation([0.081], [0.004] * 9))
    assert mucinous.p_value == pytest.approx(0.0593464333, rel=1e-8)
    assert (mucinous.n_matches, mucinous.n_union) == (1, 10)

    tubular = conditional_test(observation([0.081], [0.004] * 11))
    assert tubular.p_value == pytest.approx(0.0631128102, rel=1e-8)

    p6_vs_p1 = conditional_test(observation([0.023], [0.004, 0.008]))
    assert p6_vs_p1.p_value == pytest.approx(0.01757587, rel=1e-6)


def test_conditional_test_monotone_evidence_across_case_pairs():
    p_kras = conditional_test(observation([0.081], [])).p_value
    p_muc = conditional_test(observation([0.081], [0.004] * 9)).p_value
    p_tub = conditional_test(observation([0.081], [0.004] * 11)).p_value
    assert p_kras < p_muc < p_tub


def test_conditional_test_empty_union():
    with pytest.raises(ValueError, match="no mutations observed"):
        conditional_test(observation([], []))


def test_conditional_test_monte_carlo_determinism():
    obs = observation([0.081], [0.004] * 9)
    a = conditional_test(obs, exact_max=0, sims=20_000, seed=99)
    b = conditional_test(obs, exact_max=0, sims=20_000, seed=99)
    assert a == b
    assert a.method == "monte-carlo"
    assert a.n_sims == 20_000 and a.seed == 99


def test_conditional_test_exact_vs_monte_carlo():
    obs = observation([0.05, 0.02], [0.1, 0.004, 0.03])
    exact = conditional_test(obs)
    mc = conditional_test(obs, exact_max=0, sims=200_000, seed=5)
    se = math.sqrt(exact.p_value * (1 - exact.p_value) / 200_000)
    assert abs(mc.p_value - exact.p_value) <= 4.0 * se


# --- unconditional null -----------------------------------------------------------

def test_unconditional_null_single_half_marker():
    n_sims = 40_000
    null = sample_unconditional_null([(0.5, 1)], n_sims, RngStream(13))
    # single marker at p=0.5: a lone mutation scores 0 (prob 1/2); a match or
    # a double absence both score log 2 (prob 1/4 each)
    zero_mass = np.mean(null.statistics == 0.0)
    log2_mass = np.mean(np.isclose(null.statistics, math.log(2.0)))
    assert abs(zero_mass - 0.5) <= 4.0 * math.sqrt(0.25 / n_sims)
    assert abs(log2_mass - 0.5) <= 4.0 * math.sqrt(0.25 / n_sims)


def test_unconditional_null_deterministic_and_cached():
    universe = [(0.1, 10), (0.004, 500)]
    a = sample_unconditional_null(universe, 2000, RngStream(3, 8))
    b = sample_unconditional_null(universe, 2000, RngStream(3, 8))
    assert np.array_equal(a.statistics, b.statistics)
    c1 = cached_unconditional_null(universe, 2000, RngStream(3, 8))
    c2 = cached_unconditional_null(universe, 2000, RngStream(3, 8))
    assert c1 is c2
    assert np.array_equal(c1.statistics, a.statistics)


def test_unconditional_null_percentile_stable_across_seeds():
    universe = [(0.1, 10), (4.0 / 9990.0, 9990)]
    a = sample_unconditional_null(universe, 4000, RngStream(101))
    b = sample_unconditional_null(universe, 4000, RngStream(202))
    qa, qb = np.percentile(a.statistics, 95), np.percentile(b.statistics, 95)
    # bootstrap standard error of the 95th percentile from one run
    gen = np.random.default_rng(0)
    boot = [
        np.percentile(gen.choice(a.statistics, size=a.n, replace=True), 95)
        for _ in range(200)
    ]
    assert abs(qa - qb) <= 4.0 * math.sqrt(2.0) * max(np.std(boot), 1e-3)


# --- calibrated rejection -----------------------------------------------------------

def test_calibrated_rejection_discrete_uniform():
    null_p = [round(0.01 * k, 2) for k in range(1, 101)]
    rule = calibrated_rejection(null_p, null_p, 0.05)
    assert rule.threshold == 0.05
    assert rule.randomized_boundary_prob == 0.0
    assert rule.calibrated_power == pytest.approx(0.05, abs=1e-12)


def test_calibrated_rejection_dominant_alternative():
    null_p = np.linspace(0.2, 1.0, 50)
    alt_p = np.full(80, 0.001)
    rule = calibrated_rejection(null_p, alt_p, 0.05)
    assert rule.calibrated_power == 1.0


def test_calibrated_rejection_self_size_is_alpha():
    gen = np.random.default_rng(17)
    for alpha in (0.01, 0.05, 0.2):
        null_p = np.round(gen.uniform(0, 1, size=137), 2)  # heavy ties
        rule = calibrated_rejection(null_p, null_p, alpha)
        size = np.mean(null_p <= rule.threshold)
        if rule.randomized_boundary_prob > 0.0:
            above = null_p[null_p > rule.threshold]
            boundary = above.min()
            size += rule.randomized_boundary_prob * np.mean(null_p == boundary)
        assert size == pytest.approx(alpha, abs=1e-12)
        assert rule.calibrated_power == pytest.approx(alpha, abs=1e-12)


def test_calibrated_rejection_validation():
    with pytest.raises(ValueError):
        calibrated_rejection([], [0.1], 0.05)
    with pytest.raises(ValueError):
        calibrated_rejection([0.1], [0.1], 1.5)


# --- NullDistribution validation ------------------------------------------------------

def test_null_distribution_validation():
    with pytest.raises(ValueError):
        NullDistribution("exact", np.array([0.0, 1.0]), np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        NullDistribution("monte-carlo", np.array([0.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        NullDistribution("banana", np.array([0.0]))
    with pytest.raises(ValueError):
        NullDistribution("monte-carlo", np.array([]))
