import io
import json
import math
from collections import Counter

import numpy as np
import pytest

from bellhgm import (
    AHypDistribution,
    DomainError,
    MarkovMove,
    TestReport,
    design_matrix,
    enumerate_support,
    exact_sampler_law,
    fiber_components,
    markov_basis,
    mcmc_sample,
    mcmc_step,
    mh_ratio,
    sample_exact,
    similar_test,
    stationary_distribution,
    transition_matrix,
    write_jsonl,
)


def random_dist(n, k, seed):
    rng = np.random.default_rng(seed)
    return AHypDistribution((n, k), np.exp(rng.uniform(-1, 1, n - k + 1)))


def test_exact_sampler_deterministic_cases():
    for k in (1, 3, 7):
        draws = sample_exact(AHypDistribution((k, k), np.ones(1)), 0, size=20)
        assert np.all(draws == [k])
        draws = sample_exact(AHypDistribution((k + 1, k), np.ones(2)), 0, size=20)
        assert np.all(draws == [k - 1, 1])


def test_exact_sampler_small_frequency():
    draws = sample_exact(AHypDistribution((4, 2), np.ones(3)), 1, size=100_000)
    freq = np.mean(np.all(draws == [1, 0, 1], axis=1))
    sigma = math.sqrt(2 / 9 / 100_000)
    assert abs(freq - 2 / 3) < 3 * sigma


@pytest.mark.parametrize("n,k", [(6, 2), (8, 3), (10, 4), (12, 6), (11, 9)])
def test_exact_sampler_law_is_pmf(n, k):
    dist = random_dist(n, k, n + k)
    _, q = dist.pmf_table()
    _, law = exact_sampler_law(dist)
    assert 0.5 * np.abs(law - q).sum() < 1e-12


@pytest.mark.parametrize("n,k", [(8, 3), (10, 4)])
def test_exact_sampler_empirical_tv(n, k):
    M = 100_000
    dist = random_dist(n, k, 5)
    support, q = dist.pmf_table()
    counts = Counter(map(tuple, sample_exact(dist, 42, size=M)))
    emp = np.array([counts[tuple(s)] for s in support]) / M
    assert sum(counts.values()) == M
    assert 0.5 * np.abs(emp - q).sum() < 4 * math.sqrt(len(support) / M)


def test_exact_sampler_reproducible():
    dist = random_dist(12, 5, 0)
    assert np.array_equal(sample_exact(dist, 9, size=50), sample_exact(dist, 9, size=50))
    assert sample_exact(dist, 9).shape == (8,)


@pytest.mark.parametrize("n,k", [(6, 2), (9, 4), (15, 5)])
def test_markov_moves_preserve_constraints(n, k):
    A = design_matrix((n, k))
    basis = markov_basis((n, k))
    assert len(basis) == (n - k) * (n - k - 1) // 2
    for m in basis:
        assert np.all(A @ m.vector == 0)
    with pytest.raises(DomainError):
        MarkovMove(2, 3, 5)


def test_fiber_six_three():
    assert enumerate_support((6, 3)) == [(0, 3, 0, 0), (1, 1, 1, 0), (2, 0, 0, 1)]
    assert fiber_components((6, 3)) == 1


def test_mh_ratio_matches_product_form():
    # the product form of the factor is exact when i4 >= i1 + 3
    rng = np.random.default_rng(0)
    n, k = 14, 5
    dist = random_dist(n, k, 3)
    x = dist.x
    support = enumerate_support((n, k))
    checked = 0
    for _ in range(300):
        s = np.array(support[rng.integers(len(support))])
        move = markov_basis((n, k))[rng.integers((n - k) * (n - k - 1) // 2)]
        if move.i4 < move.i1 + 3:
            continue
        a, b, c, d = move.i1, move.i1 + 1, move.i4 - 1, move.i4
        base = x[a - 1] * x[d - 1] / (x[b - 1] * x[c - 1])
        up = base * s[b - 1] * s[c - 1] / ((s[a - 1] + 1) * (s[d - 1] + 1))
        down = s[a - 1] * s[d - 1] / ((s[b - 1] + 1) * (s[c - 1] + 1)) / base
        assert mh_ratio(dist, s, move, 1) == pytest.approx(up, rel=1e-12, abs=1e-300)
        assert mh_ratio(dist, s, move, -1) == pytest.approx(down, rel=1e-12, abs=1e-300)
        checked += 1
    assert checked > 50


def test_mh_ratio_adjacent_move_uses_falling_factorial():
    # i4 = i1 + 2: z removes two blocks of size i1 + 1
    dist = AHypDistribution((8, 4), np.ones(5))
    s = np.array([2, 0, 2, 0, 0])
    move = MarkovMove(2, 4, 5)
    # s + z = (2, 1, 0, 1, 0): ratio = s3 (s3 - 1) / ((s2 + 1)(s4 + 1))
    assert mh_ratio(dist, s, move, 1) == pytest.approx(2 * 1 / (1 * 1))
    assert mh_ratio(dist, s, move, 1) != pytest.approx(2 * 2)
    # moves leaving the support are rejected
    assert mh_ratio(dist, np.array([1, 0, 0, 1, 0]) * 0 + [3, 0, 0, 0, 1], MarkovMove(1, 3, 5), 1) == 0.0
    state = mcmc_step([3, 0, 0, 0, 1], MarkovMove(1, 3, 5), 1, dist, 0)
    assert state.tolist() == [3, 0, 0, 0, 1]


def test_detailed_balance():
    dist = random_dist(7, 3, 1)
    support, P = transition_matrix(dist)
    q = np.exp([dist.log_pmf(s) for s in support])
    flow = q[:, None] * P
    assert np.allclose(flow, flow.T, atol=1e-15)
    assert np.allclose(P.sum(axis=1), 1.0)


@pytest.mark.parametrize("n", range(4, 11))
def test_stationary_distribution_is_pmf(n):
    for k in range(2, n - 1):
        dist = random_dist(n, k, 10 * n + k)
        support, P = transition_matrix(dist)
        _, q = dist.pmf_table()
        assert np.allclose(stationary_distribution(P), q, rtol=0, atol=1e-10)


@pytest.mark.parametrize("n", range(1, 16))
def test_fiber_connected(n):
    for k in range(1, n + 1):
        assert fiber_components((n, k)) == 1


def test_similar_test_samplers_agree():
    dist = AHypDistribution((10, 4), np.ones(7))
    s_obs = [2, 1, 0, 0, 0, 1, 0]
    exact = similar_test(dist, s_obs, sampler="enumerate")
    assert exact.std_error == 0.0
    mc = similar_test(dist, s_obs, M=100_000, sampler="exact", seed=3)
    assert abs(mc.significance - exact.significance) < 3 * mc.std_error
    assert mc.std_error == pytest.approx(math.sqrt(mc.significance * (1 - mc.significance) / 100_000))
    # the chain is autocorrelated; compare at a looser margin
    chain = similar_test(dist, s_obs, M=50_000, sampler="mcmc", seed=3, thin=5)
    assert abs(chain.significance - exact.significance) < 0.02


@pytest.mark.parametrize("s_obs", [[2, 0, 0, 2, 0, 0, 0], [3, 0, 0, 0, 0, 0, 1], [0, 2, 2, 0, 0, 0, 0]])
def test_similar_test_ewens(s_obs):
    dist = AHypDistribution((10, 4), 1 / np.arange(1.0, 8.0))
    exact = similar_test(dist, s_obs, sampler="enumerate")
    mc = similar_test(dist, s_obs, M=100_000, sampler="exact", seed=11)
    assert abs(mc.significance - exact.significance) <= 3 * max(mc.std_error, 1e-3)


def test_similar_test_at_argmax_excludes_ties():
    dist = AHypDistribution((9, 4), np.ones(6))
    support, q = dist.pmf_table()
    top = q.max()
    s_obs = support[int(np.argmax(q))]
    report = similar_test(dist, s_obs, sampler="enumerate")
    ties = q[np.isclose(q, top, rtol=1e-12)].sum()
    assert report.significance == pytest.approx(1 - ties, abs=1e-12)


def test_report_and_jsonl_serialization():
    dist = AHypDistribution((6, 3), np.ones(4))
    report = similar_test(dist, [1, 1, 1, 0], M=100, seed=0)
    data = json.loads(report.to_json())
    assert set(data) == {"statistic", "significance", "std_error", "sampler", "samples", "seed"}
    assert isinstance(report, TestReport) and 0 <= report.significance <= 1
    buf = io.StringIO()
    write_jsonl(mcmc_sample(dist, 3, 0, burn_in=10), buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3 and all(sum(json.loads(line)) == 3 for line in lines)
    with pytest.raises(DomainError):
        similar_test(dist, [1, 1, 1, 0], sampler="gibbs")
