import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import nbinom

from lbdi.errors import DomainError
from lbdi.model import (
    Params,
    TruncationConfig,
    generator_rates,
    kernel_block,
    mean_at,
    q_of_t,
    stationary_dist,
    stationary_pmf,
    transition_prob,
    truncated_kernel,
)
from lbdi.simulate import simulate_endpoints

P0 = Params(0.03, 0.1, 0.01)

rates = st.tuples(
    st.floats(0.005, 0.2), st.floats(0.005, 0.3), st.floats(0.001, 0.1)
).map(lambda t: Params(*t))


def generator(params, m):
    """Dense generator on 0..m with births out of m suppressed."""
    q = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        b, d, _ = generator_rates(params, i)
        if i < m:
            q[i, i + 1] = b
        if i > 0:
            q[i, i - 1] = d
        q[i, i] = -q[i].sum()
    return q


def test_generator_rates_examples():
    assert generator_rates(P0, 0) == pytest.approx((0.01, 0.0, 0.01))
    assert generator_rates(P0, 1) == pytest.approx((0.04, 0.1, 0.14))


def test_q_examples():
    assert q_of_t(P0, 1.0) == pytest.approx(0.971842, abs=5e-7)
    assert q_of_t(P0, 0.0) == 1.0
    assert q_of_t(Params(0.05, 0.05, 0.01), 2.0) == pytest.approx(1 / 1.1, rel=1e-12)


def test_transition_prob_examples():
    q = q_of_t(P0, 1.0)
    r = P0.r
    assert transition_prob(P0, 1.0, 0, 0) == pytest.approx(q**r, rel=1e-13)
    assert transition_prob(P0, 1.0, 0, 0) == pytest.approx(0.99052, abs=5e-6)
    assert transition_prob(P0, 1.0, 0, 1) == pytest.approx(q**r * r * (1 - q), rel=1e-12)
    assert transition_prob(P0, 1.0, 0, 1) == pytest.approx(0.009297, abs=5e-7)
    assert transition_prob(P0, 1.0, 1, 0) == pytest.approx(q**r * (P0.mu / P0.lam) * (1 - q), rel=1e-12)


def test_transition_prob_rejects_bad_input():
    with pytest.raises(DomainError):
        transition_prob(P0, 0.0, 0, 0)
    with pytest.raises(DomainError):
        transition_prob(P0, 1.0, -1, 0)
    with pytest.raises(DomainError):
        Params(0.0, 0.1, 0.01)


@pytest.mark.parametrize("params", [P0, Params(0.09, 0.1, 0.05), Params(0.2, 0.05, 0.03), Params(0.05, 0.05, 0.02)])
@pytest.mark.parametrize("t", [0.5, 1.0, 7.0])
def test_closed_form_matches_matrix_exponential(params, t):
    m = 150
    ref = expm(generator(params, m) * t)
    got = kernel_block(params, t, 8, 8)
    assert np.max(np.abs(got - ref[:8, :8])) < 1e-11


@given(rates, st.integers(2, 12), st.floats(0.1, 30.0))
@settings(max_examples=60, deadline=None)
def test_truncated_rows_are_stochastic(params, n, dt):
    k = truncated_kernel(params, dt, TruncationConfig(n)).entries
    assert k.shape == (n + 1, n + 1)
    assert np.all(k >= 0)
    assert np.max(np.abs(k.sum(axis=1) - 1.0)) < 1e-12


def test_tail_aggregation_adds_mass():
    k = truncated_kernel(P0, 1.0, TruncationConfig(2)).entries
    assert k.shape == (3, 3)
    assert k[2, 2] >= transition_prob(P0, 1.0, 2, 2)
    assert truncated_kernel(P0, 1.0, TruncationConfig(5)).entries[0, 0] == pytest.approx(0.99052, abs=5e-6)


@pytest.mark.parametrize("params", [P0, Params(0.05, 0.2, 0.03)])
def test_chapman_kolmogorov(params):
    s, t, m = 0.7, 1.8, 60
    lhs = kernel_block(params, s, 3, m) @ kernel_block(params, t, m, 3)
    rhs = kernel_block(params, s + t, 3, 3)
    assert np.max(np.abs(lhs - rhs)) < 1e-6


@given(rates, st.integers(0, 4))
@settings(max_examples=40, deadline=None)
def test_identity_at_small_t(params, i):
    t = 1e-8
    for j in range(6):
        expected = 1.0 if i == j else 0.0
        assert abs(transition_prob(params, t, i, j) - expected) < 1e-6


@pytest.mark.parametrize("params", [P0, Params(0.05, 0.05, 0.02), Params(0.1, 0.07, 0.02)])
@pytest.mark.parametrize("i", [0, 1, 3])
def test_mean_consistency(params, i):
    t = 2.0
    m = 80
    row = kernel_block(params, t, i + 1, m)[i]
    assert row[-5:].sum() < 1e-10
    assert np.dot(np.arange(m), row) == pytest.approx(mean_at(params, t, i), abs=1e-8)


def test_mean_examples():
    assert mean_at(P0, 1.0, 0) == pytest.approx(0.0096580, abs=5e-8)
    assert mean_at(P0, 0.0, 4) == 4.0
    assert mean_at(Params(0.05, 0.05, 0.02), 10.0, 1) == pytest.approx(1.2, rel=1e-12)


def test_stationary_examples():
    assert stationary_pmf(P0, 0) == pytest.approx(0.7 ** (1 / 3), rel=1e-13)
    assert stationary_pmf(P0, 0) == pytest.approx(0.88790, abs=5e-6)
    # negative binomial with r = nu/lam and success probability 1 - lam/mu
    for i in range(6):
        assert stationary_pmf(P0, i) == pytest.approx(nbinom.pmf(i, P0.r, 1 - P0.lam / P0.mu), rel=1e-12)
    d = stationary_dist(P0, TruncationConfig(5))
    assert d.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert d.tail_mass == pytest.approx(nbinom.sf(4, P0.r, 1 - P0.lam / P0.mu), rel=1e-9)
    with pytest.raises(DomainError):
        stationary_dist(Params(0.1, 0.1, 0.01))


def test_stationary_fixed_point():
    m = 80
    pi = np.array([stationary_pmf(P0, i) for i in range(m)])
    out = pi @ kernel_block(P0, 1.0, m, m)
    assert np.max(np.abs(out[:10] - pi[:10])) < 1e-12


def test_monte_carlo_agreement():
    # 10^5 exact paths per start state, 4 binomial standard errors
    t, n = 1.0, 100_000
    for i in range(3):
        ends, _ = simulate_endpoints(P0, i, t, n, seed=11 + i)
        for j in range(3):
            p = transition_prob(P0, t, i, j)
            se = math.sqrt(p * (1 - p) / n)
            freq = np.mean(ends == j)
            assert abs(freq - p) <= 4 * se + 1e-12, (i, j, freq, p)


def test_monte_carlo_far_from_origin():
    n = 1_000_000
    ends, _ = simulate_endpoints(P0, 3, 0.5, n, seed=5)
    p = transition_prob(P0, 0.5, 3, 2)
    assert abs(np.mean(ends == 2) - p) <= 3 * math.sqrt(p * (1 - p) / n)
