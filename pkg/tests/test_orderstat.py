import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chirpswipt.orderstat import (OrderedMomentQuery, OrderStatError, lambda_nu, omega, omega_alternating,
                                  order_stat_table, ordered_gamma_moment, ordered_gamma_pdf,
                                  sample_ordered_moments, tabulate, upsilon, upsilon_tilde,
                                  upsilon_tilde_harmonic)

# high-precision quadrature values computed once with mpmath at 30 digits
FROZEN = {
    (2, 1, 2, 1): 2.75,
    (16, 1, 4, 1): 8.2503096904760753,
    (16, 8, 4, 1): 3.8529748991392534,
    (16, 16, 12, 2): 46.69989906078798,
    (16, 1, 12, 2): 362.96954220660995,
    (8, 3, 6, 1): 6.9356491496644443,
}


@pytest.mark.parametrize("key,value", FROZEN.items())
def test_frozen_moments(key, value):
    assert ordered_gamma_moment(OrderedMomentQuery(*key)) == pytest.approx(value, rel=1e-9)


def test_exponential_max_of_two():
    # max of two unit exponentials has mean 1 + 1/2
    assert ordered_gamma_moment(OrderedMomentQuery(2, 1, 1)) == pytest.approx(1.5, rel=1e-10)


@pytest.mark.parametrize("N,M", [(1, 5), (3, 2), (16, 4), (16, 12), (12, 8)])
def test_rank_sum_identity(N, M):
    total = math.fsum(ordered_gamma_moment(OrderedMomentQuery(N, n, M)) for n in range(1, N + 1))
    assert total == pytest.approx(N * M, rel=1e-8)


@given(st.integers(1, 16), st.integers(1, 12))
def test_moments_strictly_decrease_with_rank(N, M):
    vals = [ordered_gamma_moment(OrderedMomentQuery(N, n, M)) for n in range(1, N + 1)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@given(st.integers(1, 16), st.integers(1, 12))
def test_second_moment_exceeds_square(N, M):
    n = (N + 1) // 2
    m1 = ordered_gamma_moment(OrderedMomentQuery(N, n, M, 1))
    m2 = ordered_gamma_moment(OrderedMomentQuery(N, n, M, 2))
    assert m2 >= m1 * m1


def test_pdf_integrates_to_one():
    from scipy.integrate import quad
    q = OrderedMomentQuery(16, 5, 4)
    val, _ = quad(lambda x: ordered_gamma_pdf(q, x), 0, q.x_max, limit=200)
    assert val == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        ordered_gamma_pdf(q, -1.0)


@pytest.mark.parametrize("kw", [dict(N=4, n=5, M=1), dict(N=4, n=0, M=1), dict(N=4, n=1, M=0), dict(N=4, n=1, M=2, nu=3)])
def test_query_validation(kw):
    with pytest.raises(ValueError):
        OrderedMomentQuery(**kw)


def test_sampling_oracle_agrees_for_all_ranks(rng):
    for n in range(1, 17):
        q = OrderedMomentQuery(16, n, 4)
        mean, ci = sample_ordered_moments(q, 40_000, rng)
        # 99.9% band per rank keeps the joint false-alarm rate small
        assert abs(mean - ordered_gamma_moment(q)) < ci / 1.96 * 3.3


def test_sampling_oracle_small_cases(rng):
    m, ci = sample_ordered_moments(OrderedMomentQuery(2, 1, 1), 20_000, rng)
    assert abs(m - 1.5) < 2 * ci
    m, ci = sample_ordered_moments(OrderedMomentQuery(1, 1, 5), 20_000, rng)
    assert abs(m - 5.0) < 2 * ci
    with pytest.raises(ValueError):
        sample_ordered_moments(OrderedMomentQuery(1, 1, 5), 10, rng)


@given(st.integers(1, 30), st.data())
def test_upsilon_tilde_matches_harmonic_form(N, data):
    n = data.draw(st.integers(1, N))
    assert upsilon_tilde(N, n) == pytest.approx(upsilon_tilde_harmonic(N, n), rel=1e-12)


def test_upsilon_tilde_exact_rational():
    # independent rational evaluation of H_N - H_{n-1}
    N, n = 20, 3
    exact = sum(Fraction(1, i) for i in range(n, N + 1))
    assert upsilon_tilde(N, n) == pytest.approx(float(exact), rel=1e-14)
    assert upsilon_tilde(1, 1) == 1.0
    assert upsilon_tilde(2, 1) == pytest.approx(1.5)


@given(st.integers(1, 24))
def test_upsilon_tilde_rank_sum(N):
    assert math.fsum(upsilon_tilde(N, n) for n in range(1, N + 1)) == pytest.approx(N, rel=1e-12)


def test_upsilon_scaling_and_domain():
    q = OrderedMomentQuery(16, 3, 4)
    assert upsilon(q, 1e-6, 0.4e-6) == pytest.approx(0.6e-6 * upsilon_tilde(16, 3))
    assert upsilon(q, 1e-6, 1e-6) == 0.0
    with pytest.raises(ValueError):
        upsilon(q, 1e-6, 2e-6)
    assert omega(q, 2.0) == pytest.approx(2 * ordered_gamma_moment(q))


@pytest.mark.parametrize("N,n,M,nu", [(2, 1, 2, 1), (3, 2, 2, 1), (4, 2, 3, 2), (5, 3, 2, 1)])
def test_alternating_form_matches_quadrature(N, n, M, nu):
    ref = ordered_gamma_moment(OrderedMomentQuery(N, n, M, nu))
    assert omega_alternating(N, n, M, nu) == pytest.approx(ref, rel=1e-7)


def test_lambda_nu_base_case():
    # with no incomplete-gamma power the integral is Gamma(M + nu)
    assert lambda_nu(3, 3, 4, 1, 0) == pytest.approx(math.gamma(5), rel=1e-9)


def test_table_and_tabulate():
    t = order_stat_table(16, 4, 1e-6, 0.5e-6)
    assert t.omega1.shape == (16,)
    assert t.omega1[0] == pytest.approx(0.5e-6 * FROZEN[(16, 1, 4, 1)], rel=1e-9)
    assert np.allclose(t.upsilon, 0.5e-6 * t.upsilon_tilde)
    rows = tabulate([4], [2], (1,))
    assert len(rows) == 4 and rows[0][:4] == (4, 1, 2, 1)


def test_error_type_is_arithmetic():
    assert issubclass(OrderStatError, ArithmeticError)
