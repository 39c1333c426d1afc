import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhgm import (
    ProblemSpec,
    enumerate_support,
    factorial_moment,
    gauss_manin,
    gfc_log_x,
    moment_map,
    oracle_Z,
    recurrence_Z,
    recurrence_Z_exact,
)

positive_fraction = st.fractions(Fraction(1, 20), 5, max_denominator=50)


def restricted_oracle(n, k, x, r_min=1, r_max=None):
    """Brute force over partitions with part sizes in [r_min, r_max]."""
    top = n if r_max is None else r_max
    total = Fraction(0)
    for s in enumerate_support((n, k)):
        if any(c and not r_min <= i <= top for i, c in enumerate(s, start=1)):
            continue
        term = Fraction(1)
        for xi, c in zip(x, s):
            term *= Fraction(xi) ** c / math.factorial(c)
        total += term
    return total


def test_recurrence_examples():
    assert float(recurrence_Z((4, 2), [1, 1, 1])) == pytest.approx(1.5, rel=1e-15)
    assert recurrence_Z((100, 90), log_x=gfc_log_x(0.5, 11)).log == pytest.approx(-300.737, abs=1e-3)
    assert recurrence_Z((100, 90), log_x=gfc_log_x(0.1, 11)).log == pytest.approx(-295.383, abs=1e-3)


@given(st.integers(4, 20), st.data())
@settings(max_examples=40, deadline=None)
def test_oracle_equivalence(n, data):
    k = data.draw(st.integers(2, n - 2))
    x = data.draw(st.lists(positive_fraction, min_size=n - k + 1, max_size=n - k + 1))
    z = oracle_Z((n, k), x)
    assert recurrence_Z_exact((n, k), x) == z
    assert recurrence_Z((n, k), [float(v) for v in x]).log == pytest.approx(math.log(z), rel=1e-12)


@given(st.integers(3, 14), st.data())
@settings(max_examples=40, deadline=None)
def test_upper_restricted_support(n, data):
    k = data.draw(st.integers(1, n))
    m = data.draw(st.integers(1, n - k + 1))
    if n > m * k:
        return
    x = data.draw(st.lists(positive_fraction, min_size=n - k + 1, max_size=n - k + 1))
    expect = restricted_oracle(n, k, x, r_max=m)
    got = recurrence_Z(ProblemSpec(n, k, r_max=m), [float(v) for v in x])
    assert got.log == pytest.approx(math.log(expect), rel=1e-12)
    if n <= m + k - 1:
        assert restricted_oracle(n, k, x) == expect


@given(st.integers(3, 20), st.integers(2, 3), st.data())
@settings(max_examples=40, deadline=None)
def test_shift_identity(n, r, data):
    # Z_{n,k,(r)}(x) = Z_{n-(r-1)k,k}(x_{.+r-1}), the Z form of the shift identity
    k = data.draw(st.integers(1, n // r))
    x = data.draw(st.lists(positive_fraction, min_size=n, max_size=n))
    lhs = restricted_oracle(n, k, x, r_min=r)
    n2 = n - (r - 1) * k
    rhs = oracle_Z((n2, k), x[r - 1 : r - 1 + n2 - k + 1])
    assert lhs == rhs
    got = recurrence_Z(ProblemSpec(n, k, r_min=r), [float(v) for v in x])
    assert got.log == pytest.approx(math.log(lhs), rel=1e-12)


def test_empty_support_is_zero_flag():
    # (4,2): Z = x1 x3 + x2^2/2 vanishes when x2 = x3 = 0
    assert recurrence_Z((4, 2), [1.0, 0.0, 0.0]).sign == 0
    assert float(recurrence_Z((4, 2), [1.0, 0.0, 2.0])) == pytest.approx(2.0)


def test_gauss_manin_examples():
    q = gauss_manin((4, 2), [1, 1, 1])
    assert [float(c) for c in q.components()] == pytest.approx([1.5, 1.0], rel=1e-15)
    q = gauss_manin((6, 4), [1, 1, 1])
    assert [float(c) for c in q.components()] == pytest.approx([10 / 24, 1 / 6], rel=1e-14)
    q = gauss_manin((5, 3), [1.0, 2.0, 0.0])
    assert q.component(1).sign == 0


@given(st.integers(5, 15), st.data())
@settings(max_examples=25, deadline=None)
def test_gauss_manin_components(n, data):
    k = data.draw(st.integers(2, n - 2))
    x = data.draw(st.lists(positive_fraction, min_size=n - k + 1, max_size=n - k + 1))
    q = gauss_manin((n, k), [float(v) for v in x])
    expect = [oracle_Z((n, k), x)]
    for i in range(3, n - k + 2):
        expect.append(x[i - 1] * oracle_Z((n - i, k - 1), x[: n - i - k + 2]))
    for c, e in zip(q.components(), expect):
        assert c.log == pytest.approx(math.log(e), rel=1e-12)


def test_factorial_moment_examples():
    assert float(factorial_moment((4, 2), [1, 1, 1], [0, 2, 0])) == pytest.approx(2 / 3, rel=1e-14)
    assert factorial_moment((6, 3), [1, 1, 1, 1], [4, 0, 0, 0]).sign == 0
    st_ = moment_map((8, 4), np.arange(1.0, 6.0))
    for i in range(5):
        r = np.zeros(5, dtype=int)
        r[i] = 1
        assert float(factorial_moment((8, 4), np.arange(1.0, 6.0), r)) == pytest.approx(st_.eta[i], rel=1e-12)


@pytest.mark.parametrize("n,k", [(7, 3), (9, 4)])
def test_factorial_moment_matches_enumeration(n, k):
    x = [Fraction(1, i + 1) for i in range(n - k + 1)]
    supp = enumerate_support((n, k))
    z = oracle_Z((n, k), x)
    weights = []
    for s in supp:
        w = Fraction(1)
        for xi, c in zip(x, s):
            w *= xi ** c / math.factorial(c)
        weights.append(w / z)
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = rng.integers(0, 3, size=n - k + 1)
        exact = sum(
            w * math.prod(math.perm(c, ri) for c, ri in zip(s, r)) for s, w in zip(supp, weights)
        )
        got = factorial_moment((n, k), [float(v) for v in x], r)
        if exact == 0:
            assert got.sign == 0
        else:
            assert float(got) == pytest.approx(float(exact), rel=1e-12)


@given(st.integers(4, 30), st.data())
@settings(max_examples=40, deadline=None)
def test_moment_constraints(n, data):
    k = data.draw(st.integers(1, n - 1))
    lx = data.draw(st.lists(st.floats(-2, 2), min_size=n - k + 1, max_size=n - k + 1))
    eta = moment_map((n, k), log_x=np.array(lx), check=False).eta
    assert eta.sum() == pytest.approx(k, rel=1e-10)
    assert np.arange(1, n - k + 2) @ eta == pytest.approx(n, rel=1e-10)
