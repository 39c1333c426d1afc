import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhgm import (
    DomainError,
    IntegrationPath,
    SingularityError,
    StepSizeError,
    back_substitute_inverse,
    dhgm,
    exact_gauss_manin,
    exact_z,
    first_rows,
    gauss_manin,
    gfc_log_x,
    gfc_ptilde_inverse,
    gfc_x,
    hgm_integrate,
    oracle_Z,
    pfaffian_combination,
    pfaffian_combination_matrix,
    pfaffian_matrices,
    ptilde,
    recurrence_Z,
    recurrence_Z_exact,
)


def random_instance(rng, n_max=15):
    n = int(rng.integers(5, n_max + 1))
    k = int(rng.integers(2, n - 1))
    x = np.exp(rng.uniform(-1, 1, n - k + 1))
    return n, k, x


def z_exact(n, k, x):
    if k == 0:
        return Fraction(int(n == 0))
    if n < k:
        return Fraction(0)
    return oracle_Z((n, k), x[: n - k + 1])


def gm_exact(n, k, x):
    """Gauss-Manin vector as Fractions from the oracle."""
    return [z_exact(n, k, x)] + [x[i - 1] * z_exact(n - i, k - 1, x) for i in range(3, n - k + 2)]


def test_constant_system_for_k_equal_n_minus_2():
    for n in (4, 7, 12):
        for x in ([1.0, 1.0, 1.0], [0.3, 2.0, 5.0]):
            P = pfaffian_matrices((n, n - 2), x)
            assert np.allclose(np.asarray(P[1], float), [[n - 4, 1], [0, n - 3]])
            assert np.allclose(np.asarray(P[2], float), [[2, -2], [0, 0]])
            assert np.allclose(np.asarray(P[3], float), [[0, 1], [0, 1]])


def test_first_rows():
    rows = np.asarray(first_rows(12, 5), float)
    assert rows[0].tolist() == [-2, 1, 2, 3, 4, 5, 6]
    assert rows[1].tolist() == [7, -2, -3, -4, -5, -6, -7]
    for i in range(3, 9):
        assert rows[i - 1].tolist() == [1.0 if j == i - 1 else 0.0 for j in range(1, 8)]


@pytest.mark.parametrize("n", [8, 15, 25, 40])
@pytest.mark.parametrize("alpha", [-1.5, 0.1, 0.5])
def test_gfc_closed_form_inverse(n, alpha):
    for D in range(2, min(9, n - 1)):
        x = gfc_x(alpha, D + 1)
        for i in range(1, D):
            size = D - i
            literal = np.asarray(back_substitute_inverse(ptilde(n, i, size, np.asarray(x, np.longdouble))), float)
            closed = gfc_ptilde_inverse(n, i, size, alpha)
            assert np.allclose(closed, literal, rtol=1e-10, atol=1e-10 * np.abs(literal).max())


def test_contiguity_identity():
    # P_i Q_{n,k} = x_i Q_{n-i,k-1} (zero padded) + [i >= 3] Q_{i-1} e_{i-1}
    rng = np.random.default_rng(11)
    for _ in range(50):
        n, k, x = random_instance(rng)
        D = n - k
        xq = [Fraction(v) for v in x]
        Q = gm_exact(n, k, xq)
        P = pfaffian_matrices((n, k), x)
        Qf = np.array([float(v) for v in Q], dtype=np.longdouble)
        for i in range(1, D + 2):
            lhs = np.asarray(P[i] @ Qf, float)
            sub = gm_exact(n - i, k - 1, xq) if n - i >= k - 1 else []
            rhs = np.zeros(D)
            rhs[: len(sub)] = [float(xq[i - 1] * v) for v in sub]
            if i >= 3:
                rhs[i - 2] += float(Q[i - 2])
            scale = np.abs(rhs).max()
            assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-8 * scale)


def test_euler_relations():
    rng = np.random.default_rng(12)
    for _ in range(30):
        n, k, x = random_instance(rng)
        D = n - k
        Q = np.asarray(gauss_manin((n, k), x).direction, np.longdouble)
        P = pfaffian_matrices((n, k), x)
        total = P.combination(np.ones(D + 1))
        weighted = P.combination(np.arange(D + 1))
        assert np.allclose(np.asarray(total @ Q, float), k * np.asarray(Q, float), rtol=1e-9)
        assert float((weighted @ Q)[0]) == pytest.approx(D * float(Q[0]), rel=1e-9)


def test_integrability_symmetry():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n, k, x = random_instance(rng)
        D = n - k
        P = pfaffian_matrices((n, k), x)
        for i in range(3, D + 1):
            for j in range(3, D + 3 - i):
                a = float(P.ptilde_inverse(i)[j - 3].sum())
                b = float(P.ptilde_inverse(j)[i - 3].sum())
                assert a == pytest.approx(b, rel=1e-9)


@given(st.integers(5, 30), st.data())
@settings(max_examples=40, deadline=None)
def test_fast_paths_match_literal_assembly(n, data):
    k = data.draw(st.integers(2, n - 3))
    D = n - k
    lx = data.draw(st.lists(st.floats(-1.5, 1.5), min_size=D + 1, max_size=D + 1))
    c = data.draw(st.lists(st.floats(-2, 2), min_size=D + 1, max_size=D + 1))
    x = np.exp(np.array(lx, dtype=np.longdouble))
    c = np.array(c, dtype=np.longdouble)
    P = pfaffian_matrices((n, k), x)
    M = P.combination(c)
    scale = float(np.abs(M).max())
    fast = pfaffian_combination_matrix(n, k, x, c)
    assert np.allclose(np.asarray(fast, float), np.asarray(M, float), rtol=1e-12, atol=1e-12 * scale)
    Q = np.exp(np.array(data.draw(st.lists(st.floats(-1, 1), min_size=D, max_size=D)), np.longdouble))
    v = pfaffian_combination(n, k, x, c, Q)
    ref = np.asarray(M @ Q, float)
    assert np.allclose(np.asarray(v, float), ref, rtol=1e-11, atol=1e-11 * np.abs(ref).max())


def test_singularities_reported():
    with pytest.raises(SingularityError):
        pfaffian_matrices((6, 1), np.ones(6))
    with pytest.raises(SingularityError):
        back_substitute_inverse(np.array([[1.0, 2.0], [0.0, 0.0]]))
    with pytest.raises(SingularityError):
        ptilde(6, 2, 4, np.ones(6))
    with pytest.raises(DomainError):
        pfaffian_matrices((6, 4), [1.0, -1.0, 1.0])


def test_exact_start_vectors():
    for point in ("ones", "half_rising", "inv", "inv_factorial"):
        for n, k in [(6, 3), (9, 4), (12, 9)]:
            x = {"ones": [Fraction(1)] * (n - k + 1), "half_rising": gfc_x(Fraction(1, 2), n - k + 1),
                 "inv": [Fraction(1, i) for i in range(1, n - k + 2)],
                 "inv_factorial": [Fraction(1, math.factorial(i)) for i in range(1, n - k + 2)]}[point]
            assert exact_z(point, n, k) == oracle_Z((n, k), x)
            q = exact_gauss_manin(point, (n, k))
            for c, e in zip(q.components(), gm_exact(n, k, x)):
                assert c.log == pytest.approx(math.log(e), rel=1e-15, abs=1e-15)


def test_hgm_table_values():
    q = hgm_integrate((100, 90), IntegrationPath("gfc", -1.0, 0.5, 500))
    assert q.log_z == pytest.approx(-300.735, abs=5e-3)
    assert q.log_z == pytest.approx(recurrence_Z((100, 90), log_x=gfc_log_x(0.5, 11)).log, abs=1e-5)
    q = hgm_integrate((100, 90), IntegrationPath("gfc", -1.0, 0.1, 500))
    assert q.log_z == pytest.approx(-295.383, abs=1e-3)


def test_hgm_zero_length_path():
    start = exact_gauss_manin("ones", (20, 12))
    q = hgm_integrate((20, 12), IntegrationPath("gfc", -1.0, -1.0, 10), start)
    assert np.array_equal(q.direction, start.direction)
    assert q.log_scale == start.log_scale


@pytest.mark.parametrize("n,D", [(n, D) for n in (10, 20, 40, 60) for D in (2, 5, 8, 10) if n - D >= 2])
@pytest.mark.parametrize("alpha", [-1.0, 0.1, 0.5])
def test_method_agreement(n, D, alpha):
    k = n - D
    ref = recurrence_Z((n, k), log_x=gfc_log_x(alpha, D + 1)).log
    q = hgm_integrate((n, k), IntegrationPath("gfc", -1.0, alpha, 500))
    assert q.log_z == pytest.approx(ref, rel=1e-6)
    x = np.array([float(v) for v in gfc_x(Fraction(alpha).limit_denominator(10), D + 1)], np.longdouble)
    assert dhgm((n, k), x).log_z == pytest.approx(ref, rel=1e-6)


def test_hgm_log_linear_path_and_gauss_manin_vector():
    n, k = 14, 8
    target = np.log(np.linspace(0.5, 2.0, n - k + 1))
    q = hgm_integrate((n, k), IntegrationPath("log_linear", np.zeros(n - k + 1), target, 200))
    ref = gauss_manin((n, k), log_x=target)
    for a, b in zip(q.components(), ref.components()):
        assert a.log == pytest.approx(b.log, rel=1e-9)


def test_hgm_adaptive_steps():
    q = hgm_integrate((60, 50), IntegrationPath("gfc", -1.0, 0.5, "auto", tol=1e-12))
    ref = recurrence_Z((60, 50), log_x=gfc_log_x(0.5, 11)).log
    assert q.log_z == pytest.approx(ref, rel=1e-9)


def test_hgm_step_growth_guard():
    with pytest.raises(StepSizeError):
        hgm_integrate((30, 20), IntegrationPath("gfc", -1.0, 0.5, 3), max_growth=1.01)


def test_hgm_diagnostics_csv():
    buf = io.StringIO()
    hgm_integrate((12, 8), IntegrationPath("gfc", -1.0, 0.5, 7), diagnostics=buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "step,t,log_scale,log_z,growth"
    assert len(lines) == 8


def test_dhgm_base_case_exact():
    x = [Fraction(2), Fraction(3, 7), Fraction(5, 3)]
    q = dhgm((4, 2), x, dtype=object)
    assert list(q) == [x[0] * x[2] + x[1] ** 2 / 2, x[0] * x[2]]


@given(st.integers(4, 20), st.data())
@settings(max_examples=60, deadline=None)
def test_dhgm_exact_rational_matches_oracle(n, data):
    k = data.draw(st.integers(2, n - 2))
    x = data.draw(st.lists(st.fractions(Fraction(1, 9), 9, max_denominator=12),
                           min_size=n - k + 1, max_size=n - k + 1))
    q = dhgm((n, k), x, dtype=object)
    assert list(q) == gm_exact(n, k, x)


def test_dhgm_table_value_and_literal_doubling():
    x = np.array([float(v) for v in gfc_x(Fraction(1, 2), 11)], np.longdouble)
    assert dhgm((100, 90), x).log_z == pytest.approx(-300.737, abs=1e-3)
    # scaling every row of the doubling step by 1/i is wrong from i = 3 on
    xq = [Fraction(1, i) for i in range(1, 6)]
    assert list(dhgm((10, 6), xq, dtype=object, literal_doubling=True)) != gm_exact(10, 6, xq)
    assert list(dhgm((10, 6), xq, dtype=object)) == gm_exact(10, 6, xq)


def test_dhgm_matches_exact_recurrence_in_rationals():
    x = gfc_x(Fraction(1, 2), 31)
    q = dhgm((60, 30), x, dtype=object)
    assert q[0] == recurrence_Z_exact((60, 30), x)
