import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from khabi.deriv_core import (
    ProblemParams,
    build_stack,
    exact_q_table,
    phi,
    phi_deriv,
    psi,
    psi_closed_n2,
    q_coefficients_in_rho,
)
from khabi.errors import DomainError


def _mp_deriv(rho, k, t):
    with mpmath.workdps(40):
        return float(mpmath.diff(lambda x: 1 / (1 + x ** mpmath.mpf(rho)), mpmath.mpf(t), k))


def test_params_validation():
    with pytest.raises(DomainError):
        ProblemParams(1, 2.0)
    with pytest.raises(DomainError):
        ProblemParams(2, 0.0)
    with pytest.raises(DomainError):
        ProblemParams(2, float("nan"))
    with pytest.raises(DomainError):
        ProblemParams(2, 0.8).require_main()
    assert ProblemParams(3, 1.5).require_main().n == 3


def test_q2_symbolic():
    # q_2 = rho u ((1 - rho) + (1 + rho) u)
    assert q_coefficients_in_rho(2) == [[0], [0, 1, -1], [0, 1, 1]]


def test_recurrence_matches_sympy():
    t, r = sp.symbols("t rho", positive=True)
    f = 1 / (1 + t ** r)
    for k in range(1, 5):
        dk = sp.diff(f, t, k)
        u = sp.Symbol("u", positive=True)
        mat = exact_q_table(k)[k]
        q = sum(int(mat[j, i]) * u ** j * r ** i for j in range(mat.shape[0]) for i in range(mat.shape[1]))
        target = q.subs(u, t ** r) / (t ** k * (1 + t ** r) ** (k + 1))
        for rv, tv in [(2.5, 0.7), (1.3, 2.2)]:
            assert float(dk.subs({r: rv, t: tv})) == pytest.approx(float(target.subs({r: rv, t: tv})), rel=1e-12)


def test_q_vanishes_at_zero_and_degree():
    stack = build_stack(ProblemParams(6, 2.7))
    for k in range(1, 7):
        c = stack.q[k]
        assert c[0] == 0
        assert len(c) == k + 1


def test_float_and_exact_stack_agree():
    p = ProblemParams(6, 3.3)
    a, b = build_stack(p), build_stack(p, exact=True)
    for k in range(7):
        np.testing.assert_allclose(a.q[k], b.q[k], rtol=1e-13)


def test_first_derivative_example():
    stack = build_stack(ProblemParams(2, 2.0))
    assert phi_deriv(stack, 1, 1.0) == pytest.approx(-0.5, rel=1e-15)
    assert psi(stack, 1.0) == pytest.approx(0.5, rel=1e-15)


def test_q3_at_rho_two():
    stack = build_stack(ProblemParams(3, 2.0))
    np.testing.assert_allclose(stack.q[3], [0, 0, 24, -24])


@pytest.mark.parametrize("rho", [1.1, 1.5, 2.0, 3.0, 5.0, 10.0])
def test_psi_n2_closed_form(rho):
    stack = build_stack(ProblemParams(2, rho))
    t = np.geomspace(1e-3, 1e3, 100)
    np.testing.assert_allclose(psi(stack, t), psi_closed_n2(rho, t), rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_derivatives_against_mpmath(n):
    rho = 2.3
    stack = build_stack(ProblemParams(n, rho))
    for k in range(1, n + 1):
        for t in (0.3, 1.0, 2.7):
            assert phi_deriv(stack, k, t) == pytest.approx(_mp_deriv(rho, k, t), rel=1e-10, abs=1e-14)


def test_no_overflow_extremes():
    stack = build_stack(ProblemParams(5, 4.0))
    v = phi_deriv(stack, 5, np.array([1e-40, 1e40, 1e150]))
    assert np.all(np.isfinite(v))
    assert abs(v[2]) < 1e-300 or v[2] == 0


def test_zero_limits():
    stack = build_stack(ProblemParams(4, 2.0))
    assert phi_deriv(stack, 0, 0.0) == 1.0
    assert phi_deriv(stack, 2, 0.0) == -2.0      # phi = 1 - t^2 + ...
    assert phi_deriv(stack, 4, 0.0) == 24.0      # + t^4
    assert phi_deriv(stack, 1, 0.0) == 0.0
    with pytest.raises(DomainError):
        phi_deriv(build_stack(ProblemParams(3, 1.5)), 2, 0.0)


def test_extended_precision_agrees():
    p = ProblemParams(4, 2.5)
    with mpmath.workdps(40):
        ext = build_stack(p, precision="extended")
        v = phi_deriv(ext, 4, mpmath.mpf("0.8"))
    assert float(v) == pytest.approx(phi_deriv(build_stack(p), 4, 0.8), rel=1e-12)


def test_phi_rejects_negative():
    with pytest.raises(DomainError):
        phi(ProblemParams(2, 2.0), -1.0)


def test_build_stack_rejects():
    with pytest.raises(DomainError):
        build_stack(ProblemParams(2, 1.0))
    with pytest.raises(DomainError):
        build_stack(ProblemParams(2, 2.0), precision="quad")


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(1.05, 6.0), t=st.floats(0.05, 20.0), k=st.integers(1, 4))
def test_derivative_property(rho, t, k):
    stack = build_stack(ProblemParams(4, rho))
    exact = _mp_deriv(rho, k, t)
    scale = math.factorial(k) / t ** k
    assert abs(phi_deriv(stack, k, t) - exact) <= 1e-10 * scale


def test_phi_values():
    p2, p3 = ProblemParams(2, 2.0), ProblemParams(2, 3.0)
    assert phi(p2, 0.0) == 1.0
    assert phi(p2, 1.0) == 0.5
    assert phi(p3, 2.0) == pytest.approx(1 / 9, rel=1e-15)
    stack = build_stack(p3)
    assert phi_deriv(stack, 0, 2.0) == phi(p3, 2.0)


def test_q1_is_minus_rho_u():
    for rho in (1.5, 4.0):
        np.testing.assert_allclose(build_stack(ProblemParams(2, rho)).q[1], [0.0, -rho])


def test_third_derivative_central_difference():
    stack = build_stack(ProblemParams(3, 2.0))
    f = lambda t: 1 / (1 + t * t)
    # q_3 = 24u^2 - 24u^3 vanishes at u = 1: compare on the O(1) scale
    exact = phi_deriv(stack, 3, 1.0)
    assert exact == 0.0
    def d3(h):
        return (f(1 + 2 * h) - 2 * f(1 + h) + 2 * f(1 - h) - f(1 - 2 * h)) / (2 * h ** 3)

    best = math.inf
    for h in (4e-2, 2e-2, 1e-2, 5e-3):
        fd = (4 * d3(h / 2) - d3(h)) / 3
        best = min(best, abs(fd - exact))
    assert best < 1e-7


def test_psi_examples():
    s2 = build_stack(ProblemParams(2, 2.0))
    assert abs(psi(s2, math.sqrt(1 / 3))) < 1e-15
    assert psi(build_stack(ProblemParams(4, 3.0)), 100.0) > 0


def _slope(stack, k, lo, hi):
    t = np.geomspace(lo, hi, 9)
    y = np.abs(phi_deriv(stack, k, t))
    return np.polyfit(np.log(t), np.log(y), 1)[0]


def test_small_t_slope_example():
    stack = build_stack(ProblemParams(2, 1.5))
    assert _slope(stack, 2, 1e-6, 1e-4) == pytest.approx(-0.5, abs=0.01)


@pytest.mark.parametrize("n,rho", [(3, 1.5), (4, 2.5), (6, 3.7)])
def test_asymptotic_slopes(n, rho):
    stack = build_stack(ProblemParams(n, rho))
    for k in range(n + 1):
        at_zero = 0.0 if k == 0 else rho - k
        assert _slope(stack, k, 1e-6, 1e-4) == pytest.approx(at_zero, abs=0.01)
        assert _slope(stack, k, 1e4, 1e6) == pytest.approx(-rho - k, abs=0.01)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_finite_difference_of_lower_order(n):
    # central difference of phi^(k-1) in 40-digit arithmetic against phi^(k)
    rng = np.random.default_rng(n)
    with mpmath.workdps(40):
        for rho in (1.1, 1.5, 2.0, 3.0, 5.0):
            p = ProblemParams(n, rho)
            stack, ext = build_stack(p), build_stack(p, precision="extended")
            for t in 10 ** rng.uniform(-3, 3, 20):
                for k in range(1, n + 1):
                    tm = mpmath.mpf(t)
                    h = tm * mpmath.mpf("1e-8")
                    fd = (phi_deriv(ext, k - 1, tm + h) - phi_deriv(ext, k - 1, tm - h)) / (2 * h)
                    assert phi_deriv(stack, k, t) == pytest.approx(float(fd), rel=1e-6)


def test_stack_shared_across_threads():
    from concurrent.futures import ThreadPoolExecutor

    stack = build_stack(ProblemParams(5, 2.5))
    t = np.geomspace(0.01, 100, 50)
    ref = psi(stack, t)
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(lambda _: psi(stack, t), range(8)))
    for o in outs:
        np.testing.assert_array_equal(o, ref)
