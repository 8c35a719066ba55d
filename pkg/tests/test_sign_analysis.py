import math

import numpy as np
import pytest

from khabi.deriv_core import ProblemParams, build_stack, psi
from khabi.errors import DomainError
from khabi.sign_analysis import (
    analyse,
    cauchy_upper,
    descartes_bound,
    positive_roots,
    sign_census,
)

GRID = [(n, rho) for n in range(2, 7) for rho in (1.1, 1.5, 2.0, 3.0, 5.0)]


def _numpy_taus(stack):
    roots = np.polynomial.polynomial.polyroots(stack.q[stack.n])
    real = roots[(abs(roots.imag) < 1e-9) & (roots.real > 1e-12)].real
    return np.sort(real ** (1 / stack.rho))


def test_descartes_and_cauchy():
    assert descartes_bound([1, -3, 2]) == 2
    assert descartes_bound([1, 2, 3]) == 0
    assert cauchy_upper([2, -3, 1]) == 4.0


@pytest.mark.parametrize("n,rho", GRID)
def test_roots_match_companion_matrix(n, rho):
    stack = build_stack(ProblemParams(n, rho))
    mine = [z.tau for z in positive_roots(stack)]
    np.testing.assert_allclose(mine, _numpy_taus(stack), rtol=1e-9)
    for tau in mine:
        # psi vanishes at the root relative to its size nearby
        assert abs(psi(stack, tau)) < 1e-8 * abs(psi(stack, tau * 1.1))


@pytest.mark.parametrize("rho", [1.0001, 1.1, 2.0, 3.0, 7.5])
def test_n2_root_closed_form(rho):
    stack = build_stack(ProblemParams(2, rho))
    (z,) = positive_roots(stack)
    assert z.tau == pytest.approx(((rho - 1) / (rho + 1)) ** (1 / rho), rel=1e-12)


def test_n2_rho3_root():
    (z,) = positive_roots(build_stack(ProblemParams(2, 3.0)))
    assert z.tau == pytest.approx(0.5 ** (1 / 3), rel=1e-14)


def test_pattern_interior_interval():
    pat = analyse(build_stack(ProblemParams(3, 3.0)))
    assert pat.index_set == (2,)
    a, b = pat.d_minus[0]
    assert a == pytest.approx(0.402, abs=1e-3) and b == pytest.approx(1.154, abs=1e-3)
    assert pat.d_plus[0] == (0.0, a)
    assert math.isinf(pat.d_plus[-1][1])


@pytest.mark.parametrize("n,rho", GRID)
def test_pattern_signs(n, rho):
    stack = build_stack(ProblemParams(n, rho))
    pat = analyse(stack)
    assert pat.d_minus
    for a, b in pat.d_minus:
        mid = math.sqrt(a * b) if a > 0 else b / 2
        assert psi(stack, mid) < 0
    for a, b in pat.d_plus:
        probe = (a + 1.0) * 2 if math.isinf(b) else (math.sqrt(a * b) if a > 0 else b / 2)
        assert psi(stack, probe) > 0


@pytest.mark.parametrize("n,rho", [(2, 2.0), (4, 2.0), (5, 4.0), (6, 5.0)])
def test_census_matches_root_count(n, rho):
    stack = build_stack(ProblemParams(n, rho))
    pat = analyse(stack)
    lo = min(1e-6, pat.zeros[0] / 10)
    assert sign_census(stack, lo=lo) == len(pat.zeros)


def test_rejects_low_order():
    with pytest.raises(DomainError):
        positive_roots(build_stack(ProblemParams(2, 2.0)).__class__(ProblemParams(2, 0.9), ()))


def test_as_dict_roundtrip():
    d = analyse(build_stack(ProblemParams(2, 2.0))).as_dict()
    assert d["index_set"] == [1]
    assert d["d_plus"][-1][1] == "inf"


@pytest.mark.parametrize("n,rho", GRID)
def test_completeness_on_dense_grid(n, rho):
    stack = build_stack(ProblemParams(n, rho))
    pat = analyse(stack)
    assert sign_census(stack, lo=1e-6, hi=1e6, points=10 ** 6) == len(pat.zeros)
    for tau in pat.zeros:
        assert abs(psi(stack, tau)) < 1e-10
    assert math.isfinite(max(pat.zeros))


def test_n3_rho2_brute_force_scan():
    stack = build_stack(ProblemParams(3, 2.0))
    t = np.geomspace(1e-4, 1e4, 10 ** 6)
    s = np.sign(psi(stack, t))
    idx = np.flatnonzero(s[1:] != s[:-1])
    mine = [z.tau for z in positive_roots(stack)]
    assert len(idx) == len(mine)
    for i, tau in zip(idx, mine):
        assert t[i] <= tau <= t[i + 1]


def test_n2_rho2_pattern():
    pat = analyse(build_stack(ProblemParams(2, 2.0)))
    assert pat.index_set == (1,)
    (a, b), = pat.d_minus
    assert a == 0.0 and b == pytest.approx(math.sqrt(1 / 3), rel=1e-14)
    assert pat.d_plus == ((b, math.inf),)


def test_random_points_match_pattern():
    stack = build_stack(ProblemParams(5, 4.0))
    pat = analyse(stack)
    rng = np.random.default_rng(7)
    t = 10 ** rng.uniform(-3, 3, 1000)
    neg = np.array([pat.in_d_minus(x) for x in t])
    np.testing.assert_array_equal(neg, psi(stack, t) < 0)
