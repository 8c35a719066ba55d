"""Sharp constants: P_n, the antiderivative family Phi_k, J(rho) and K_n(rho).

Integrating ``t**a * psi(t)`` with ``a = rho/2 + n - 1`` by parts ``n`` times
gives, with ``[a]_k = Gamma(a+1)/Gamma(a+1-k)``::

    int t**a psi dt = sum_{k<n} (-1)**(n+k) [a]_k t**(a-k) phi^(n-1-k)(t)
                      + Gamma(rho/2+n)/Gamma(rho/2+1) * arctan(t**(rho/2))

``Phi_k`` is the k-th term divided by ``(n-1)!``. The deficiency
``sum_{i in I} sum_k (Phi_k(tau_{i-1}) - Phi_k(tau_i))`` is what J(rho)
gains over ``P_n/(2 rho)``; every closed form here has a quadrature twin.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import quadrature
from .deriv_core import DerivativeStack, ProblemParams, build_stack, phi_deriv, psi
from .errors import DomainError, OracleFailure
from .sign_analysis import SignPattern, analyse, positive_roots

ORACLE_RTOL = 1e-8
ANTIDERIVATIVE_RTOL = 1e-6
EXTENDED_DPS = 40


def p_n(n: int, rho: float, *, allow_zero: bool = False) -> float:
    """Classical sharp constant P_n(rho); the sine branch applies for rho <= 1/2."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if rho < 0:
        raise DomainError("rho must be >= 0")
    prod = math.prod(1 + rho / (2 * k) for k in range(1, n))
    if rho == 0:
        if not allow_zero:
            raise DomainError("rho = 0 only as a limit; pass allow_zero=True")
        return 1.0
    if rho <= 0.5:
        return math.pi * rho / math.sin(math.pi * rho) * prod
    return math.pi * rho * prod


def half_full_integral(n: int, rho: float) -> float:
    """``P_n(rho) / (2 rho) = (pi/2) prod (1 + rho/2k)``."""
    return math.pi / 2 * math.prod(1 + rho / (2 * k) for k in range(1, n))


# ---------------------------------------------------------------- Phi family


def _mp(stack):
    if stack.precision == "extended":
        import mpmath

        return mpmath
    return None


def _gamma_coeff(stack: DerivativeStack, k: int):
    """``Gamma(rho/2+n) / (Gamma(n) Gamma(rho/2+n-k))``; for k = n uses Gamma(rho/2+1)."""
    n = stack.n
    h = stack.rho / 2
    mp = _mp(stack)
    lg = mp.loggamma if mp else math.lgamma
    ex = mp.exp if mp else math.exp
    low = h + n - k if k < n else h + 1
    return ex(lg(h + n) - lg(n) - lg(low))


def phi_cap(stack: DerivativeStack, k: int, t, *, form: str = "corrected"):
    """``Phi_{rho,k}(t)``.

    ``form='printed'`` reproduces the literal typeset version (derivative
    order ``n-k`` and ``arctan t**rho``), kept only so the discrepancy can be
    measured; it is not an antiderivative.
    """
    n = stack.n
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside 0..{n}")
    mp = _mp(stack)
    h = stack.rho / 2
    c = _gamma_coeff(stack, k)
    if mp:
        t = mp.mpf(t)
    if k == n:
        arg = t ** stack.rho if form == "printed" else t ** h
        return c * (mp.atan(arg) if mp else np.arctan(arg))
    order = n - k if form == "printed" else n - 1 - k
    power = h + n - k - 1
    if np.any(np.asarray(float(t) if mp else t) == 0):
        if order >= 1 and stack.params.rho < order and power + stack.params.rho - order <= 0:
            raise DomainError("Phi has a non-removable singularity at t = 0")
        # t**power * phi^(order)(t) = O(t**(3 rho/2 - 1)) -> 0 for rho > 1
        if mp or np.ndim(t) == 0:
            return 0 * c
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = phi_cap(stack, k, t[pos], form=form)
        return out
    return (-1) ** (n + k) * c * t ** power * phi_deriv(stack, order, t)


def phi_cap_sum(stack: DerivativeStack, t, *, form: str = "corrected"):
    return sum(phi_cap(stack, k, t, form=form) for k in range(stack.n + 1))


@dataclass
class ResidualReport:
    max_rel: float
    points: list[float]
    residuals: list[float]

    def passed(self, tol: float = ANTIDERIVATIVE_RTOL) -> bool:
        return self.max_rel < tol


def _sample_points(pattern: SignPattern | None, count: int = 24) -> np.ndarray:
    if pattern is None:
        return np.geomspace(0.05, 20.0, count)
    lo = pattern.zeros[0] / 20
    hi = pattern.zeros[-1] * 20
    pts = np.geomspace(lo, hi, count)
    keep = np.ones(pts.shape, dtype=bool)
    for z in pattern.zeros:
        keep &= np.abs(pts / z - 1) > 0.03
    return pts[keep]


def antiderivative_check(stack: DerivativeStack, pattern: SignPattern | None = None, *,
                         points=None, form: str = "corrected") -> ResidualReport:
    """Compare ``d/dt sum_k Phi_k`` (numerical differentiation) with ``t**a psi / (n-1)!``.

    The sum is differentiated by mpmath's finite-difference ``diff`` at
    extended working precision, which removes the cancellation that double
    precision suffers once ``sum_k Phi_k`` is large against its derivative.
    Points within 3% of a zero of psi are skipped because the target vanishes.
    """
    import mpmath

    params = stack.params
    n = params.n
    pts = np.asarray(points, dtype=float) if points is not None else _sample_points(pattern)
    res = []
    with mpmath.workdps(EXTENDED_DPS):
        ext = build_stack(params, precision="extended")
        a = ext.rho / 2 + n - 1
        F = lambda x: phi_cap_sum(ext, x, form=form)  # noqa: E731
        for t in pts:
            t = mpmath.mpf(float(t))
            fd = mpmath.diff(F, t)
            target = t ** a * psi(ext, t) / math.factorial(n - 1)
            res.append(float(abs(fd - target) / abs(target)))
    return ResidualReport(max(res) if res else 0.0, [float(p) for p in pts], res)


def deficiency(stack: DerivativeStack, pattern: SignPattern, *, form: str = "corrected",
               zeros=None):
    """``sum_{i in I} sum_k (Phi_k(tau_{i-1}) - Phi_k(tau_i))`` with ``tau_0 = 0``.

    ``zeros`` may supply higher-precision zeros (extended mode).
    """
    ends = (0.0,) + tuple(zeros if zeros is not None else pattern.zeros)
    total = 0
    for i in pattern.index_set:
        a, b = ends[i - 1], ends[i]
        va = phi_cap_sum(stack, a, form=form)
        vb = phi_cap_sum(stack, b, form=form)
        d = va - vb
        if not math.isfinite(float(d)):
            raise OracleFailure("deficiency_finite", math.inf, 0.0)
        total = total + d
    return total


def _integrand(stack, a_pow, scale):
    def f(t):
        return t ** a_pow * psi(stack, t) / scale

    return f


def oracle_dminus_integral(stack: DerivativeStack, pattern: SignPattern,
                           rtol: float = quadrature.DEFAULT_RTOL) -> float:
    """``(1/(n-1)!) int_{D_-} t**a psi dt`` by adaptive quadrature."""
    n, rho = stack.n, stack.params.rho
    a_pow = rho / 2 + n - 1
    f = _integrand(stack, a_pow, math.factorial(n - 1))
    total = 0.0
    for lo, hi in pattern.d_minus:
        spec = quadrature.IntegrationSpec(
            f, lo, hi, left_exponent=(1.5 * rho - 1) if lo == 0 else None, rtol=rtol, limit=400
        )
        total += quadrature.integrate(spec).value
    return total


def oracle_full_integral(stack: DerivativeStack, pattern: SignPattern | None = None,
                         rtol: float = quadrature.DEFAULT_RTOL) -> float:
    """``(1/(n-1)!) int_0^inf t**a psi dt`` with the tail compactified."""
    n, rho = stack.n, stack.params.rho
    a_pow = rho / 2 + n - 1
    f = _integrand(stack, a_pow, math.factorial(n - 1))
    zeros = pattern.zeros if pattern is not None else tuple(z.tau for z in positive_roots(stack))
    scale = max(zeros) if zeros else 1.0
    spec = quadrature.IntegrationSpec(
        f, 0.0, math.inf, left_exponent=1.5 * rho - 1, decay_exponent=rho / 2,
        scale=scale, rtol=rtol, limit=400, points=tuple(zeros),
    )
    return quadrature.integrate(spec).value


# ---------------------------------------------------------------- J and K


@lru_cache(maxsize=256)
def pipeline(n: int, rho: float) -> tuple[DerivativeStack, SignPattern]:
    params = ProblemParams(n, rho).require_main()
    stack = build_stack(params)
    return stack, analyse(stack)


def deficiency_value(params: ProblemParams, precision: str = "double") -> float:
    params.require_main()
    stack, pattern = pipeline(params.n, params.rho)
    if precision == "double":
        return float(deficiency(stack, pattern))
    import mpmath

    with mpmath.workdps(EXTENDED_DPS):
        ext = build_stack(params, precision="extended")
        zs = positive_roots(ext, rtol=mpmath.mpf(10) ** (-(EXTENDED_DPS - 5)))
        if len(zs) != len(pattern.zeros):
            raise OracleFailure("extended_root_count", abs(len(zs) - len(pattern.zeros)), 0)
        return float(deficiency(ext, pattern, zeros=[z.tau for z in zs]))


def j_sup(params: ProblemParams, precision: str = "double") -> float:
    """``J(rho) = P_n/(2 rho) + deficiency``."""
    params.require_main()
    if precision == "extended":
        import mpmath

        with mpmath.workdps(EXTENDED_DPS):
            half = mpmath.pi / 2 * mpmath.fprod(1 + mpmath.mpf(params.rho) / (2 * k)
                                                for k in range(1, params.n))
            return float(half + deficiency_value(params, "extended"))
    return half_full_integral(params.n, params.rho) + deficiency_value(params)


def k_n(params: ProblemParams, precision: str = "double", *, check: bool = True) -> float:
    """Canonical ``K_n(rho) = 2 rho J(rho)``."""
    k = 2 * params.rho * j_sup(params, precision)
    if check:
        p = p_n(params.n, params.rho)
        if not p < k:
            raise OracleFailure("bound_lower", (p - k) / p, 0.0)
        if not k <= math.e ** (params.n - 1) * p:
            raise OracleFailure("bound_upper", k / (math.e ** (params.n - 1) * p) - 1, 0.0)
    return k


def k_estimate_printed(params: ProblemParams) -> float:
    """``P_n + deficiency`` (no ``2 rho`` on the sum), reported for comparison only."""
    return p_n(params.n, params.rho) + deficiency_value(params)


def k2_closed(rho: float) -> float:
    """Closed form of J(rho) for n = 2.

    With ``x = (rho-1)/(rho+1) = tau**rho``::

        (rho/2+1) pi/2 + (rho+1)**2/(4 rho) x**1.5
          + (rho/2+1) [ (rho+1)/(2 rho) x**0.5 - arctan(x**0.5) ]

    The arctangent argument is ``tau**(rho/2) = sqrt(x)``.
    """
    if rho <= 1:
        raise DomainError("k2_closed needs rho > 1")
    x = (rho - 1) / (rho + 1)
    h = rho / 2 + 1
    return h * math.pi / 2 + (rho + 1) ** 2 / (4 * rho) * x ** 1.5 + h * (
        (rho + 1) / (2 * rho) * math.sqrt(x) - math.atan(math.sqrt(x))
    )


def k2_closed_printed(rho: float) -> float:
    """The same expression with ``arctan(x)`` in place of ``arctan(sqrt(x))``."""
    if rho <= 1:
        raise DomainError("k2_closed needs rho > 1")
    x = (rho - 1) / (rho + 1)
    h = rho / 2 + 1
    return h * math.pi / 2 + (rho + 1) ** 2 / (4 * rho) * x ** 1.5 + h * (
        (rho + 1) / (2 * rho) * math.sqrt(x) - math.atan(x)
    )


def dminus_integral_n2_closed(rho: float) -> float:
    """``int_0^tau t**(rho/2+1) psi dt`` for n = 2."""
    return half_full_integral(2, rho) - k2_closed(rho)


def type_multiplier(params: ProblemParams) -> float:
    """Factor between the types of T and M: P_n for rho <= 1, K_n above."""
    if params.rho <= 1:
        return p_n(params.n, params.rho)
    return k_n(params)


# ---------------------------------------------------------------- report


@dataclass
class ConstantsReport:
    n: int
    rho: float
    p_n: float
    deficiency: float
    j_sup: float
    k_n: float
    upper_bound: float
    k_estimate_printed: float
    zeros: list[float]
    index_set: list[int]
    oracle_residuals: dict[str, float] = field(default_factory=dict)
    oracle_tolerances: dict[str, float] = field(default_factory=dict)
    precision: str = "double"

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.oracle_residuals.items()
                if not (v < self.oracle_tolerances.get(k, ORACLE_RTOL))]

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def constants_report(params: ProblemParams, *, tol: float = ORACLE_RTOL,
                     precision: str = "double") -> ConstantsReport:
    """Assemble every constant for ``(n, rho)`` together with its oracle residuals."""
    params.require_main()
    n, rho = params.n, params.rho
    stack, pattern = pipeline(n, rho)
    p = p_n(n, rho)
    defi = deficiency_value(params, precision)
    half = half_full_integral(n, rho)
    j = j_sup(params, precision)
    k = 2 * rho * j
    upper = math.e ** (n - 1) * p
    res: dict[str, float] = {}
    tols: dict[str, float] = {}

    full = oracle_full_integral(stack, pattern)
    res["full_integral"] = abs(full - half) / half
    tols["full_integral"] = tol
    dm = oracle_dminus_integral(stack, pattern)
    res["dminus_integral"] = abs(dm + defi) / abs(defi)
    tols["dminus_integral"] = tol
    res["antiderivative"] = antiderivative_check(stack, pattern).max_rel
    tols["antiderivative"] = ANTIDERIVATIVE_RTOL
    if n == 2:
        res["k2_closed"] = abs(j - k2_closed(rho)) / k2_closed(rho)
        tols["k2_closed"] = 1e-9
    # bound chain encoded as residuals: positive part of the violation
    res["bound_lower"] = max(0.0, (p - k) / p) if k > p else 1.0
    tols["bound_lower"] = 1e-300
    res["bound_upper"] = max(0.0, k / upper - 1)
    tols["bound_upper"] = 1e-300
    res["deficiency_positive"] = 0.0 if defi > 0 else 1.0
    tols["deficiency_positive"] = 1e-300
    return ConstantsReport(
        n=n, rho=rho, p_n=p, deficiency=float(defi), j_sup=float(j), k_n=float(k),
        upper_bound=upper, k_estimate_printed=p + float(defi),
        zeros=list(pattern.zeros), index_set=list(pattern.index_set),
        oracle_residuals=res, oracle_tolerances=tols, precision=precision,
    )
