"""Gegenbauer functions and the M/T ratio of Dahlberg's subharmonic extremals.

``C^gamma_rho`` (gamma = n-1) is obtained from ``C^1_{rho+n-2}(cos t) =
sin(nu t)/sin t`` (nu = rho+n-1) by ``n-2`` derivatives in ``x = cos t``
using ``d/dx C^lam_m = 2 lam C^{lam+1}_{m-1}``. Each derivative is applied
symbolically to terms ``c * trig(nu t) * cos(t)**a / sin(t)**b`` so no
numerical differentiation is needed. Near ``t = 0`` the quotient form
cancels badly and the hypergeometric series is used instead.

Two normalizations are carried: ``"ode"`` (value ``Gamma(rho+2g)/(Gamma(2g)
Gamma(rho+1))`` at x = 1) and ``"solution"`` (value 1 at x = 1). The ratio
``vartheta`` does not depend on the choice.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from . import quadrature
from .constants import k_n, p_n
from .deriv_core import ProblemParams
from .errors import DomainError, RootIsolationError

MODES = ("ode", "solution")
THETA_RTOL = 1e-12
SERIES_SWITCH = 0.5   # use the series when nu * theta is below this
CANCELLATION_LIMIT = 1e4


def sphere_area(k: int) -> float:
    """Area of the unit sphere ``S_k`` in ``R^{k+1}``: ``2 pi^{(k+1)/2} / Gamma((k+1)/2)``."""
    if k < 1:
        raise DomainError("sphere dimension must be >= 1")
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def gegenbauer_value_at_one(gamma: float, rho: float) -> float:
    """``C^gamma_rho(1) = Gamma(rho+2 gamma) / (Gamma(2 gamma) Gamma(rho+1))``."""
    return math.exp(math.lgamma(rho + 2 * gamma) - math.lgamma(2 * gamma) - math.lgamma(rho + 1))


def gegenbauer_c1(nu: float, theta):
    """``sin((nu+1) theta) / ((nu+1) sin theta)``, equal to 1 at theta = 0."""
    theta = np.asarray(theta, dtype=float)
    w = nu + 1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(theta == 0, 1.0, np.sin(w * theta) / (w * np.sin(theta)))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _terms(n: int, rho: float) -> tuple[tuple[str, int, int, float], ...]:
    """Terms ``(trig, a, b, c)`` of ``C^{n-1}_rho(cos t)`` (ode normalization)."""
    nu = rho + n - 1
    terms = {("sin", 0, 1): 1.0}
    for _ in range(n - 2):
        nxt: dict[tuple[str, int, int], float] = {}

        def add(key, val):
            nxt[key] = nxt.get(key, 0.0) + val

        for (trig, a, b), c in terms.items():
            # d/dx = -(1/sin t) d/dt
            if trig == "sin":
                add(("cos", a, b + 1), -c * nu)
            else:
                add(("sin", a, b + 1), c * nu)
            if a:
                add((trig, a - 1, b), c * a)
            if b:
                add((trig, a + 1, b + 2), c * b)
        terms = nxt
    scale = 1.0 / (2 ** (n - 2) * math.factorial(n - 2))
    return tuple((trig, a, b, c * scale) for (trig, a, b), c in sorted(terms.items()) if c != 0)


def gegenbauer_terms(n: int, rho: float):
    """Symbolic expansion of ``C^{n-1}_rho(cos t)`` as ``[(trig, a, b, coeff), ...]``."""
    return list(_terms(n, float(rho)))


def _closed(n, rho, theta):
    """Sum of the symbolic terms and the sum of their magnitudes."""
    nu = rho + n - 1
    s, c = np.sin(theta), np.cos(theta)
    out = np.zeros_like(theta)
    mag = np.zeros_like(theta)
    for trig, a, b, coef in _terms(n, rho):
        f = np.sin(nu * theta) if trig == "sin" else np.cos(nu * theta)
        term = coef * f * c ** a / s ** b
        out += term
        mag += np.abs(term)
    return out, mag


def _series(n, rho, theta):
    lam = n - 1
    z = np.sin(theta / 2) ** 2
    return gegenbauer_value_at_one(lam, rho) * special.hyp2f1(-rho, rho + 2 * lam, lam + 0.5, z)


def gegenbauer(n: int, rho: float, theta, mode: str = "ode"):
    """``C^{n-1}_rho(cos theta)`` for theta in [0, pi)."""
    if n < 2:
        raise DomainError("n must be >= 2")
    if mode not in MODES:
        raise DomainError(f"unknown normalization mode {mode!r}")
    scalar = np.ndim(theta) == 0
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(theta < 0) or np.any(theta >= math.pi):
        raise DomainError("theta must lie in [0, pi)")
    nu = rho + n - 1
    near = nu * theta < SERIES_SWITCH
    out = np.empty_like(theta)
    if near.any():
        out[near] = _series(n, rho, theta[near])
    if (~near).any():
        val, mag = _closed(n, float(rho), theta[~near])
        # heavy cancellation (e.g. integer rho near theta = pi): fall back to the series
        bad = mag > CANCELLATION_LIMIT * np.abs(val)
        if bad.any():
            val[bad] = _series(n, rho, theta[~near][bad])
        out[~near] = val
    if mode == "solution":
        out = out / gegenbauer_value_at_one(n - 1, rho)
    return float(out[0]) if scalar else out


def ode_residual(n: int, rho: float, theta: float) -> float:
    """Relative residual of the Gegenbauer equation at ``x = cos theta``.

    With ``x = cos theta`` the equation reads
    ``f'' + 2 gamma cot(theta) f' + rho (rho + 2 gamma) f = 0`` in theta;
    derivatives are Richardson-extrapolated central differences with a step
    scaled to the frequency.
    """
    gam = n - 1
    h = 2e-3 / (rho + n - 1)
    f0 = gegenbauer(n, rho, theta)

    def diffs(h):
        fp, fm = gegenbauer(n, rho, theta + h), gegenbauer(n, rho, theta - h)
        return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h ** 2

    (a1, a2), (b1, b2) = diffs(h), diffs(h / 2)
    d1, d2 = (4 * b1 - a1) / 3, (4 * b2 - a2) / 3
    cot = math.cos(theta) / math.sin(theta)
    lam = rho * (rho + 2 * gam)
    res = d2 + 2 * gam * cot * d1 + lam * f0
    return abs(res) / (abs(d2) + abs(2 * gam * cot * d1) + abs(lam * f0))


def theta_star(n: int, rho: float) -> float:
    """Smallest positive zero of ``theta -> C^{n-1}_rho(cos theta)``."""
    if rho <= 0:
        raise DomainError("rho must be positive")
    nu = rho + n - 1
    count = int(16 * nu) + 1
    grid = np.linspace(0.0, math.pi, count + 1)[1:-1]
    vals = gegenbauer(n, rho, grid, mode="solution")
    idx = np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))
    if vals[0] <= 0 or idx.size == 0:
        raise RootIsolationError(f"no sign change of C^{n - 1}_{rho} on (0, pi)")
    i = int(idx[0])
    return optimize.brentq(lambda t: gegenbauer(n, rho, t, mode="solution"), grid[i], grid[i + 1],
                           xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def vartheta_u(n: int, rho: float, mode: str = "ode", rtol: float = 1e-13) -> float:
    """``C(1) A(S_{2n-1})/A(S_{2n-2}) / int_0^{theta*} C(cos t) sin^{2n-2} t dt`` (one mode throughout)."""
    if rho <= 1:
        raise DomainError("vartheta_u needs rho > 1")
    ts = theta_star(n, rho)
    c1 = gegenbauer_value_at_one(n - 1, rho) if mode == "ode" else 1.0
    integral = quadrature.quad(lambda t: gegenbauer(n, rho, t, mode) * math.sin(t) ** (2 * n - 2),
                               0.0, ts, rtol=rtol)
    return c1 * sphere_area(2 * n - 1) / sphere_area(2 * n - 2) / integral


# ---------------------------------------------------------------- closed forms


def vartheta_closed_n2(rho: float) -> float:
    """``P_2(rho) / sin(pi/(rho+1))``."""
    return p_n(2, rho) / math.sin(math.pi / (rho + 1))


def vartheta_closed_n2_printed(rho: float) -> float:
    """``P_2(rho) (rho+1) / sin(pi/(rho+1))`` as typeset (normalizations mixed)."""
    return p_n(2, rho) * (rho + 1) / math.sin(math.pi / (rho + 1))


def m_factor(rho: float, theta: float) -> float:
    return ((rho + 3) * (rho + 4) * math.sin(rho * theta) - 2 * rho * (rho + 4) * math.sin((rho + 2) * theta)
            + rho * (rho + 1) * math.sin((rho + 4) * theta))


def vartheta_closed_n3(rho: float, coefficient: float = 4.0, theta: float | None = None) -> float:
    """``c P_3(rho) (rho+1)(rho+3) / m(rho, theta*)``; ``c = 4`` follows from the sine integrals."""
    th = theta_star(3, rho) if theta is None else theta
    return coefficient * p_n(3, rho) * (rho + 1) * (rho + 3) / m_factor(rho, th)


def best_fit_coefficient_n3(rho: float, vartheta: float | None = None) -> tuple[float, Fraction]:
    """``vartheta * m / (P_3 (rho+1)(rho+3))`` and its nearest small rational."""
    v = vartheta_u(3, rho) if vartheta is None else vartheta
    c = v * m_factor(rho, theta_star(3, rho)) / (p_n(3, rho) * (rho + 1) * (rho + 3))
    return c, Fraction(c).limit_denominator(12)


# ---------------------------------------------------------------- comparison


@dataclass
class GegenbauerEval:
    gamma: float
    rho: float
    theta_star: float
    a_rho: float
    mode: str = "ode"


@dataclass
class DahlbergReport:
    n: int
    rho: float
    theta_star: float
    vartheta_numeric: float
    vartheta_solution_mode: float
    normalization_residual: float
    vartheta_closed: float | None
    closed_residual: float | None
    vartheta_closed_printed: float | None
    best_fit_coefficient: float | None
    best_fit_rational: str | None
    theta_star_approx: float | None
    e_pow_P: float
    k_n: float
    exceeds_e_pow_P: bool
    exceeds_k_n: bool

    def as_dict(self) -> dict:
        return asdict(self)


def gegenbauer_eval(n: int, rho: float, mode: str = "ode") -> GegenbauerEval:
    ts = theta_star(n, rho)
    return GegenbauerEval(gamma=n - 1, rho=rho, theta_star=ts, a_rho=math.cos(ts), mode=mode)


def compare(n: int, rho: float, constants=None) -> DahlbergReport:
    """Evaluate vartheta(u_rho) and test it against e^{n-1} P_n and K_n."""
    params = ProblemParams(n, rho).require_main()
    v = vartheta_u(n, rho, "ode")
    vs = vartheta_u(n, rho, "solution")
    ts = theta_star(n, rho)
    kn = constants.k_n if constants is not None else k_n(params, check=False)
    closed = printed = fit = approx = None
    rational = None
    if n == 2:
        closed = vartheta_closed_n2(rho)
        printed = vartheta_closed_n2_printed(rho)
    elif n == 3:
        closed = vartheta_closed_n3(rho, 4.0, ts)
        printed = vartheta_closed_n3(rho, 3.0, ts)
        fit, frac = best_fit_coefficient_n3(rho, v)
        rational = str(frac)
        approx = math.pi / (rho + 2)
    epp = math.e ** (n - 1) * p_n(n, rho)
    return DahlbergReport(
        n=n, rho=rho, theta_star=ts, vartheta_numeric=v, vartheta_solution_mode=vs,
        normalization_residual=abs(v - vs) / v,
        vartheta_closed=closed, closed_residual=None if closed is None else abs(closed - v) / v,
        vartheta_closed_printed=printed, best_fit_coefficient=fit, best_fit_rational=rational,
        theta_star_approx=approx, e_pow_P=epp, k_n=kn,
        exceeds_e_pow_P=bool(v > epp), exceeds_k_n=bool(v >= kn),
    )
