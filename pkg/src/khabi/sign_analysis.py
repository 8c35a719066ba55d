"""Positive zeros of psi and the decomposition of (0, inf) into D_- and D_+.

The zeros of psi on t > 0 are the images ``tau = x**(1/rho)`` of the positive
roots of ``q_n(x)/x``. Those roots are isolated by the derivative cascade:
the critical points of a polynomial split the search interval into monotone
pieces, each of which holds at most one root. The number found (counted with
parity of multiplicity) is checked against Descartes' rule of signs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deriv_core import DerivativeStack, psi
from .errors import DomainError, RootIsolationError, SignPatternError

ROOT_RTOL = 1e-13


@dataclass(frozen=True)
class PsiZero:
    tau: float
    x: float
    tangential: bool = False


@dataclass(frozen=True)
class SignPattern:
    zeros: tuple[float, ...]
    tangential: tuple[bool, ...]
    index_set: tuple[int, ...]
    d_minus: tuple[tuple[float, float], ...]
    d_plus: tuple[tuple[float, float], ...]

    @property
    def endpoints(self) -> tuple[float, ...]:
        """``(tau_0 = 0, tau_1, ..., tau_m)``."""
        return (0.0,) + self.zeros

    def interval(self, i: int) -> tuple[float, float]:
        e = self.endpoints
        return e[i - 1], e[i]

    def in_d_minus(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=bool)
        for a, b in self.d_minus:
            out |= (t > a) & (t < b)
        return out

    @property
    def sup_d_minus(self) -> float:
        return max(b for _, b in self.d_minus)

    def as_dict(self) -> dict:
        return {
            "zeros": list(self.zeros),
            "tangential": list(self.tangential),
            "index_set": list(self.index_set),
            "d_minus": [list(iv) for iv in self.d_minus],
            "d_plus": [[a, b if math.isfinite(b) else "inf"] for a, b in self.d_plus],
        }


# ---------------------------------------------------------------- polynomials


def _horner(c, x):
    acc = 0 * x
    for a in reversed(c):
        acc = acc * x + a
    return acc


def _deriv(c):
    return [j * c[j] for j in range(1, len(c))]


def descartes_bound(c) -> int:
    signs = [1 if a > 0 else -1 for a in c if a != 0]
    return sum(1 for s0, s1 in zip(signs, signs[1:]) if s0 != s1)


def cauchy_upper(c) -> float:
    lead = abs(c[-1])
    return 1.0 + max(float(abs(a) / lead) for a in c[:-1]) if len(c) > 1 else 0.0


def _refine(c, dc, lo, hi, flo, rtol, max_iter=400):
    """Safeguarded Newton on a bracket with a sign change."""
    x = (lo + hi) / 2
    for _ in range(max_iter):
        if hi - lo <= rtol * abs(hi):
            break
        fx = _horner(c, x)
        if fx == 0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        d = _horner(dc, x)
        step_ok = False
        if d != 0:
            xn = x - fx / d
            if lo < xn < hi:
                x = xn
                step_ok = True
        if not step_ok:
            x = (lo + hi) / 2
    return (lo + hi) / 2 if hi - lo > rtol * abs(hi) else x if lo <= x <= hi else (lo + hi) / 2


def _scale(c, x):
    return sum(abs(a) * abs(x) ** j for j, a in enumerate(c))


def _roots_in(c, lo, hi, rtol):
    """Roots of polynomial ``c`` in the open interval (lo, hi).

    Returns a list of ``(x, tangential)`` pairs.
    """
    deg = len(c) - 1
    if deg <= 0:
        return []
    if deg == 1:
        x = -c[0] / c[1]
        return [(x, False)] if lo < x < hi else []
    crit = [x for x, _ in _roots_in(_deriv(c), lo, hi, rtol)]
    knots = [lo] + sorted(crit) + [hi]
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        fa, fb = _horner(c, a), _horner(c, b)
        if fa == 0 or fb == 0:
            continue
        if (fa > 0) != (fb > 0):
            out.append((_refine(c, _deriv(c), a, b, fa, rtol), False))
    for x in crit:
        fx = _horner(c, x)
        if abs(fx) <= 64 * 2.2e-16 * _scale(c, x):
            left = _horner(c, x * (1 - 1e-6))
            right = _horner(c, x * (1 + 1e-6))
            if (left > 0) == (right > 0):
                out.append((x, True))
            elif not any(abs(r - x) <= 1e-9 * abs(x) for r, _ in out):
                out.append((x, False))
    return sorted(out)


def positive_roots(stack: DerivativeStack, rtol: float = ROOT_RTOL) -> list[PsiZero]:
    """Certified positive zeros of psi, ascending in tau."""
    if stack.params.rho <= 1:
        raise DomainError("sign analysis needs rho > 1")
    c = list(stack.q[stack.n])
    # q_n(0) = 0; strip every vanishing low-order coefficient (roots at x = 0)
    while c and c[0] == 0:
        c = c[1:]
    if len(c) <= 1:
        return []
    lead = c[-1]
    B = cauchy_upper(c)
    found = _roots_in(c, 0 * lead, B * (1 + 1e-12) + 0 * lead, rtol)
    found = [(x, tg) for x, tg in found if x > 0]
    V = descartes_bound(c)
    count = sum(2 if tg else 1 for _, tg in found)
    if count > V or (V - count) % 2:
        raise RootIsolationError(
            f"found {count} positive roots (with multiplicity parity) but Descartes bound is {V}"
        )
    rho = stack.rho
    return [PsiZero(tau=x ** (1 / rho), x=x, tangential=tg) for x, tg in found]


def sign_census(stack: DerivativeStack, lo: float = 1e-6, hi: float = 1e6, points: int = 10 ** 6,
                chunk: int = 200_000) -> int:
    """Number of sign changes of psi on a log grid (brute-force scan)."""
    edges = np.geomspace(lo, hi, points)
    last = 0.0
    changes = 0
    for start in range(0, points, chunk):
        v = np.sign(psi(stack, edges[start:start + chunk]))
        v = v[v != 0]
        if v.size == 0:
            continue
        if last != 0 and v[0] != last:
            changes += 1
        changes += int(np.count_nonzero(v[1:] != v[:-1]))
        last = v[-1]
    return changes


def sign_pattern(stack: DerivativeStack, roots: list[PsiZero]) -> SignPattern:
    """Signs of psi between consecutive zeros; D_- collects the negative intervals."""
    taus = [float(z.tau) for z in roots]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise SignPatternError("zeros are not strictly increasing")
    ends = [0.0] + taus
    index_set = []
    d_minus = []
    signs = []
    for i in range(1, len(ends)):
        a, b = ends[i - 1], ends[i]
        mid = math.sqrt(a * b) if a > 0 else b / 2
        s = float(psi(stack, mid))
        if s == 0:
            raise SignPatternError(f"psi vanishes at interval midpoint {mid}")
        signs.append(s > 0)
        if s < 0:
            index_set.append(i)
            d_minus.append((a, b))
    tail = 2 * ends[-1] + 1.0
    if float(psi(stack, tail)) <= 0:
        raise SignPatternError("psi is not positive beyond the last zero")
    signs.append(True)
    for i, z in enumerate(roots):
        if z.tangential and signs[i] != signs[i + 1]:
            raise SignPatternError(f"tangential zero at {z.tau} separates opposite signs")
        if not z.tangential and signs[i] == signs[i + 1]:
            raise SignPatternError(f"simple zero at {z.tau} without sign change (missed root?)")
    if not d_minus:
        raise SignPatternError("D_- is empty")
    # D_+ as closed pieces of the complement
    d_plus = []
    cursor = 0.0
    for a, b in d_minus:
        if a > cursor:
            d_plus.append((cursor, a))
        cursor = b
    d_plus.append((cursor, math.inf))
    merged = []
    for a, b in d_plus:
        if merged and merged[-1][1] == a:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return SignPattern(
        zeros=tuple(taus),
        tangential=tuple(z.tangential for z in roots),
        index_set=tuple(index_set),
        d_minus=tuple(d_minus),
        d_plus=tuple(merged),
    )


def analyse(stack: DerivativeStack, rtol: float = ROOT_RTOL) -> SignPattern:
    return sign_pattern(stack, positive_roots(stack, rtol))
