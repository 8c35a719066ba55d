"""Derivatives of ``phi(t) = 1 / (1 + t**rho)`` through a polynomial recurrence.

With ``u = t**rho`` every derivative has the form::

    phi^(k)(t) = q_k(u) / (t**k * (1 + u)**(k + 1))

where ``q_0 = 1`` and

    q_{k+1}(u) = rho*u*(1+u)*q_k'(u) - k*(1+u)*q_k(u) - (k+1)*rho*u*q_k(u).

This follows from differentiating the quotient once and clearing the common
denominator. Each ``q_k`` has degree ``k`` and vanishes at ``u = 0`` for
``k >= 1``. The coefficients are integer polynomials in ``rho``; the exact
table is built once per order and evaluated at a given ``rho`` on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ProblemParams:
    """Complex dimension ``n`` and lower order ``rho``."""

    n: int
    rho: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise DomainError(f"rho must be a positive finite real, got {self.rho}")

    def require_main(self) -> "ProblemParams":
        if self.rho <= 1:
            raise DomainError(f"the main pipeline needs rho > 1, got {self.rho}")
        return self


# ---------------------------------------------------------------- exact table
#
# A polynomial in (u, rho) is an integer matrix C with C[j, i] the coefficient
# of u**j * rho**i.


def _pad(a, nu, nr):
    out = np.zeros((nu, nr), dtype=object)
    out[:] = 0
    out[: a.shape[0], : a.shape[1]] = a
    return out


@lru_cache(maxsize=None)
def exact_q_table(order: int) -> tuple[np.ndarray, ...]:
    """Integer coefficient matrices of ``q_0 .. q_order`` in ``(u, rho)``."""
    if order < 0:
        raise DomainError("order must be nonnegative")
    q = [np.array([[1]], dtype=object)]
    for k in range(order):
        c = q[-1]
        nu, nr = c.shape[0] + 1, c.shape[1] + 1
        dc = _pad(np.array([[j * c[j, i] for i in range(c.shape[1])] for j in range(1, c.shape[0])],
                           dtype=object).reshape(-1, c.shape[1]), nu, nr)
        c = _pad(c, nu, nr)
        new = _pad(np.zeros((1, 1), dtype=object), nu, nr)
        # rho*u*(1+u)*q'
        new[1:, 1:] += dc[:-1, :-1]
        new[2:, 1:] += dc[:-2, :-1]
        # -k*(1+u)*q
        new -= k * c
        new[1:, :] -= k * c[:-1, :]
        # -(k+1)*rho*u*q
        new[1:, 1:] -= (k + 1) * c[:-1, :-1]
        q.append(new)
    return tuple(q)


def _eval_in_rho(mat: np.ndarray, rho) -> list:
    """Coefficients in ``u`` (ascending) at a numeric ``rho``."""
    out = []
    for j in range(mat.shape[0]):
        acc = 0
        for i in reversed(range(mat.shape[1])):
            acc = acc * rho + mat[j, i]
        out.append(acc)
    # trim trailing zeros beyond the true degree
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def q_coefficients_in_rho(k: int) -> list[list[int]]:
    """Coefficient of ``u**j`` in ``q_k`` as an integer polynomial in rho (ascending)."""
    mat = exact_q_table(k)[k]
    rows = []
    for j in range(mat.shape[0]):
        row = [int(x) for x in mat[j]]
        while len(row) > 1 and row[-1] == 0:
            row.pop()
        rows.append(row)
    while len(rows) > 1 and rows[-1] == [0]:
        rows.pop()
    return rows


# ---------------------------------------------------------------- float stack


def _recurrence_float(n: int, rho: float) -> list[np.ndarray]:
    P = np.polynomial.polynomial
    q = [np.array([1.0])]
    for k in range(n):
        c = q[-1]
        d = P.polyder(c) if len(c) > 1 else np.array([0.0])
        nxt = P.polyadd(
            P.polyadd(rho * P.polymul([0.0, 1.0, 1.0], d), -k * P.polymul([1.0, 1.0], c)),
            -(k + 1) * rho * P.polymul([0.0, 1.0], c),
        )
        q.append(np.asarray(nxt, dtype=float)[: k + 2])
    return q


@dataclass(frozen=True)
class DerivativeStack:
    params: ProblemParams
    q: tuple
    exact: bool = False
    precision: str = "double"
    _rho: object = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def rho(self):
        return self._rho if self._rho is not None else self.params.rho

    def coefficients(self, k: int):
        return self.q[k]


def build_stack(params: ProblemParams, *, exact: bool = False, precision: str = "double",
                order: int | None = None) -> DerivativeStack:
    """Polynomials ``q_0 .. q_n`` at the fixed ``rho``.

    ``exact=True`` evaluates the integer table in ``rho`` instead of running
    the recurrence in floating point. ``precision='extended'`` stores mpmath
    numbers (implies the exact table) so every downstream evaluation that is
    written generically runs at the current ``mpmath.mp.dps``.
    """
    n = params.n if order is None else order
    if n < 1:
        raise DomainError("derivative order must be >= 1")
    if params.rho <= 1:
        raise DomainError(f"derivative stacks are built only for rho > 1, got {params.rho}")
    if precision not in ("double", "extended"):
        raise DomainError(f"unknown precision mode {precision!r}")
    if precision == "extended":
        import mpmath

        rho = mpmath.mpf(Fraction(params.rho).numerator) / Fraction(params.rho).denominator
        table = exact_q_table(n)
        q = tuple(tuple(mpmath.mpf(c) if isinstance(c, int) else c for c in _eval_in_rho(m, rho))
                  for m in table)
        return DerivativeStack(params, q, True, "extended", rho)
    if exact:
        rho = Fraction(params.rho)
        table = exact_q_table(n)
        q = tuple(np.array([float(c) for c in _eval_in_rho(m, rho)]) for m in table)
        return DerivativeStack(params, q, True, "double")
    return DerivativeStack(params, tuple(_recurrence_float(n, params.rho)), False, "double")


# ---------------------------------------------------------------- evaluation


def phi(params: ProblemParams, t):
    """``1 / (1 + t**rho)``."""
    t = np.asarray(t, dtype=float) if not _is_mp(t) else t
    if np.any(np.asarray(t, dtype=float) < 0):
        raise DomainError("phi is defined for t >= 0")
    out = 1.0 / (1.0 + t ** params.rho)
    return float(out) if np.ndim(out) == 0 and not _is_mp(out) else out


def _is_mp(x) -> bool:
    return type(x).__module__.startswith("mpmath")


def _zero_limit(rho: float, k: int) -> float | None:
    """``phi^(k)(0+)`` from ``phi = sum_m (-1)**m t**(m rho)``; None if infinite."""
    total = 0.0
    m = 1
    while m * rho <= k:
        e = m * rho
        if not float(e).is_integer():
            return None
        if int(e) == k:
            total += (-1) ** m * math.factorial(k)
        m += 1
    return total


def phi_deriv(stack: DerivativeStack, k: int, t):
    """``phi^(k)(t)`` for ``t > 0`` (vectorised over numpy ``t``).

    Evaluated as ``t**-k * sum_j c_j w**j v**(k+1-j)`` with ``w = u/(1+u)``,
    ``v = 1/(1+u)`` so neither large nor small ``t`` overflows.
    """
    if not 0 <= k < len(stack.q):
        raise DomainError(f"k={k} outside 0..{len(stack.q) - 1}")
    rho = stack.rho
    if _is_mp(t) or stack.precision == "extended":
        import mpmath

        t = mpmath.mpf(t)
        if t == 0:
            return _at_zero(stack, k)
        u = t ** rho
        v = 1 / (1 + u)
        w = u * v
        s = sum(c * w ** j * v ** (k + 1 - j) for j, c in enumerate(stack.q[k]))
        return s / t ** k
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise DomainError("phi_deriv needs t >= 0")
    if np.any(t == 0):
        lim = _at_zero(stack, k)
        out = np.empty_like(t)
        pos = t > 0
        out[~pos] = lim
        if pos.any():
            out[pos] = phi_deriv(stack, k, t[pos])
        return float(out[0]) if scalar else out
    with np.errstate(over="ignore", divide="ignore"):
        u = t ** float(rho)
        v = 1.0 / (1.0 + u)
        w = 1.0 / (1.0 + 1.0 / u)
        tk = t ** k
    coeffs = stack.q[k]
    acc = np.zeros_like(t)
    for j, c in enumerate(coeffs):
        acc += float(c) * w ** j * v ** (k + 1 - j)
    out = acc / tk
    return float(out[0]) if scalar else out


def _at_zero(stack: DerivativeStack, k: int):
    rho = float(stack.params.rho)
    if k == 0:
        return 1.0
    lim = _zero_limit(rho, k)
    if lim is None:
        raise DomainError(f"phi^({k}) is singular at t=0 for rho={rho}")
    return lim


def psi(stack: DerivativeStack, t):
    """``(-1)**n * phi^(n)(t)``."""
    return (-1) ** stack.n * phi_deriv(stack, stack.n, t)


def psi_closed_n2(rho: float, t):
    """Closed form of psi for n = 2."""
    t = np.asarray(t, dtype=float)
    u = t ** rho
    return rho * t ** (rho - 2) * ((rho + 1) * u - (rho - 1)) / (1 + u) ** 3
