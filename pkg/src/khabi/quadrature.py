"""Adaptive integration with endpoint-singularity and semi-infinite handling.

The adaptive engine is QUADPACK (via :func:`scipy.integrate.quad`). What this
module adds is the change of variables: algebraic endpoint behaviour
``(t - a)**alpha`` is absorbed by ``t = a + h * y**(1/(alpha+1))`` and a tail
decaying like ``t**(-1-delta)`` is compactified by
``t = a + c * (w**(-1/delta) - 1)``, after which both integrands are bounded
and smooth at the mapped endpoint.

A vectorised composite Gauss-Legendre rule is provided for inner loops that
evaluate one integrand many times with different parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _sp_integrate

from .errors import DomainError, NonConvergenceError

DEFAULT_RTOL = 1e-10
INNER_RTOL = 1e-8


@dataclass(frozen=True)
class IntegrationSpec:
    func: Callable[[float], float]
    a: float
    b: float
    left_exponent: float | None = None
    right_exponent: float | None = None
    decay_exponent: float | None = None
    scale: float = 1.0
    rtol: float = DEFAULT_RTOL
    atol: float = 0.0
    limit: int = 200
    points: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not (1e-14 < self.rtol < 1e-2):
            raise DomainError(f"rtol must lie in (1e-14, 1e-2), got {self.rtol}")
        for name in ("left_exponent", "right_exponent"):
            e = getattr(self, name)
            if e is not None and e <= -1:
                raise DomainError(f"{name}={e} is not integrable")
        if self.decay_exponent is not None and self.decay_exponent <= 0:
            raise DomainError("decay_exponent must be positive (integrand ~ t**(-1-delta))")
        if not self.b > self.a:
            raise DomainError(f"empty interval ({self.a}, {self.b})")


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __iter__(self):
        yield self.value
        yield self.error


def _quad(f, a, b, rtol, atol, limit):
    out = _sp_integrate.quad(f, a, b, epsabs=atol, epsrel=rtol, limit=limit, full_output=1)
    value, err = out[0], out[1]
    if not math.isfinite(value):
        raise NonConvergenceError(f"non-finite quadrature value on ({a}, {b})", value, err)
    return value, err


def _map_power(alpha):
    # integer power: x**alpha * jacobian becomes y**(p*(alpha+1)-1) with a
    # high enough exponent, and smooth factors stay smooth in y
    return max(2, math.ceil(4.0 / (alpha + 1.0)))


def _rounding_fix(d, d_eff, alpha):
    # the integrand sees the rounded distance d_eff = |t - endpoint| (exact by
    # Sterbenz, at least one ulp); rescale its singular factor back to d
    return 1.0 if d == d_eff else (d / d_eff) ** alpha


def _power_map_left(f, a, h, alpha):
    # t = a + h*y**beta on y in (0, 1]
    beta = _map_power(alpha)

    def g(y):
        if y <= 0.0:
            return 0.0
        d = h * y ** beta
        t = a + d
        if t == a:
            t = math.nextafter(a, math.inf)
        return f(t) * _rounding_fix(d, t - a, alpha) * beta * d / y

    return g


def _power_map_right(f, b, h, alpha):
    beta = _map_power(alpha)

    def g(y):
        if y <= 0.0:
            return 0.0
        d = h * y ** beta
        t = b - d
        if t == b:
            t = math.nextafter(b, -math.inf)
        return f(t) * _rounding_fix(d, b - t, alpha) * beta * d / y

    return g


TAIL_POWER = 4


def _needs_map(alpha):
    return alpha is not None and not float(alpha).is_integer()


def map_to_finite(spec: IntegrationSpec) -> IntegrationSpec:
    """Compactify ``(a, inf)`` onto ``(0, 1)``.

    The integrand must decay at least like ``t**(-1-delta)``; ``delta`` is
    taken from ``spec.decay_exponent`` or estimated from a log-log slope.
    A left-endpoint exponent of the original integrand becomes a right-endpoint
    exponent of the mapped one.
    """
    if math.isfinite(spec.b):
        return spec
    delta = spec.decay_exponent
    if delta is None:
        delta = estimate_decay(spec.func, max(spec.a, spec.scale))
    c = spec.scale
    a = spec.a
    f = spec.func
    # t = a + c (w**(-1/delta) - 1) with w = y**TAIL_POWER, so the leftover
    # w**(1/delta) terms of the expansion at w = 0 become high powers of y
    inv = TAIL_POWER / delta

    def g(y):
        if y <= 0.0:
            return 0.0
        x = y ** (-inv)
        if not math.isfinite(x):
            return 0.0
        return f(a + c * (x - 1.0)) * c * inv * x / y

    pts = tuple(sorted(((p - a) / c + 1.0) ** (-delta / TAIL_POWER) for p in spec.points if p > a))
    return replace(
        spec,
        func=g,
        a=0.0,
        b=1.0,
        left_exponent=None,
        right_exponent=spec.left_exponent,
        decay_exponent=None,
        scale=1.0,
        points=pts,
    )


def estimate_decay(func: Callable[[float], float], start: float) -> float:
    """Return ``delta`` with ``|f(t)| ~ t**(-1-delta)``; abort on non-decay."""
    t1, t2 = start * 1e3, start * 1e6
    f1, f2 = abs(func(t1)), abs(func(t2))
    if f2 == 0.0 and f1 == 0.0:
        return 1.0
    if f2 == 0.0:
        return 1.0
    if f1 == 0.0 or not (math.isfinite(f1) and math.isfinite(f2)):
        raise DomainError("cannot estimate tail decay")
    slope = math.log(f2 / f1) / math.log(t2 / t1)
    delta = -1.0 - slope
    if delta <= 1e-3:
        raise DomainError(f"integrand does not decay fast enough (log-log slope {slope:.3f})")
    return delta


def integrate(spec: IntegrationSpec) -> QuadResult:
    """Adaptive integral with error estimate.

    Raises :class:`NonConvergenceError` (carrying the partial value) when the
    reported error exceeds the requested tolerance.
    """
    if math.isinf(spec.a):
        raise DomainError("left endpoint must be finite")
    if math.isinf(spec.b):
        # finite head keeps the endpoint hint; only the tail is compactified
        cut = spec.a + spec.scale
        head = replace(spec, b=cut, points=tuple(p for p in spec.points if p < cut))
        tail = replace(spec, a=cut, left_exponent=None, points=tuple(p for p in spec.points if p > cut))
        parts = [_adaptive(head), _adaptive(map_to_finite(tail))]
    else:
        parts = [_adaptive(spec)]
    value = sum(v for v, _ in parts)
    error = sum(e for _, e in parts)
    if error > max(spec.rtol * abs(value), spec.atol) * 10.0 and error > 1e-300:
        raise NonConvergenceError(
            f"quadrature error {error:.3e} exceeds tolerance on ({spec.a}, {spec.b})", value, error
        )
    return QuadResult(value, error)


def _adaptive(s: IntegrationSpec) -> tuple[float, float]:
    cuts = [s.a] + sorted(p for p in s.points if s.a < p < s.b) + [s.b]
    segs = list(zip(cuts[:-1], cuts[1:]))
    if len(segs) == 1 and _needs_map(s.left_exponent) and _needs_map(s.right_exponent):
        m = (s.a + s.b) / 2
        segs = [(s.a, m), (m, s.b)]
    pieces = []
    for i, (lo, hi) in enumerate(segs):
        if i == 0 and _needs_map(s.left_exponent):
            pieces.append((_power_map_left(s.func, lo, hi - lo, s.left_exponent), 0.0, 1.0))
        elif i == len(segs) - 1 and _needs_map(s.right_exponent):
            pieces.append((_power_map_right(s.func, hi, hi - lo, s.right_exponent), 0.0, 1.0))
        else:
            pieces.append((s.func, lo, hi))
    value = 0.0
    error = 0.0
    for f, pa, pb in pieces:
        v, e = _quad(f, pa, pb, s.rtol, s.atol, s.limit)
        value += v
        error += e
    return value, error


def quad(func, a, b, **kw) -> float:
    """Shorthand: value only."""
    return integrate(IntegrationSpec(func, a, b, **kw)).value


# ---------------------------------------------------------------- fixed rules

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def fixed_rule(
    a: float,
    b: float,
    *,
    panels: int = 16,
    order: int = 20,
    left_exponent: float | None = None,
    right_exponent: float | None = None,
    breaks: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on ``[a, b]``.

    Endpoint exponents trigger the same power substitution as
    :func:`integrate`; the Jacobian is folded into the weights so the caller
    only evaluates the original integrand at the returned nodes.
    """
    x, w = _gl(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    ys = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * x).ravel()
    wy = np.tile(w, panels) * np.repeat((edges[1:] - edges[:-1]) / 2, order)

    cuts = [a] + sorted(c for c in breaks if a < c < b) + [b]
    nodes = []
    weights = []
    for i, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
        la = left_exponent if i == 0 else None
        ra = right_exponent if i == len(cuts) - 2 else None
        if _needs_map(la) and _needs_map(ra):
            mid = (lo + hi) / 2
            for (p, q, e, side) in ((lo, mid, la, "l"), (mid, hi, ra, "r")):
                n_, w_ = _mapped(ys, wy, p, q, e, side)
                nodes.append(n_)
                weights.append(w_)
        elif _needs_map(la):
            n_, w_ = _mapped(ys, wy, lo, hi, la, "l")
            nodes.append(n_)
            weights.append(w_)
        elif _needs_map(ra):
            n_, w_ = _mapped(ys, wy, lo, hi, ra, "r")
            nodes.append(n_)
            weights.append(w_)
        else:
            nodes.append(lo + (hi - lo) * ys)
            weights.append((hi - lo) * wy)
    return np.concatenate(nodes), np.concatenate(weights)


def _mapped(ys, wy, lo, hi, alpha, side):
    # nodes and weights; weights carry the _rounding_fix correction for nodes
    # that round onto or near the endpoint
    beta = _map_power(alpha)
    d = (hi - lo) * ys ** beta
    jac = beta * d / ys
    if side == "l":
        t = np.maximum(lo + d, np.nextafter(lo, np.inf))
        d_eff = t - lo
    else:
        t = np.minimum(hi - d, np.nextafter(hi, -np.inf))
        d_eff = hi - t
    return t, wy * jac * (d / d_eff) ** alpha
