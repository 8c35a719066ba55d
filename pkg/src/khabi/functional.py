"""Candidate functions s in inc_rho, the functional J_rho(s) and the maximizing sequence.

A candidate ``s`` is tied to ``f = Q^n[s(x)/x]`` where
``Q[g](t) = int_0^t g``. The growth condition reads
``(n-1)! t**(1-n) Q^n[s/x](t) <= t**(rho/2)`` and integration by parts gives
``J_rho(s) = int s/t phi = int f psi``.

The maximizing sequence damps ``f`` on D_- only::

    f_k = f_0 * prod_{j<=k} (1 - eps_j eta)

so ``s_k = t f_k^(n)`` is computed from truncated Taylor series of ``f_0``
and of the cosine bumps ``eta``; no numerical differentiation is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import quadrature
from .constants import half_full_integral, j_sup, pipeline
from .deriv_core import ProblemParams, psi
from .errors import DomainError, NonConvergenceError
from .sign_analysis import SignPattern

MONOTONE_ATOL = 1e-10
GROWTH_ATOL = 1e-10
CHECK_POINTS = 512
GROWTH_POINTS = 64


# ---------------------------------------------------------------- grid functions


@dataclass
class GridFunction:
    """Values on a geometric grid, optionally backed by an exact callable.

    ``left_exponent`` is the power ``s ~ t**alpha`` at 0. ``tail`` is
    ``(T, c, p)`` when ``s(t) = c t**p`` exactly for ``t >= T``; ``breaks``
    are points where the function is not analytic.
    """

    grid: np.ndarray
    values: np.ndarray
    func: Callable | None = None
    tag: str = ""
    left_exponent: float | None = None
    tail: tuple[float, float, float] | None = None
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise DomainError("grid and values must be 1-d of equal length")
        if np.any(self.grid <= 0) or np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing and positive")
        self._interp = PchipInterpolator(self.grid, self.values, extrapolate=False) \
            if self.func is None and self.grid.size >= 2 else None

    @classmethod
    def from_callable(cls, func, grid, **kw) -> "GridFunction":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, func(grid), func=func, **kw)

    def _power_ext(self, t, i0, i1):
        g0, g1 = self.grid[i0], self.grid[i1]
        v0, v1 = self.values[i0], self.values[i1]
        if v0 > 0 and v1 > 0:
            p = math.log(v1 / v0) / math.log(g1 / g0)
            return v0 * (t / g0) ** p
        return np.full_like(t, v0)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.func is not None:
            out = np.asarray(self.func(t), dtype=float)
        else:
            out = np.empty_like(t)
            lo, hi = self.grid[0], self.grid[-1]
            mid = (t >= lo) & (t <= hi)
            out[mid] = self._interp(t[mid])
            left, right = t < lo, t > hi
            if left.any():
                out[left] = self._power_ext(t[left], 0, 1)
            if right.any():
                out[right] = self._power_ext(t[right], -1, -2)
        return float(out[0]) if scalar else out


def geometric_grid(lo: float, hi: float, count: int) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def s0_coefficient(n: int, rho: float) -> float:
    """``(rho/2) prod_{k<n} (1 + rho/2k)``: the largest admissible multiple of ``t**(rho/2)``."""
    return rho / 2 * math.prod(1 + rho / (2 * k) for k in range(1, n))


def s0_function(params: ProblemParams, grid=None) -> GridFunction:
    n, rho = params.n, params.rho
    c = s0_coefficient(n, rho)
    grid = geometric_grid(1e-3, 1e3, CHECK_POINTS) if grid is None else grid
    return GridFunction.from_callable(lambda t: c * np.asarray(t) ** (rho / 2), grid, tag="s0",
                                      left_exponent=rho / 2, tail=(0.0, c, rho / 2))


def f0_value(params: ProblemParams, t):
    """``t**(rho/2+n-1) / (n-1)!``."""
    return np.asarray(t, dtype=float) ** (params.rho / 2 + params.n - 1) / math.factorial(params.n - 1)


def zero_function(grid=None) -> GridFunction:
    grid = geometric_grid(1e-3, 1e3, CHECK_POINTS) if grid is None else grid
    return GridFunction.from_callable(lambda t: np.zeros_like(np.asarray(t, dtype=float)), grid,
                                      tag="zero", tail=(0.0, 0.0, 0.0))


# ---------------------------------------------------------------- Q operator


def q_power(f: GridFunction, m: int, grid=None, rtol: float = quadrature.INNER_RTOL) -> GridFunction:
    """``Q^m[f](t) = 1/(m-1)! int_0^t (t-x)**(m-1) f(x) dx`` on the grid."""
    if m < 1:
        raise DomainError("m must be a positive integer")
    alpha = f.left_exponent
    if alpha is not None and alpha <= -1:
        raise DomainError(f"f ~ x**{alpha} is not integrable at 0")
    grid = f.grid if grid is None else np.asarray(grid, dtype=float)
    fact = math.factorial(m - 1)
    vals = []
    for t in grid:
        spec = quadrature.IntegrationSpec(
            lambda x, t=t: (t - x) ** (m - 1) * f(x) / fact, 0.0, float(t),
            left_exponent=alpha, rtol=rtol, points=tuple(b for b in f.breaks if 0 < b < t),
        )
        try:
            vals.append(quadrature.integrate(spec).value)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"Q^{m} diverges or fails near t={t}", exc.partial, exc.error)
    return GridFunction(grid, np.array(vals), tag=f"Q^{m}[{f.tag}]",
                        left_exponent=None if alpha is None else alpha + m)


# ---------------------------------------------------------------- admissibility


@dataclass
class AdmissibilityVerdict:
    admissible: bool
    nonnegative: bool
    nondecreasing: bool
    growth_ok: bool
    growth_margin: float
    worst_t: float
    min_value: float
    min_increment: float
    check_grid: tuple[float, float, int]
    growth_points: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _growth_rules(s: GridFunction, ts, panels: int, order: int):
    alpha = s.left_exponent - 1 if s.left_exponent is not None else None
    rules = []
    for t in ts:
        cuts = tuple(b / t for b in s.breaks if 0 < b < t)
        rules.append(quadrature.fixed_rule(0.0, 1.0, panels=panels, order=order,
                                           left_exponent=alpha, breaks=cuts))
    return rules


def _apply_rules(rules, n, vals):
    out = np.empty(len(rules))
    pos = 0
    for i, (u, w) in enumerate(rules):
        out[i] = np.sum(w * (1 - u) ** (n - 1) * vals[pos:pos + u.size] / u)
        pos += u.size
    return out


def growth_lhs(s: GridFunction, params: ProblemParams, ts, *, panels: int = 24, order: int = 30):
    """``int_0^1 (1-u)**(n-1) s(tu)/u du`` for each ``t`` (equals ``(n-1)! t**(1-n) Q^n[s/x](t)``)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    rules = _growth_rules(s, ts, panels, order)
    # one vectorised evaluation of s over every node of every rule
    vals = s(np.concatenate([t * u for t, (u, _) in zip(ts, rules)]))
    return _apply_rules(rules, params.n, vals)


def _verdict(params, grid, values, ts, lhs) -> AdmissibilityVerdict:
    inc = np.diff(values)
    min_value = float(values.min())
    min_inc = float(inc.min()) if inc.size else 0.0
    nonneg = min_value >= -MONOTONE_ATOL
    nondec = min_inc >= -MONOTONE_ATOL
    pos = lhs > 0
    if pos.any():
        ratio = ts[pos] ** (params.rho / 2) / lhs[pos]
        j = int(np.argmin(ratio))
        margin = float(ratio[j] - 1)
        worst = float(ts[pos][j])
    else:
        margin, worst = math.inf, math.nan
    growth_ok = margin >= -GROWTH_ATOL
    return AdmissibilityVerdict(
        admissible=bool(nonneg and nondec and growth_ok), nonnegative=bool(nonneg),
        nondecreasing=bool(nondec), growth_ok=bool(growth_ok), growth_margin=margin,
        worst_t=worst, min_value=min_value, min_increment=min_inc,
        check_grid=(float(grid[0]), float(grid[-1]), int(grid.size)), growth_points=int(ts.size),
    )


def check_inc_rho(s: GridFunction, params: ProblemParams, *, grid=None,
                  growth_points: int = GROWTH_POINTS) -> AdmissibilityVerdict:
    """Nonnegativity, monotonicity and the growth inequality on a log grid.

    The growth margin is ``min_t t**(rho/2)/lhs(t) - 1`` (infinite when the
    left side never becomes positive). Monotonicity uses divided differences
    on the grid with an absolute tolerance of 1e-10.
    """
    grid = s.grid if grid is None else np.asarray(grid, dtype=float)
    ts = np.geomspace(grid[0], grid[-1], growth_points)
    return _verdict(params, grid, s(grid), ts, growth_lhs(s, params, ts))


# ---------------------------------------------------------------- J functional


def j_functional(s: GridFunction, params: ProblemParams, rtol: float = 1e-11) -> float:
    """``int_0^inf s(t)/t phi(t) dt``, closing a pure power tail analytically."""
    rho = params.rho

    def integrand(t):
        return s(t) / t / (1.0 + t ** rho)

    alpha = s.left_exponent - 1 if s.left_exponent is not None else None
    total = 0.0
    if s.tail is not None:
        T, c, p = s.tail
        if p >= rho:
            raise DomainError("J diverges: tail grows like t**p with p >= rho")
        if T > 0:
            spec = quadrature.IntegrationSpec(integrand, 0.0, T, left_exponent=alpha, rtol=rtol,
                                              limit=400, points=tuple(b for b in s.breaks if 0 < b < T))
            total += quadrature.integrate(spec).value
        if c != 0:
            if p == rho / 2:
                total += c * (2 / rho) * (math.pi / 2 - math.atan(T ** (rho / 2)))
            else:
                total += c * quadrature.quad(lambda t: t ** (p - 1) / (1 + t ** rho), T, math.inf,
                                             decay_exponent=rho - p, scale=max(T, 1.0), rtol=rtol,
                                             left_exponent=p - 1 if T == 0 else None)
        return total
    spec = quadrature.IntegrationSpec(integrand, 0.0, math.inf, left_exponent=alpha, rtol=rtol,
                                      limit=400, scale=max(s.grid[-1] / 10, 1.0), points=s.breaks)
    return quadrature.integrate(spec).value


# ---------------------------------------------------------------- eta bumps


def _cos_series(c: float, t: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients in h of ``cos(c (t + h))``."""
    j = np.arange(order + 1)
    return (c ** j / np.array([math.factorial(int(i)) for i in j]))[None, :] * \
        np.cos(c * t[:, None] + j[None, :] * math.pi / 2)


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = a.shape[1] - 1
    out = np.zeros_like(a)
    for m in range(order + 1):
        out[:, m] = np.einsum("pi,pi->p", a[:, : m + 1], b[:, m::-1])
    return out


def _pow(a: np.ndarray, e: int) -> np.ndarray:
    out = np.zeros_like(a)
    out[:, 0] = 1.0
    base = a
    while e:
        if e & 1:
            out = _mul(out, base)
        e >>= 1
        if e:
            base = _mul(base, base)
    return out


def eta_series(pattern: SignPattern, n: int, t, order: int) -> np.ndarray:
    """Taylor coefficients ``eta^(j)(t)/j!`` for ``j = 0..order`` (shape ``(len(t), order+1)``)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((t.size, order + 1))
    ends = pattern.endpoints
    for i in pattern.index_set:
        a, b = ends[i - 1], ends[i]
        m = (t > a) & (t <= b)
        if not m.any():
            continue
        tm = t[m]
        ser = _cos_series(math.pi / (2 * b), tm, order)
        if a > 0:
            ser = _mul(ser, _cos_series(math.pi / (2 * a), tm, order))
        out[m] += _pow(ser, 2 * n)
    return out


def eta(pattern: SignPattern, n: int, t):
    """Cosine-product bump supported on the closure of D_-; 0 <= eta <= 1."""
    scalar = np.ndim(t) == 0
    v = eta_series(pattern, n, t, 0)[:, 0]
    return float(v[0]) if scalar else v


def f0_series(params: ProblemParams, t, order: int) -> np.ndarray:
    a = params.rho / 2 + params.n - 1
    t = np.atleast_1d(np.asarray(t, dtype=float))
    coef = [1.0]
    for j in range(1, order + 1):
        coef.append(coef[-1] * (a - j + 1) / j)
    j = np.arange(order + 1)
    return np.array(coef)[None, :] * t[:, None] ** (a - j)[None, :] / math.factorial(params.n - 1)


def _damping_series(eta_ser: np.ndarray, epsilons) -> np.ndarray:
    g = np.zeros_like(eta_ser)
    g[:, 0] = 1.0
    for e in epsilons:
        g = _mul(g, _one_minus(eta_ser, e))
    return g


def _one_minus(eta_ser, e):
    out = -e * eta_ser
    out[:, 0] += 1.0
    return out


def _s_from_series(params, t, fser):
    n = params.n
    fn = math.factorial(n) * fser[:, n]
    fn1 = math.factorial(n + 1) * fser[:, n + 1]
    return t * fn, fn + t * fn1


# ---------------------------------------------------------------- sequence


def sequence_member(params: ProblemParams, epsilons, *, grid=None, pattern=None) -> GridFunction:
    """``s_k`` for the given damping factors, as an exact callable.

    ``s_k = s_0`` outside D_-, so the closed power tail starts at sup D_-.
    """
    params.require_main()
    n, rho = params.n, params.rho
    if pattern is None:
        _, pattern = pipeline(n, rho)
    eps = tuple(float(e) for e in epsilons)
    c = s0_coefficient(n, rho)

    def func(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = c * t ** (rho / 2)
        m = pattern.in_d_minus(t)
        if m.any() and eps:
            tm = t[m]
            fser = _mul(f0_series(params, tm, n + 1), _damping_series(eta_series(pattern, n, tm, n + 1), eps))
            out[m] = _s_from_series(params, tm, fser)[0]
        return out

    grid = default_check_grid(pattern) if grid is None else grid
    return GridFunction.from_callable(func, grid, tag=f"s_{len(eps)}", left_exponent=rho / 2,
                                      tail=(pattern.sup_d_minus, c, rho / 2), breaks=pattern.zeros)


def default_check_grid(pattern: SignPattern, count: int = CHECK_POINTS) -> np.ndarray:
    return geometric_grid(pattern.zeros[0] * 1e-3, pattern.zeros[-1] * 10, count)


@dataclass
class EpsilonSchedule:
    alpha: float
    epsilons: list[float] = field(default_factory=list)
    halvings: list[int] = field(default_factory=list)
    restarts: int = 0


@dataclass
class IterationRow:
    k: int
    epsilon: float
    j_value: float
    gap: float
    margin: float
    admissible: bool


@dataclass
class MaximizeResult:
    params: ProblemParams
    rows: list[IterationRow]
    schedule: EpsilonSchedule
    j_sup: float
    check_grid: tuple[float, float, int]

    @property
    def j_values(self) -> list[float]:
        return [r.j_value for r in self.rows]

    @property
    def nondecreasing(self) -> bool:
        js = self.j_values
        return all(b >= a - 1e-12 * abs(a) for a, b in zip(js, js[1:]))

    @property
    def bounded(self) -> bool:
        return all(r.j_value <= self.j_sup * (1 + 1e-8) for r in self.rows)

    @property
    def all_admissible(self) -> bool:
        return all(r.admissible for r in self.rows)


class _DminusRule:
    """Fixed quadrature nodes on D_- with ``f_0 psi`` and the eta series cached."""

    def __init__(self, params, stack, pattern, panels=48, order=24):
        rho = params.rho
        nodes, weights = [], []
        for a, b in pattern.d_minus:
            x, w = quadrature.fixed_rule(a, b, panels=panels, order=order,
                                         left_exponent=(1.5 * rho - 1) if a == 0 else None)
            nodes.append(x)
            weights.append(w)
        self.t = np.concatenate(nodes)
        self.base = np.concatenate(weights) * f0_value(params, self.t) * psi(stack, self.t)
        self.eta = eta_series(pattern, params.n, self.t, 0)[:, 0]
        self.g = np.ones_like(self.t)

    def gap(self, g=None) -> float:
        return float(-np.sum(self.base * (self.g if g is None else g)))


class _SeriesState:
    """Taylor data of ``f_0`` and ``eta`` at fixed points of D_-, with the damping product.

    The points are the check grid followed by every node of the growth
    quadrature, so each accepted step costs one series product per point.
    """

    def __init__(self, params, pattern, points):
        n = params.n
        self.params = params
        self.points = points
        self.s0 = s0_coefficient(n, params.rho) * points ** (params.rho / 2)
        self.inside = pattern.in_d_minus(points)
        t = points[self.inside]
        self.t = t
        self.f0 = f0_series(params, t, n + 1)
        self.eta = eta_series(pattern, n, t, n + 1)
        self.g = np.zeros_like(self.eta)
        self.g[:, 0] = 1.0

    def trial(self, eps, sel=slice(None)):
        g = _mul(self.g[sel], _one_minus(self.eta[sel], eps))
        s, ds = _s_from_series(self.params, self.t[sel], _mul(self.f0[sel], g))
        return g, s, ds

    def values(self, s_inside):
        out = self.s0.copy()
        out[self.inside] = s_inside
        return out


def maximize(params: ProblemParams, K: int, *, alpha: float = 0.5, max_halvings: int = 40,
             max_restarts: int = 4, verify: bool = True, check_count: int = CHECK_POINTS) -> MaximizeResult:
    """Run the damping construction for ``K`` steps.

    ``eps_k`` starts at ``min(alpha/k, eps_{k-1})`` and is halved until
    ``s_k`` is nonnegative and nondecreasing on the check grid (values,
    divided differences and the analytic derivative). J is evaluated as
    ``J(rho) - int_{D_-} f_k |psi|``, the D_+/D_- decomposition with
    ``f_k = f_0`` on D_+. With ``verify`` every accepted ``s_k`` also goes
    through the growth inequality on the same rule as :func:`check_inc_rho`.
    """
    params.require_main()
    if K < 0:
        raise DomainError("K must be >= 0")
    n = params.n
    stack, pattern = pipeline(n, params.rho)
    J = j_sup(params)
    grid = default_check_grid(pattern, check_count)
    ts = np.geomspace(grid[0], grid[-1], GROWTH_POINTS)
    template = sequence_member(params, (), grid=grid, pattern=pattern)
    rules = _growth_rules(template, ts, 24, 30) if verify else []
    nodes = [t * u for t, (u, _) in zip(ts, rules)]
    points = np.concatenate([grid] + nodes)
    n_grid = grid.size
    half = half_full_integral(n, params.rho)
    a0 = alpha
    for restart in range(max_restarts + 1):
        sched = EpsilonSchedule(alpha=a0, restarts=restart)
        rule = _DminusRule(params, stack, pattern)
        state = _SeriesState(params, pattern, points)
        on_grid = np.flatnonzero(state.inside) < n_grid
        v0 = _verdict(params, grid, state.s0[:n_grid], ts, _apply_rules(rules, n, state.s0[n_grid:])) \
            if verify else None
        rows = [IterationRow(0, 0.0, half, J - half, v0.growth_margin if v0 else math.nan,
                             v0.admissible if v0 else True)]
        failed = False
        prev = 1.0
        for k in range(1, K + 1):
            eps = min(a0 / k, prev)
            for h in range(max_halvings + 1):
                _, s, ds = state.trial(eps, on_grid)
                full = state.s0[:n_grid].copy()
                full[state.inside[:n_grid]] = s
                if (s.min() >= -MONOTONE_ATOL and ds.min() >= -MONOTONE_ATOL
                        and np.diff(full).min() >= -MONOTONE_ATOL):
                    break
                eps /= 2
            else:
                failed = True
                break
            prev = eps
            sched.epsilons.append(eps)
            sched.halvings.append(h)
            rule.g = rule.g * (1 - eps * rule.eta)
            gap = rule.gap()
            if verify:
                state.g, s_all, _ = state.trial(eps)
                vals = state.values(s_all)
                v = _verdict(params, grid, vals[:n_grid], ts, _apply_rules(rules, n, vals[n_grid:]))
                margin, ok = v.growth_margin, v.admissible
            else:
                state.g = state.trial(eps)[0]
                margin, ok = math.nan, True
            rows.append(IterationRow(k, eps, J - gap, gap, margin, ok))
        if not failed:
            return MaximizeResult(params, rows, sched, J, (float(grid[0]), float(grid[-1]), grid.size))
        a0 /= 2
    raise NonConvergenceError(f"no admissible eps_k after {max_restarts} restarts", rows[-1].j_value, math.nan)


def perturbation_gain(s: GridFunction, params: ProblemParams, eps: float,
                      rtol: float = 1e-11) -> float:
    """``eps int_{D_-} f eta (-psi)`` with ``f = Q^n[s/x]``: the strict gain of one damping step."""
    params.require_main()
    n = params.n
    stack, pattern = pipeline(n, params.rho)
    fact = math.factorial(n - 1)

    def f_of(t):
        if s.tag == "s0":
            return f0_value(params, t)
        return t ** (n - 1) / fact * growth_lhs(s, params, [t])[0]

    total = 0.0
    for a, b in pattern.d_minus:
        spec = quadrature.IntegrationSpec(
            lambda t: f_of(t) * eta(pattern, n, t) * -psi(stack, t), a, b,
            left_exponent=(1.5 * params.rho - 1) if a == 0 else None, rtol=rtol, limit=400,
        )
        total += quadrature.integrate(spec).value
    return eps * total
