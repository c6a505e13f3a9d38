# Copyright 2024 The monodrift authors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Maximal monotone graphs on the real line.

A graph ``beta = dj`` is described by its convex even potential ``j`` with
``j(0) = 0`` and ``D(beta) = R``. Every evaluation is vectorized: scalars in,
floats out; arrays in, arrays out.
"""

from dataclasses import dataclass
import math
import typing

import numpy as np
from scipy.optimize import minimize_scalar

from .core import NumericalError

TOL_ROOT = 1e-12
TOL_IDENTITY = 1e-9
TOL_MEMBERSHIP = 1e-9

# relative slack when deciding whether a slope sits on the edge of a bounded range
_EDGE = 1e-9
_MAX_NEWTON = 200


class GraphError(NumericalError):
    pass


def _wrap(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if not (np.all(np.isfinite(lam)) and np.all(lam > 0)):
        raise GraphError(f'Regularization parameter must be finite and > 0, got {lam}')


def _finite_array(x, what='x'):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise GraphError(f'Graph evaluation needs finite {what}')
    return arr


def _solve_increasing(func, slope, target, upper, tol=TOL_ROOT):
    """Solve ``func(s) = target`` on ``[0, upper]`` for an increasing ``func``
    with ``func(0) = 0``. Newton steps are kept inside a shrinking bracket and
    replaced by bisection whenever they leave it."""
    lo = np.zeros_like(target)
    hi = np.array(upper, dtype=float, copy=True)
    s = 0.5 * (lo + hi)
    for _ in range(_MAX_NEWTON):
        f = func(s) - target
        lo = np.where(f < 0, s, lo)
        hi = np.where(f > 0, s, hi)
        with np.errstate(all='ignore'):
            s_new = s - f / slope(s)
        outside = ~np.isfinite(s_new) | (s_new < lo) | (s_new > hi)
        s_new = np.where(outside, 0.5 * (lo + hi), s_new)
        done = (np.abs(s_new - s) <= tol * np.maximum(1.0, np.abs(s_new))) | (f == 0) | (hi - lo <= tol * np.maximum(1.0, hi))
        s = s_new
        if np.all(done):
            return s
    raise GraphError('Scalar resolvent bracket did not converge, the graph family is malformed')


class MonotoneGraph(object):
    """The base class for maximal monotone graph families"""

    @staticmethod
    def get_name():
        raise NotImplementedError

    def params(self) -> typing.Dict[str, typing.Any]:
        return {}

    def j(self, x):
        raise NotImplementedError

    def bounds(self, x):
        """Return ``(lo, hi)`` such that ``beta(x) = [lo, hi]``."""
        raise NotImplementedError

    def _resolvent(self, lam, x):
        raise NotImplementedError

    def _resolvent_slope(self, lam, x):
        raise NotImplementedError

    def _conjugate(self, r):
        return self.numeric_conjugate(r)

    def __repr__(self):
        args = ', '.join('%s=%r' % kv for kv in self.params().items())
        return '%s(%s)' % (type(self).__name__, args)

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((type(self).__name__, repr(self.params())))

    def selection(self, x):
        """Minimal-norm section of beta."""
        lo, hi = self.bounds(x)
        return _wrap(np.where(lo > 0, lo, np.where(hi < 0, hi, 0.0)), x)

    def contains(self, x, y, tol=TOL_MEMBERSHIP):
        lo, hi = self.bounds(x)
        y = np.asarray(y, dtype=float)
        inside = (y >= lo - tol * (1.0 + np.abs(lo))) & (y <= hi + tol * (1.0 + np.abs(hi)))
        return bool(inside) if np.ndim(inside) == 0 else inside

    def resolvent(self, lam, x):
        _check_lambda(lam)
        arr = _finite_array(x)
        return _wrap(self._resolvent(lam, arr), x)

    def resolvent_slope(self, lam, x):
        """Derivative of the resolvent, defined almost everywhere, in [0, 1]."""
        _check_lambda(lam)
        arr = _finite_array(x)
        return _wrap(self._resolvent_slope(lam, arr), x)

    def yosida(self, lam, x):
        _check_lambda(lam)
        arr = _finite_array(x)
        return _wrap((arr - self._resolvent(lam, arr)) / lam, x)

    def yosida_slope(self, lam, x):
        _check_lambda(lam)
        arr = _finite_array(x)
        return _wrap((1.0 - self._resolvent_slope(lam, arr)) / lam, x)

    def moreau(self, lam, x):
        _check_lambda(lam)
        arr = _finite_array(x)
        y = self._resolvent(lam, arr)
        b = (arr - y) / lam
        return _wrap(self.j(y) + 0.5 * lam * b * b, x)

    def conjugate(self, r):
        arr = _finite_array(r, 'r')
        return _wrap(self._conjugate(np.abs(arr)), r)

    def numeric_conjugate(self, r):
        """j*(r) by bounded scalar maximization of r*y - j(y) on an expanding bracket."""
        rs = np.abs(np.atleast_1d(np.asarray(r, dtype=float)))
        out = np.empty_like(rs)
        for i, rho in enumerate(rs.flat):
            out.flat[i] = self._numeric_conjugate_scalar(float(rho))
        return out.reshape(np.shape(r)) if np.ndim(r) else out[0]

    def _numeric_conjugate_scalar(self, rho):
        if rho == 0.0:
            return 0.0
        upper = 1.0
        for _ in range(80):
            _, hi = self.bounds(upper)
            if float(hi) > rho:
                break
            upper *= 2.0
        else:
            return math.inf
        res = minimize_scalar(lambda y: float(self.j(y)) - rho * y, bounds=(0.0, upper),
                              method='bounded', options={'xatol': 1e-12 * max(1.0, upper)})
        return max(0.0, -float(res.fun))


class LinearGraph(MonotoneGraph):
    """beta(x) = k*x."""

    @staticmethod
    def get_name():
        return 'linear'

    def __init__(self, k=1.0):
        if not (np.isfinite(k) and k >= 0):
            raise GraphError(f'linear graph needs k >= 0, got {k}')
        self.k = float(k)

    def params(self):
        return {'k': self.k}

    def j(self, x):
        x = np.asarray(x, dtype=float)
        return _wrap(0.5 * self.k * x * x, x)

    def bounds(self, x):
        v = self.k * np.asarray(x, dtype=float)
        return v, v

    def _resolvent(self, lam, x):
        return x / (1.0 + lam * self.k)

    def _resolvent_slope(self, lam, x):
        return np.full_like(x, 1.0 / (1.0 + lam * self.k))

    def _conjugate(self, r):
        if self.k > 0:
            return r * r / (2.0 * self.k)
        return np.where(r == 0, 0.0, np.inf)


class PowerGraph(MonotoneGraph):
    """beta(x) = |x|^p sgn(x), j(x) = |x|^(p+1)/(p+1)."""

    @staticmethod
    def get_name():
        return 'power'

    def __init__(self, p=3.0):
        if not (np.isfinite(p) and p >= 1):
            raise GraphError(f'power graph needs p >= 1, got {p}')
        self.p = float(p)

    def params(self):
        return {'p': self.p}

    def j(self, x):
        x = np.asarray(x, dtype=float)
        return _wrap(np.abs(x) ** (self.p + 1.0) / (self.p + 1.0), x)

    def bounds(self, x):
        x = np.asarray(x, dtype=float)
        v = np.sign(x) * np.abs(x) ** self.p
        return v, v

    def _magnitude(self, lam, a):
        p = self.p
        if p == 1.0:
            return a / (1.0 + lam)
        if p == 2.0:
            return 2.0 * a / (1.0 + np.sqrt(1.0 + 4.0 * lam * a))
        upper = np.minimum(a, (a / lam) ** (1.0 / p))
        return _solve_increasing(lambda s: s + lam * s ** p,
                                 lambda s: 1.0 + lam * p * s ** (p - 1.0),
                                 a, upper)

    def _resolvent(self, lam, x):
        return np.sign(x) * self._magnitude(lam, np.abs(x))

    def _resolvent_slope(self, lam, x):
        s = self._magnitude(lam, np.abs(x))
        return 1.0 / (1.0 + lam * self.p * s ** (self.p - 1.0))

    def _conjugate(self, r):
        q = (self.p + 1.0) / self.p
        return r ** q / q


class SignGraph(MonotoneGraph):
    """beta(x) = c*sgn(x) with the gap [-c, c] filled at the origin."""

    @staticmethod
    def get_name():
        return 'sign'

    def __init__(self, c=1.0):
        if not (np.isfinite(c) and c > 0):
            raise GraphError(f'sign graph needs c > 0, got {c}')
        self.c = float(c)

    def params(self):
        return {'c': self.c}

    def j(self, x):
        x = np.asarray(x, dtype=float)
        return _wrap(self.c * np.abs(x), x)

    def bounds(self, x):
        x = np.asarray(x, dtype=float)
        lo = np.where(x > 0, self.c, -self.c)
        hi = np.where(x < 0, -self.c, self.c)
        return lo, hi

    def _resolvent(self, lam, x):
        return np.sign(x) * np.maximum(np.abs(x) - lam * self.c, 0.0)

    def _resolvent_slope(self, lam, x):
        return (np.abs(x) > lam * self.c).astype(float)

    def _conjugate(self, r):
        return np.where(r <= self.c * (1.0 + _EDGE), 0.0, np.inf)


class SinhGraph(MonotoneGraph):
    """beta(x) = c*sinh(x), j(x) = c*(cosh(x) - 1)."""

    @staticmethod
    def get_name():
        return 'sinh'

    def __init__(self, c=1.0):
        if not (np.isfinite(c) and c > 0):
            raise GraphError(f'sinh graph needs c > 0, got {c}')
        self.c = float(c)

    def params(self):
        return {'c': self.c}

    def j(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over='ignore'):
            return _wrap(self.c * (np.cosh(x) - 1.0), x)

    def bounds(self, x):
        with np.errstate(over='ignore'):
            v = self.c * np.sinh(np.asarray(x, dtype=float))
        return v, v

    def _magnitude(self, lam, a):
        # s + lam*c*sinh(s) = a forces sinh(s) <= a/(lam*c), which keeps cosh finite
        upper = np.minimum(a, np.arcsinh(a / (lam * self.c)))
        return _solve_increasing(lambda s: s + lam * self.c * np.sinh(s),
                                 lambda s: 1.0 + lam * self.c * np.cosh(s),
                                 a, upper)

    def _resolvent(self, lam, x):
        return np.sign(x) * self._magnitude(lam, np.abs(x))

    def _resolvent_slope(self, lam, x):
        s = self._magnitude(lam, np.abs(x))
        return 1.0 / (1.0 + lam * self.c * np.cosh(s))

    def _conjugate(self, r):
        c = self.c
        return r * np.arcsinh(r / c) - np.hypot(r, c) + c


class PiecewiseGraph(MonotoneGraph):
    """beta(x) = sgn(x)*(k|x| + sum_i h_i [|x| > t_i]) with the jumps at +-t_i filled."""

    @staticmethod
    def get_name():
        return 'piecewise'

    def __init__(self, k=0.0, thresholds=(0.0,), heights=(1.0,)):
        thresholds = [float(t) for t in thresholds]
        heights = [float(h) for h in heights]
        if len(thresholds) != len(heights):
            raise GraphError('piecewise graph needs as many heights as thresholds')
        if not (np.isfinite(k) and k >= 0):
            raise GraphError(f'piecewise graph needs slope k >= 0, got {k}')
        if any(not np.isfinite(t) or t < 0 for t in thresholds):
            raise GraphError('piecewise graph thresholds must be finite and >= 0')
        if any(not np.isfinite(h) or h <= 0 for h in heights):
            raise GraphError('piecewise graph heights must be finite and > 0')
        merged = {}
        for t, h in zip(thresholds, heights):
            merged[t] = merged.get(t, 0.0) + h
        self.k = float(k)
        self.thresholds = sorted(merged)
        self.heights = [merged[t] for t in self.thresholds]
        cumulative = np.cumsum([0.0] + self.heights)
        # (t, height below the jump, height above the jump)
        self._jumps = [(t, cumulative[i], cumulative[i + 1]) for i, t in enumerate(self.thresholds)]

    def params(self):
        return {'k': self.k, 'thresholds': list(self.thresholds), 'heights': list(self.heights)}

    def j(self, x):
        x = np.asarray(x, dtype=float)
        s = np.abs(x)
        value = 0.5 * self.k * s * s
        for t, h in zip(self.thresholds, self.heights):
            value = value + h * np.maximum(s - t, 0.0)
        return _wrap(value, x)

    def bounds(self, x):
        x = np.asarray(x, dtype=float)
        s = np.abs(x)
        strict = self.k * s
        closed = self.k * s
        for t, h in zip(self.thresholds, self.heights):
            strict = strict + h * (s > t)
            closed = closed + h * (s >= t)
        lo = np.where(x > 0, strict, -closed)
        hi = np.where(x < 0, -strict, closed)
        return lo, hi

    def _magnitude(self, lam, a):
        g = 1.0 + lam * self.k
        s = a / g
        flat = np.zeros(a.shape, dtype=bool)
        for t, below, above in self._jumps:
            a_lo = t * g + lam * below
            a_hi = t * g + lam * above
            s = np.where(a >= a_lo, np.where(a <= a_hi, t, t + (a - a_hi) / g), s)
            flat = flat | ((a > a_lo) & (a < a_hi))
        return s, flat

    def _resolvent(self, lam, x):
        s, _ = self._magnitude(lam, np.abs(x))
        return np.sign(x) * s

    def _resolvent_slope(self, lam, x):
        _, flat = self._magnitude(lam, np.abs(x))
        return np.where(flat, 0.0, 1.0 / (1.0 + lam * self.k))

    def _conjugate(self, r):
        k = self.k
        with np.errstate(divide='ignore', invalid='ignore'):
            y = r / k if k > 0 else np.where(r == 0, 0.0, np.inf)
            for t, below, above in self._jumps:
                r_lo = k * t + below
                r_hi = (k * t + above) * (1.0 + _EDGE)
                beyond = (r - above) / k if k > 0 else np.inf
                y = np.where(r >= r_lo, np.where(r <= r_hi, t, beyond), y)
        finite = np.isfinite(y)
        y_safe = np.where(finite, y, 0.0)
        return np.where(finite, np.maximum(r * y_safe - self.j(y_safe), 0.0), np.inf)


GRAPH_FAMILIES = {cls.get_name(): cls for cls in (LinearGraph, PowerGraph, SignGraph, SinhGraph, PiecewiseGraph)}


def graph_from_spec(spec):
    """Build a graph from a mapping such as ``{'kind': 'power', 'p': 3}``."""
    params = dict(spec)
    kind = params.pop('kind', None)
    if kind not in GRAPH_FAMILIES:
        raise GraphError(f"Unknown graph family '{kind}', expected one of {sorted(GRAPH_FAMILIES)}")
    try:
        return GRAPH_FAMILIES[kind](**params)
    except TypeError as ex:
        raise GraphError(f"Invalid parameters for graph family '{kind}': {ex}")


def young_gap(g, x, r):
    """j(x) + j*(r) - r*x, nonnegative and zero exactly when r is in beta(x)."""
    x_arr = np.asarray(x, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    jc = np.asarray(g.conjugate(r_arr), dtype=float)
    with np.errstate(invalid='ignore'):
        gap = np.where(np.isfinite(jc), g.j(x_arr) + jc - r_arr * x_arr, np.inf)
    return float(gap) if gap.ndim == 0 else gap


def resolvent_young_gap(g, lam, x):
    """Return ``(gap, slack)`` with gap = j(Rx) + j*(b) - b*Rx and slack = b*x - b*Rx,
    where Rx is the resolvent and b the Yosida approximation at x."""
    rx = g.resolvent(lam, x)
    b = g.yosida(lam, x)
    gap = young_gap(g, rx, b)
    slack = b * np.asarray(x, dtype=float) - b * rx
    return _wrap(gap, x), _wrap(slack, x)


def moreau_rate(g, x, lambdas):
    """Fitted order in lambda of j(x) - j_lambda(x)."""
    lambdas = np.asarray(lambdas, dtype=float)
    defects = np.array([g.j(x) - g.moreau(lam, x) for lam in lambdas])
    keep = defects > 0
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(lambdas[keep]), np.log(defects[keep]), 1)
    return float(slope)


def graph_diagnostics(g, lambdas, xs):
    """Rows (family, lambda, x, resolvent, yosida, moreau, young_gap)."""
    rows = []
    for lam in lambdas:
        xs_arr = np.asarray(xs, dtype=float)
        rx = g.resolvent(lam, xs_arr)
        b = g.yosida(lam, xs_arr)
        env = g.moreau(lam, xs_arr)
        gap, _ = resolvent_young_gap(g, lam, xs_arr)
        for i, x in enumerate(xs_arr):
            rows.append((g.get_name(), float(lam), float(x), float(rx[i]), float(b[i]), float(env[i]), float(gap[i])))
    return rows


@dataclass
class GraphCheck:
    name: str
    samples: int
    violations: int
    worst: float

    @property
    def passed(self):
        return self.violations == 0


def _check(name, excess):
    excess = np.asarray(excess, dtype=float)
    bad = ~(excess <= 0)
    worst = float(np.max(np.where(np.isnan(excess), np.inf, excess))) if excess.size else 0.0
    return GraphCheck(name=name, samples=int(excess.size), violations=int(bad.sum()), worst=worst)


def audit_graph(g, samples=10000, seed=0, scale=3.0):
    """Sample (lambda, x, y) triples and count violations of the graph identities."""
    rng = np.random.Generator(np.random.PCG64(seed=seed))
    lam = 10.0 ** rng.uniform(-3.0, 1.0, samples)
    x = scale * rng.standard_normal(samples)
    y = scale * rng.standard_normal(samples)
    r = scale * rng.standard_normal(samples)
    checks = []

    jx = g.j(x)
    checks.append(_check('evenness', np.abs(jx - g.j(-x)) - TOL_IDENTITY * (1.0 + jx)))
    lo0, hi0 = g.bounds(np.zeros(1))
    checks.append(_check('origin', np.array([abs(float(g.j(0.0))), float(lo0[0]), -float(hi0[0])])))

    sx, sy = g.selection(x), g.selection(y)
    checks.append(_check('monotone', -(x - y) * (sx - sy) - TOL_IDENTITY * (1.0 + np.abs(sx) + np.abs(sy))))

    rx, ry = g.resolvent(lam, x), g.resolvent(lam, y)
    checks.append(_check('resolvent_contraction', np.abs(rx - ry) - np.abs(x - y) * (1.0 + TOL_ROOT) - TOL_IDENTITY))

    bx, by = g.yosida(lam, x), g.yosida(lam, y)
    checks.append(_check('yosida_lipschitz', np.abs(bx - by) - np.abs(x - y) / lam * (1.0 + 1e-9) - TOL_IDENTITY / lam))
    checks.append(_check('yosida_membership', (~g.contains(rx, bx)).astype(float)))

    env = g.moreau(lam, x)
    env_small = g.moreau(lam / 3.0, x)
    scale_j = TOL_IDENTITY * (1.0 + jx)
    checks.append(_check('moreau_order', np.maximum.reduce([
        -env - scale_j, env - env_small - scale_j, env_small - jx - scale_j])))

    checks.append(_check('young_nonnegative', -np.asarray(young_gap(g, x, r)) - TOL_IDENTITY * (1.0 + np.abs(r * x))))
    on_graph = young_gap(g, x, sx)
    checks.append(_check('young_equality', np.abs(on_graph) - TOL_IDENTITY * (1.0 + np.abs(sx * x))))

    gap, slack = resolvent_young_gap(g, lam, x)
    checks.append(_check('identity_gap', np.abs(gap) - TOL_IDENTITY))
    checks.append(_check('identity_slack', -slack - TOL_IDENTITY))

    rs = 2.0 ** np.arange(0, 21)
    with np.errstate(invalid='ignore'):
        ratios = np.asarray(g.conjugate(rs)) / rs
    capped = np.where(np.isinf(ratios), 1e300, ratios)
    growth = 0.0 if np.isinf(ratios[0]) else capped[0] + 1.0 - capped[-1]
    checks.append(_check('conjugate_superlinear', np.concatenate([
        capped[:-1] - capped[1:] - TOL_IDENTITY * (1.0 + np.abs(capped[1:])), [growth]])))
    return checks
