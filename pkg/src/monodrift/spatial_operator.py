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

"""Finite-difference realizations of the linear operator on ``(0, L)`` with
homogeneous Dirichlet conditions, their Gelfand-triple norms and audits."""

from dataclasses import dataclass, field, replace
import math
import typing

import numpy as np
import scipy.linalg

from .core import NumericalError
from .expression import evaluate

TOL_LIN = 1e-12
TOL_MARK = 1e-10
TOL_COERCIVE = 1e-10

KIND_LAPLACIAN = 'dirichlet_laplacian'
KIND_DIVERGENCE = 'divergence_form'
KIND_FRACTIONAL = 'fractional'
KIND_ZERO = 'zero'
OPERATOR_KINDS = [KIND_LAPLACIAN, KIND_DIVERGENCE, KIND_FRACTIONAL, KIND_ZERO]


class OperatorError(NumericalError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise OperatorError(f'Grid needs at least 2 interior nodes, got {self.n}')
        if not (np.isfinite(self.length) and self.length > 0):
            raise OperatorError(f'Grid length must be > 0, got {self.length}')

    @property
    def h(self):
        return self.length / (self.n + 1)

    @property
    def nodes(self):
        return self.h * np.arange(1, self.n + 1)

    @property
    def midpoints(self):
        return self.h * (np.arange(0, self.n + 1) + 0.5)

    @property
    def weights(self):
        return np.full(self.n, self.h)

    def refined(self):
        """Grid with 2n+1 interior nodes; the old nodes stay nodes."""
        return Grid(2 * self.n + 1, self.length)


@dataclass(frozen=True)
class OperatorSpec:
    kind: str = KIND_LAPLACIAN
    a: str = '1'
    b: str = '0'
    c: str = '0'
    a0: str = '0'
    alpha: float = 1.0


class TripleNorms(object):
    """H, V, V*, L1 and Linf norms on a grid. Reductions act on the last axis."""

    def __init__(self, grid, energy, gram_solve):
        self.grid = grid
        self.energy = energy
        self._gram_solve = gram_solve

    def inner(self, u, v):
        return self.grid.h * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def h(self, v):
        return np.sqrt(self.inner(v, v))

    def v(self, v):
        v = np.asarray(v, dtype=float)
        ev = np.einsum('ij,...j->...i', self.energy, v)
        return np.sqrt(self.grid.h * np.sum(v * v + v * ev, axis=-1))

    def dual_maximizer(self, f):
        """w = (I + E)^{-1} f, the V-element attaining the V* norm of f."""
        f = np.asarray(f, dtype=float)
        flat = f.reshape(-1, f.shape[-1]).T
        return self._gram_solve(flat).T.reshape(f.shape)

    def vstar(self, f):
        w = self.dual_maximizer(f)
        return np.sqrt(np.maximum(self.inner(f, w), 0.0))

    def l1(self, v):
        return self.grid.h * np.sum(np.abs(v), axis=-1)

    def linf(self, v):
        return np.max(np.abs(v), axis=-1)


@dataclass(eq=False)
class DiscreteOperator:
    grid: Grid
    spec: OperatorSpec
    matrix: np.ndarray
    form_sym: np.ndarray
    energy: np.ndarray
    m_power: int
    coercivity: typing.Tuple[float, float]
    coercive_i: float
    symmetric: bool
    banded: typing.Optional[np.ndarray] = None
    energy_banded: typing.Optional[np.ndarray] = None
    spectrum: typing.Optional[typing.Tuple[np.ndarray, np.ndarray]] = None
    _row_norm: float = field(default=0.0, repr=False)

    @property
    def kind(self):
        return self.spec.kind

    @property
    def n(self):
        return self.grid.n

    @property
    def norms(self):
        return TripleNorms(self.grid, self.energy, self._gram_solve)

    def apply(self, v):
        return np.einsum('ij,...j->...i', self.matrix, np.asarray(v, dtype=float))

    def solve_shifted(self, delta, rhs, diag=None):
        """Solve (I + delta*A + diag(d)) x = rhs for rhs of shape (n,) or (n, m)."""
        rhs = np.asarray(rhs, dtype=float)
        d = np.zeros(self.n) if diag is None else np.asarray(diag, dtype=float)
        try:
            if self.banded is not None:
                ab = delta * self.banded
                ab[1] += 1.0 + d
                return scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
            values, vectors = self.spectrum
            if diag is None:
                coeff = 1.0 / (1.0 + delta * values)
                proj = vectors.T @ rhs
                scaled = proj * (coeff[:, None] if proj.ndim == 2 else coeff)
                return vectors @ scaled
            system = np.eye(self.n) + delta * self.matrix + np.diag(d)
            return scipy.linalg.solve(system, rhs, assume_a='pos', check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as ex:
            raise OperatorError(f'Singular system I + {delta}*A: {ex}')

    def _gram_solve(self, rhs):
        if self.energy_banded is not None:
            ab = self.energy_banded.copy()
            ab[1] += 1.0
            return scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
        values, vectors = self.spectrum
        coeff = 1.0 / (1.0 + values)
        proj = vectors.T @ rhs
        return vectors @ (proj * (coeff[:, None] if proj.ndim == 2 else coeff))

    def with_m_power(self, m):
        return replace(self, m_power=int(m))


def _tridiagonal(lower, main, upper):
    return np.diag(main) + np.diag(lower, -1) + np.diag(upper, 1)


def _to_banded(matrix):
    n = matrix.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.diag(matrix, 1)
    ab[1, :] = np.diag(matrix)
    ab[2, :-1] = np.diag(matrix, -1)
    return ab


def _diffusion_stencil(grid, a_mid):
    h2 = grid.h ** 2
    main = (a_mid[:-1] + a_mid[1:]) / h2
    off = -a_mid[1:-1] / h2
    return main, off


def _coercivity(form_sym, energy):
    n = form_sym.shape[0]
    gram = np.eye(n) + energy
    try:
        c_i = float(scipy.linalg.eigh(form_sym, gram, eigvals_only=True)[0])
        lower_order = form_sym - energy
        c2 = max(0.0, -float(np.linalg.eigvalsh(0.5 * (lower_order + lower_order.T))[0]))
        c1 = float(scipy.linalg.eigh(form_sym + c2 * np.eye(n), gram, eigvals_only=True)[0])
    except np.linalg.LinAlgError as ex:
        raise OperatorError(f'Eigen-solver failure while certifying coercivity: {ex}')
    if c_i > TOL_COERCIVE:
        return (c_i, 0.0), c_i
    return (c1, c2), c_i


def predicted_m_power(dim=1, order=1.0):
    """Smallest m >= 1 with m > dim/(2*order), where the resolvent power maps L1 into Linf."""
    return max(1, int(math.floor(dim / (2.0 * order))) + 1)


def predicted_resolvent_bound(m, delta=1.0, dim=1, order=1.0, heat_constant=None):
    """Majorant of ||(I + delta*A)^{-m}||_{L1->Linf} from the Laplace-transform
    representation of the resolvent power and a heat-kernel bound C*t^{-dim/(2*order)}.

    With the free-space Gaussian constant (the default for order 1) this is
    delta^{-dim/2} * Gamma(m - dim/2) / (Gamma(m) * (4*pi)^{dim/2})."""
    s = dim / (2.0 * order)
    if m <= s:
        return math.inf
    if heat_constant is None:
        heat_constant = (4.0 * math.pi) ** (-dim / 2.0) if order == 1.0 else 1.0
    return heat_constant * delta ** (-s) * math.gamma(m - s) / math.gamma(m)


def assemble(kind, grid, **coefficients):
    """Assemble the operator described by ``kind`` (a name or an OperatorSpec) on ``grid``."""
    spec = kind if isinstance(kind, OperatorSpec) else OperatorSpec(kind=kind, **coefficients)
    n, h = grid.n, grid.h
    banded = energy_banded = spectrum = None

    if spec.kind in (KIND_LAPLACIAN, KIND_FRACTIONAL):
        main, off = _diffusion_stencil(grid, np.ones(n + 1))
        laplacian = _tridiagonal(off, main, off)
        if spec.kind == KIND_LAPLACIAN:
            matrix = laplacian
            banded = _to_banded(matrix)
            energy_banded = banded.copy()
        else:
            if not (0.0 < spec.alpha <= 1.0):
                raise OperatorError(f'Fractional order must lie in (0, 1], got {spec.alpha}')
            try:
                values, vectors = scipy.linalg.eigh(laplacian)
            except np.linalg.LinAlgError as ex:
                raise OperatorError(f'Eigen-solver failure for the fractional power: {ex}')
            powered = values ** spec.alpha
            matrix = (vectors * powered) @ vectors.T
            matrix = 0.5 * (matrix + matrix.T)
            spectrum = (powered, vectors)
        energy = matrix.copy()
    elif spec.kind == KIND_DIVERGENCE:
        a_mid = evaluate(spec.a, x=grid.midpoints)
        b = evaluate(spec.b, x=grid.nodes)
        c = evaluate(spec.c, x=grid.nodes)
        a0 = evaluate(spec.a0, x=grid.nodes)
        a_min = float(np.min(a_mid))
        if a_min <= 0:
            raise OperatorError(f'Non-elliptic coefficients: min a = {a_min} <= 0')
        main, off = _diffusion_stencil(grid, a_mid)
        energy = _tridiagonal(off, main, off)
        upper = off + b[:-1] / (2 * h) - c[1:] / (2 * h)
        lower = off - b[1:] / (2 * h) + c[:-1] / (2 * h)
        worst = max(float(np.max(upper)), float(np.max(lower)))
        if worst > TOL_MARK * np.max(np.abs(main)):
            i = int(np.argmax(np.maximum(np.concatenate([upper, [-np.inf]]), np.concatenate([[-np.inf], lower]))))
            raise OperatorError(
                'Mesh-Peclet restriction h*|b-c| <= 2*a violated near x=%.6g (h=%.6g, max|b-c|=%.6g, a_min=%.6g)'
                % (grid.nodes[i], h, float(np.max(np.abs(b - c))), a_min))
        matrix = _tridiagonal(lower, main + a0, upper)
        banded = _to_banded(matrix)
        energy_banded = _to_banded(energy)
    elif spec.kind == KIND_ZERO:
        matrix = np.zeros((n, n))
        energy = np.zeros((n, n))
        banded = np.zeros((3, n))
        energy_banded = np.zeros((3, n))
    else:
        raise OperatorError(f"Unknown operator kind '{spec.kind}', expected one of {OPERATOR_KINDS}")

    form_sym = 0.5 * (matrix + matrix.T)
    coercivity, c_i = _coercivity(form_sym, energy)
    order = spec.alpha if spec.kind == KIND_FRACTIONAL else 1.0
    return DiscreteOperator(
        grid=grid,
        spec=spec,
        matrix=matrix,
        form_sym=form_sym,
        energy=energy,
        m_power=predicted_m_power(1, order),
        coercivity=coercivity,
        coercive_i=c_i,
        symmetric=bool(np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(matrix))))),
        banded=banded,
        energy_banded=energy_banded,
        spectrum=spectrum,
        _row_norm=float(np.max(np.sum(np.abs(matrix), axis=1))))


def reassemble(op, n):
    """Same coefficients on a grid with ``n`` interior nodes."""
    return assemble(op.spec, Grid(n, op.grid.length))


def eigenpairs(op):
    """Eigenvalues (ascending) and H-orthonormal eigenvectors of a symmetric operator."""
    if not op.symmetric:
        raise OperatorError('eigenpairs needs a symmetric operator')
    values, vectors = scipy.linalg.eigh(op.form_sym)
    return values, vectors / np.sqrt(op.grid.h)


def resolvent_solve(op, delta, f):
    """(I + delta*A)^{-1} f with a normwise backward-error check."""
    if not (np.isfinite(delta) and delta > 0):
        raise OperatorError(f'Resolvent parameter must be > 0, got {delta}')
    f = np.asarray(f, dtype=float)
    x = op.solve_shifted(delta, f)
    residual = x + delta * op.apply(x.T).T - f if x.ndim == 2 else x + delta * op.apply(x) - f
    norms = op.norms
    scale = np.max(norms.h(f.T)) + (1.0 + delta * op._row_norm) * np.max(norms.h(x.T))
    if not np.all(np.isfinite(x)) or np.max(norms.h(residual.T)) > TOL_LIN * max(scale, np.finfo(float).tiny):
        raise OperatorError(f'Singular system I + {delta}*A: residual above tolerance, accretivity audit failed')
    return x


def resolvent_power(op, delta, k, f):
    if int(k) != k or k < 1:
        raise OperatorError(f'Resolvent power must be an integer >= 1, got {k}')
    x = np.asarray(f, dtype=float)
    for _ in range(int(k)):
        x = resolvent_solve(op, delta, x)
    return x


def resolvent_matrix(op, delta, m=1):
    return resolvent_power(op, delta, m, np.eye(op.n))


def kernel(op, delta, m=1):
    """Kernel K of (I + delta*A)^{-m} with Tf(x_i) = sum_j K_ij f_j w_j."""
    return resolvent_matrix(op, delta, m) / op.grid.h


def l1_to_linf_norm(op, delta, m=1):
    return float(np.max(np.abs(kernel(op, delta, m))))


def l1_to_l1_norm(op, delta, m=1):
    return float(np.max(np.sum(np.abs(resolvent_matrix(op, delta, m)), axis=0)))


def operator_norm_vvstar(op):
    """||A||_{L(V, V*)} in the energy norm."""
    values, vectors = np.linalg.eigh(np.eye(op.n) + op.energy)
    inv_sqrt = (vectors / np.sqrt(values)) @ vectors.T
    return float(np.linalg.norm(inv_sqrt @ op.matrix @ inv_sqrt, 2))


@dataclass
class UltracontractivityFit:
    m_star: typing.Optional[int]
    bound: float
    predicted_m: int
    rows: typing.List[typing.Tuple[int, int, float, float]]

    @property
    def found(self):
        return self.m_star is not None


def ultracontractivity_fit(op, deltas=(1.0,), m_max=6, refinements=2, growth_ratio=0.7):
    """Smallest resolvent power whose L1->Linf norm stays bounded as the grid is refined.

    The norm is tracked on n, 2n+1, 4n+3, ... nodes; a power counts as bounded
    when its increments shrink geometrically (ratio <= growth_ratio)."""
    if not deltas:
        raise OperatorError('ultracontractivity_fit needs at least one delta')
    levels = [op]
    for _ in range(refinements):
        levels.append(reassemble(levels[-1], levels[-1].grid.refined().n))
    order = op.spec.alpha if op.kind == KIND_FRACTIONAL else 1.0
    rows = []
    m_star, bound = None, math.inf
    for m in range(1, m_max + 1):
        values = []
        for level in levels:
            norm = max(l1_to_linf_norm(level, d, m) for d in deltas)
            rows.append((m, level.n, float(max(deltas)), norm))
            values.append(norm)
        increments = np.diff(values)
        bounded = all(
            later <= growth_ratio * max(earlier, 0.0) + 1e-9 * values[-1]
            for earlier, later in zip(increments[:-1], increments[1:]))
        if bounded and m_star is None:
            m_star, bound = m, values[-1]
    return UltracontractivityFit(m_star=m_star, bound=bound, predicted_m=predicted_m_power(1, order), rows=rows)


def fitted_m_power(op, m_max=6, deltas=(1.0,)):
    """The operator with m_power set from the ultracontractivity fit, or to the
    predicted power when no power up to m_max is bounded uniformly in n."""
    fit = ultracontractivity_fit(op, deltas, m_max=m_max)
    return op.with_m_power(fit.m_star if fit.found else fit.predicted_m)


def strong_convergence_rate(op, f, deltas, k=1):
    """Fitted slope in delta of ||(I + delta*A)^{-k} f - f||_H."""
    deltas = np.asarray(deltas, dtype=float)
    norms = op.norms
    errors = np.array([norms.h(resolvent_power(op, d, k, f) - f) for d in deltas])
    if np.any(errors <= 0):
        return math.nan, errors
    slope, _ = np.polyfit(np.log(deltas), np.log(errors), 1)
    return float(slope), errors


def jensen_check(op, delta, g, f):
    """max of j(Tf) - T j(f) over entries, T = (I + delta*A)^{-1}."""
    f = np.asarray(f, dtype=float)
    tf = resolvent_solve(op, delta, f)
    tj = resolvent_solve(op, delta, np.asarray(g.j(f), dtype=float))
    return float(np.max(np.asarray(g.j(tf)) - tj))


def integral_jensen_check(op, delta, g, f):
    """int j(Tf) - int j(f); nonpositive when T is an L1-contraction and sub-Markovian."""
    f = np.asarray(f, dtype=float)
    tf = resolvent_solve(op, delta, f)
    h = op.grid.h
    return float(np.max(h * np.sum(np.asarray(g.j(tf)), axis=0) - h * np.sum(np.asarray(g.j(f)), axis=0)))


@dataclass
class AuditRow:
    condition: str
    passed: bool
    constant: float
    detail: str = ''


@dataclass
class AuditReport:
    kind: str
    rows: typing.List[AuditRow]
    coercivity: typing.Tuple[float, float]
    fit: typing.Optional[UltracontractivityFit] = None

    @property
    def m_power(self):
        if self.fit is None or not self.fit.found:
            return None
        return self.fit.m_star

    def row(self, condition):
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def passed(self, *conditions):
        selected = [r for r in self.rows if not conditions or r.condition in conditions]
        return all(r.passed for r in selected)


def audit_assumption_A(op, vectors=1000, deltas=(0.01, 0.1, 1.0, 10.0), seed=0, m_max=6, fit_deltas=(1.0,)):
    """Check conditions (i)/(i') through (iv) on the assembled operator."""
    if vectors < 1:
        raise OperatorError('audit needs at least one test vector')
    rng = np.random.Generator(np.random.PCG64(seed=seed))
    norms = op.norms
    h = op.grid.h
    rows = []
    trivial = not np.any(op.energy)
    c1, c2 = op.coercivity

    rows.append(AuditRow('i', op.coercive_i > TOL_COERCIVE, op.coercive_i,
                         'C=%.6g' % op.coercive_i if op.coercive_i > TOL_COERCIVE else 'not coercive without shift'))

    v = rng.standard_normal((vectors, op.n))
    lhs = h * np.sum(v * op.apply(v), axis=1)
    rhs = c1 * norms.v(v) ** 2 - c2 * norms.h(v) ** 2
    cert_ok = bool(np.all(lhs >= rhs - 1e-9 * (np.abs(lhs) + np.abs(rhs) + 1.0)))
    if trivial:
        rows.append(AuditRow("i'", False, c2, 'non-coercive: V-seminorm is trivial'))
    else:
        rows.append(AuditRow("i'", c1 > TOL_COERCIVE and cert_ok, c2,
                             'C1=%.6g C2=%.6g certificate %s' % (c1, c2, 'ok' if cert_ok else 'violated')))

    l1_norms = [l1_to_l1_norm(op, d) for d in deltas]
    worst_l1 = max(l1_norms)
    rows.append(AuditRow('ii', worst_l1 <= 1.0 + TOL_MARK, worst_l1, 'max ||(I+dA)^-1||_L1->L1 over %d deltas' % len(deltas)))

    f = rng.uniform(0.0, 1.0, (op.n, vectors))
    f[:, 0] = 1.0
    violations, worst = 0, 0.0
    for d in deltas:
        out = resolvent_solve(op, d, f)
        excess = np.maximum(-out, out - 1.0)
        violations += int(np.sum(excess > TOL_MARK))
        worst = max(worst, float(np.max(excess)))
    detail = '%d violations' % violations
    if violations and op.kind == KIND_DIVERGENCE:
        detail += ', sign condition a0 - div c >= 0 violated'
    rows.append(AuditRow('iii', violations == 0, worst, detail))

    fit = ultracontractivity_fit(op, fit_deltas, m_max=m_max)
    rows.append(AuditRow('iv', fit.found, fit.bound if fit.found else math.inf,
                         ('m=%d (predicted %d)' % (fit.m_star, fit.predicted_m)) if fit.found
                         else 'no power up to %d is uniform in n' % m_max))

    shift = []
    for d in deltas:
        shifted = np.linalg.inv(np.eye(op.n) * (1.0 + d * c2) + d * op.matrix)
        shift.append(float(np.linalg.norm(shifted, 2)))
    rows.append(AuditRow('shift_contraction', max(shift) <= 1.0 + TOL_MARK, max(shift), 'C2=%.6g' % c2))

    u = rng.standard_normal((vectors, op.n))
    w = rng.standard_normal((vectors, op.n))
    pairing = norms.inner(u, w)
    bound = norms.vstar(u) * norms.v(w)
    maximizer = norms.dual_maximizer(u)
    attained = norms.vstar(u) * norms.v(maximizer) - norms.inner(u, maximizer)
    dual_ok = bool(np.all(bound >= pairing - 1e-10 * (1.0 + np.abs(bound)))) and \
        bool(np.all(np.abs(attained) <= 1e-9 * (1.0 + norms.inner(u, maximizer))))
    embed_ok = bool(np.all(norms.vstar(u) <= norms.h(u) * (1 + 1e-12)) and np.all(norms.h(u) <= norms.v(u) * (1 + 1e-12)))
    rows.append(AuditRow('dual_norm', dual_ok and embed_ok, float(np.max(np.abs(attained))),
                         'embedding %s' % ('ok' if embed_ok else 'violated')))

    if op.kind == KIND_FRACTIONAL:
        base = assemble(KIND_LAPLACIAN, op.grid)
        expected = np.linalg.eigvalsh(base.matrix) ** op.spec.alpha
        error = float(np.max(np.abs(np.linalg.eigvalsh(op.matrix) - expected) / np.maximum(1.0, expected)))
        rows.append(AuditRow('fractional_spectrum', error <= 1e-10, error, 'alpha=%g' % op.spec.alpha))

    return AuditReport(kind=op.kind, rows=rows, coercivity=op.coercivity, fit=fit)
