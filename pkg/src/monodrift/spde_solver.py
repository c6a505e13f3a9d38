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

"""Time stepping for dX + AX dt + beta(X) dt = B(X) dW.

Two schemes share the Euler-Maruyama noise treatment:

* ``S1`` solves the Yosida-regularized equation implicitly,
  X + dt*A X + dt*beta_lam(X) = X_n + dB_n.
* ``S2`` splits the step: a linear implicit solve followed by the exact
  resolvent of beta node by node.

Paths are independent work units. Every path reads its Wiener draws from
its own counter-based stream, so results do not depend on how paths are
distributed over worker processes.
"""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
import math
from multiprocessing import Pool
import typing

import numpy as np

from .core import NumericalError, Table
from .expression import evaluate
from .noise_model import coarsen_increments, hs_norm, increment_from_draws, initial_generator, path_increments

SCHEME_REGULARIZED = 'S1'
SCHEME_PROX = 'S2'
SCHEMES = [SCHEME_REGULARIZED, SCHEME_PROX]
INNER_SOLVERS = ['newton', 'fixed_point']

_LINE_SEARCH_MIN = 1e-6
_FALLBACK_MAX_INNER = 20000


class SolverError(NumericalError):
    def __init__(self, message, step=None, contraction_estimate=None):
        super().__init__(message)
        self.step = step
        self.contraction_estimate = contraction_estimate


@dataclass(frozen=True)
class SolverParams:
    dt: float
    n_steps: int
    lam: float = 0.0
    inner: str = 'newton'
    theta: float = 0.5
    alpha: float = 0.0
    tol_step: float = 1e-10
    max_inner: int = 100

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise SolverError(f'dt must be > 0, got {self.dt}')
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise SolverError(f'Number of steps must be an integer >= 1, got {self.n_steps}')
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise SolverError(f'lambda must be >= 0, got {self.lam}')
        if self.inner not in INNER_SOLVERS:
            raise SolverError(f"Unknown inner solver '{self.inner}', expected one of {INNER_SOLVERS}")
        if not 0 < self.theta <= 1:
            raise SolverError(f'theta must lie in (0, 1], got {self.theta}')
        if self.alpha < 0:
            raise SolverError(f'alpha must be >= 0, got {self.alpha}')
        if self.inner == 'fixed_point' and self.lam > 0 and self.dt > self.theta * self.lam:
            raise SolverError('fixed_point inner solver requires dt <= theta*lambda (contraction cap): '
                              f'dt={self.dt}, theta*lambda={self.theta * self.lam}')

    @property
    def scheme(self):
        return SCHEME_REGULARIZED if self.lam > 0 else SCHEME_PROX

    @property
    def T(self):
        return self.dt * self.n_steps

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def with_lambda(self, lam):
        inner = self.inner
        if inner == 'fixed_point' and lam > 0 and self.dt > self.theta * lam:
            inner = 'newton'
        return replace(self, lam=float(lam), inner=inner)

    def with_steps(self, n_steps):
        """Same horizon T on ``n_steps`` steps."""
        return replace(self, dt=self.T / n_steps, n_steps=int(n_steps))


@dataclass(frozen=True)
class InitialCondition:
    """X0 = profile + delta*perturbation + amplitude * sum_k xi_k/k * e_k with
    e_k the sine modes and xi_k standard normal draws of the path."""
    profile: str = '0'
    perturbation: str = '0'
    delta: float = 0.0
    amplitude: float = 0.0
    modes: int = 8

    def sample(self, grid, seed=0, path_id=0):
        x = grid.nodes
        value = evaluate(self.profile, shape=x.shape, x=x, L=grid.length)
        if self.delta:
            value = value + self.delta * evaluate(self.perturbation, shape=x.shape, x=x, L=grid.length)
        if self.amplitude:
            draws = initial_generator(seed, path_id).standard_normal(self.modes)
            k = np.arange(1, self.modes + 1, dtype=float)
            basis = math.sqrt(2.0 / grid.length) * np.sin(np.outer(k, x) * np.pi / grid.length)
            value = value + self.amplitude * (draws / k) @ basis
        return value

    def shifted(self, delta):
        return replace(self, delta=float(delta))


@dataclass
class LedgerRow:
    step: int
    t: float
    h2: float
    v2: float
    j_lam: float
    j_star: float
    pairing: float
    hs2: float
    residual: float
    young_gap: float
    inner_iterations: int
    method: str


@dataclass(eq=False)
class Trajectory:
    path_id: int
    scheme: str
    params: SolverParams
    times: np.ndarray
    states: np.ndarray
    selections: np.ndarray
    noise_path: np.ndarray
    ledger: typing.List[LedgerRow] = field(default_factory=list)

    @property
    def x0(self):
        return self.states[0]

    def column(self, name):
        return np.array([getattr(row, name) for row in self.ledger])


def _ledger_row(op, g, lam, step, t, x, xi, hs2, residual, iterations, method):
    norms = op.norms
    h = op.grid.h
    if lam > 0:
        j_lam = h * float(np.sum(g.moreau(lam, x)))
        gap = np.abs(np.asarray(g.j(g.resolvent(lam, x))) + np.asarray(g.conjugate(xi)) - xi * g.resolvent(lam, x))
    else:
        j_lam = h * float(np.sum(g.j(x)))
        gap = np.abs(np.asarray(g.j(x)) + np.asarray(g.conjugate(xi)) - xi * x)
    with np.errstate(invalid='ignore'):
        young = float(np.max(gap)) if gap.size else 0.0
    return LedgerRow(
        step=step,
        t=t,
        h2=float(norms.h(x)) ** 2,
        v2=float(norms.v(x)) ** 2,
        j_lam=j_lam,
        j_star=h * float(np.sum(g.conjugate(xi))),
        pairing=h * float(np.sum(xi * x)),
        hs2=hs2,
        residual=residual,
        young_gap=young,
        inner_iterations=iterations,
        method=method)


def _fixed_point(op, g, lam, dt, rhs, x, tol, max_inner, params):
    norms = op.norms
    ratio = dt / lam
    if ratio <= params.theta:
        method = 'fixed_point'

        def update(y):
            return op.solve_shifted(dt, rhs - dt * g.yosida(lam, y))
        factor = ratio
    else:
        method = 'relaxed_fixed_point'
        shift = np.full(op.n, ratio)

        def update(y):
            return op.solve_shifted(dt, rhs + ratio * g.resolvent(lam, y), diag=shift)
        factor = ratio / (1.0 + ratio)
        if max_inner < _FALLBACK_MAX_INNER:
            needed = int(math.ceil(math.log(1e-16) / math.log(factor))) + 10
            max_inner = min(_FALLBACK_MAX_INNER, max(max_inner, needed))

    def residual(y):
        return y + dt * op.apply(y) + dt * g.yosida(lam, y) - rhs

    previous_move = None
    estimate = factor
    for iteration in range(1, max_inner + 1):
        x_new = update(x)
        move = float(norms.h(x_new - x))
        if previous_move:
            estimate = move / previous_move
        previous_move = move
        x = x_new
        if float(norms.h(residual(x))) <= tol:
            return x, iteration, method
    raise SolverError(f'{method} inner solver exceeded max_inner={max_inner} '
                      f'(contraction estimate {estimate:.6g}, bound {factor:.6g})', contraction_estimate=estimate)


def _solve_regularized(op, g, lam, dt, rhs, params):
    norms = op.norms
    tol = params.tol_step * (1.0 + float(norms.h(rhs)))
    x = op.solve_shifted(dt, rhs)
    if params.inner == 'fixed_point':
        return _fixed_point(op, g, lam, dt, rhs, x, tol, params.max_inner, params)

    def residual(y):
        return y + dt * op.apply(y) + dt * g.yosida(lam, y) - rhs

    r = residual(x)
    rn = float(norms.h(r))
    for iteration in range(params.max_inner + 1):
        if rn <= tol:
            return x, iteration, 'newton'
        dx = op.solve_shifted(dt, r, diag=dt * g.yosida_slope(lam, x))
        step = 1.0
        while True:
            candidate = x - step * dx
            rc = residual(candidate)
            rcn = float(norms.h(rc))
            if rcn <= (1.0 - 1e-4 * step) * rn or step < _LINE_SEARCH_MIN:
                break
            step *= 0.5
        if not rcn < rn:
            break
        x, r, rn = candidate, rc, rcn
    # newton stalled, continue from the best iterate
    return _fixed_point(op, g, lam, dt, rhs, x, tol, params.max_inner, params)


def _step_regularized(op, g, x_n, increment, dt, lam, params, hs2, step, t_n):
    if not lam > 0:
        raise SolverError('S1 requires lambda > 0', step=step)
    rhs = x_n + increment
    x, iterations, method = _solve_regularized(op, g, lam, dt, rhs, params)
    xi = g.yosida(lam, x)
    residual = float(op.norms.vstar(x - x_n + dt * op.apply(x) + dt * xi - increment))
    return x, xi, _ledger_row(op, g, lam, step, t_n + dt, x, xi, hs2, residual, iterations, method)


def _step_prox(op, g, x_n, increment, dt, hs2, step, t_n):
    z = op.solve_shifted(dt, x_n + increment)
    x = g.resolvent(dt, z)
    xi = (z - x) / dt
    defect = float(op.norms.vstar(dt * op.apply(x - z)))
    return x, xi, _ledger_row(op, g, 0.0, step, t_n + dt, x, xi, hs2, defect, 0, 'resolvent')


def _increment(nm, t, state, dw):
    if dw is None or nm is None:
        return np.zeros_like(state), 0.0 if nm is None else hs_norm(nm, t, state) ** 2
    return increment_from_draws(nm, t, state, dw), hs_norm(nm, t, state) ** 2


def step_regularized(op, g, nm, x_n, t_n, dt, lam, params, dw=None, noise_state=None, step=0):
    """One S1 step; ``dw`` are the Wiener draws of the step (None means no noise)
    and ``noise_state`` the state the diffusion is evaluated at (x_n by default)."""
    x_n = np.asarray(x_n, dtype=float)
    increment, hs2 = _increment(nm, t_n, x_n if noise_state is None else noise_state, dw)
    return _step_regularized(op, g, x_n, increment, dt, lam, params, hs2, step, t_n)


def step_prox(op, g, nm, x_n, t_n, dt, params, dw=None, noise_state=None, step=0):
    """One S2 step: linear implicit solve, then the resolvent of beta at every node."""
    x_n = np.asarray(x_n, dtype=float)
    increment, hs2 = _increment(nm, t_n, x_n if noise_state is None else noise_state, dw)
    return _step_prox(op, g, x_n, increment, dt, hs2, step, t_n)


def solve_path(scheme, op, g, nm, x0, params, path_id=0, dws=None, frozen=None):
    """Integrate one path. ``dws`` overrides the path's Wiener draws, ``frozen``
    (shape (N+1, n)) freezes the state at which the diffusion is evaluated."""
    if scheme not in SCHEMES:
        raise SolverError(f"Unknown scheme '{scheme}', expected one of {SCHEMES}")
    if scheme == SCHEME_REGULARIZED and not params.lam > 0:
        raise SolverError('S1 requires lambda > 0')
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (op.n,) or not np.all(np.isfinite(x0)):
        raise SolverError(f'Initial datum must be a finite vector of length {op.n}')
    N, dt = params.n_steps, params.dt
    if dws is None:
        dws = path_increments(nm.seed, path_id, N, nm.K, dt)
    if dws.shape != (N, nm.K):
        raise SolverError(f'Expected Wiener draws of shape {(N, nm.K)}, got {dws.shape}')

    times = params.times
    states = np.empty((N + 1, op.n))
    selections = np.empty((N, op.n))
    noise_path = np.zeros((N + 1, op.n))
    states[0] = x0
    ledger = []
    for n in range(N):
        x_n = states[n]
        state = x_n if frozen is None else frozen[n]
        increment, hs2 = _increment(nm, times[n], state, dws[n])
        try:
            if scheme == SCHEME_REGULARIZED:
                x, xi, row = _step_regularized(op, g, x_n, increment, dt, params.lam, params, hs2, n, times[n])
            else:
                x, xi, row = _step_prox(op, g, x_n, increment, dt, hs2, n, times[n])
        except NumericalError as ex:
            raise SolverError(f'step {n}: {ex}', step=n,
                              contraction_estimate=getattr(ex, 'contraction_estimate', None)) from ex
        states[n + 1] = x
        selections[n] = xi
        noise_path[n + 1] = noise_path[n] + increment
        ledger.append(row)
    return Trajectory(path_id=path_id, scheme=scheme, params=params, times=times, states=states,
                      selections=selections, noise_path=noise_path, ledger=ledger)


def _weights(params, alpha):
    return np.exp(-2.0 * alpha * params.times)


def path_norms(traj, op, g, alpha=0.0):
    """Squared solution-class norms of one path; step n pairs the state X^{n+1}
    and selection xi^n with the weight exp(-2*alpha*t_n)."""
    norms = op.norms
    params = traj.params
    dt, h = params.dt, op.grid.h
    w = _weights(params, alpha)
    nxt = traj.states[1:]
    xi = traj.selections
    return OrderedDict([
        ('sup_h2', float(np.max(w * norms.h(traj.states) ** 2))),
        ('l2_h2', float(dt * np.sum(w[:-1] * norms.h(nxt) ** 2))),
        ('l2_v2', float(dt * np.sum(w[:-1] * norms.v(nxt) ** 2))),
        ('xi_l1', float(dt * h * np.sum(np.abs(xi)))),
        ('pairing', float(dt * h * np.sum(xi * nxt))),
        ('j_lam', float(dt * np.sum(traj.column('j_lam')))),
        ('jstar', float(dt * np.sum(traj.column('j_star')))),
        ('j_plus_jstar', float(dt * h * np.sum(np.asarray(g.j(nxt)) + np.asarray(g.conjugate(xi))))),
        ('hs2_l2', float(dt * np.sum(traj.column('hs2')))),
        ('x0_h2', float(norms.h(traj.x0)) ** 2),
        ('xT_h2', float(norms.h(traj.states[-1])) ** 2),
        ('max_residual', float(np.max(traj.column('residual')))),
        ('max_young_gap', float(np.max(traj.column('young_gap')))),
    ])


class PairedNorms(typing.NamedTuple):
    sup_h2: float
    l2_h2: float
    l2_v2: float
    f_alpha: float


def paired_norms(traj_a, traj_b, op, alpha=0.0):
    """Norms of X_a - X_b; f_alpha is the weighted solution norm
    sqrt(sup e^{-2at}|D|_H^2 + int e^{-2at}|D|_V^2 + alpha int e^{-2at}|D|_H^2)."""
    if traj_a.states.shape != traj_b.states.shape:
        raise SolverError('Paired trajectories must share the time grid')
    norms = op.norms
    params = traj_a.params
    w = _weights(params, alpha)
    diff = traj_a.states - traj_b.states
    sup_h2 = float(np.max(w * norms.h(diff) ** 2))
    l2_h2 = float(params.dt * np.sum(w[:-1] * norms.h(diff[1:]) ** 2))
    l2_v2 = float(params.dt * np.sum(w[:-1] * norms.v(diff[1:]) ** 2))
    return PairedNorms(sup_h2, l2_h2, l2_v2, math.sqrt(sup_h2 + l2_v2 + alpha * l2_h2))


def diffusion_difference(nm_a, nm_b, traj_a, traj_b, alpha=0.0):
    """sqrt(sum_n dt e^{-2 alpha t_n} ||B_a(X_a^n) - B_b(X_b^n)||_HS^2)."""
    params = traj_a.params
    w = _weights(params, alpha)
    h = nm_a.grid.h
    total = 0.0
    for n in range(params.n_steps):
        t = params.times[n]
        diff = nm_a.columns_at(t, traj_a.states[n]) - nm_b.columns_at(t, traj_b.states[n])
        total += params.dt * w[n] * h * float(np.sum(diff * diff))
    return math.sqrt(total)


def monotone_loss(traj_a, traj_b, op):
    """sum_n dt <xi_a - xi_b, X_a - X_b>_H over the implicit states."""
    dt = traj_a.params.dt
    return float(dt * op.grid.h * np.sum((traj_a.selections - traj_b.selections) *
                                         (traj_a.states[1:] - traj_b.states[1:])))


def trajectory_table(trajectories, filename='trajectory.csv'):
    """Rows (path, n, t, node, X, xi) where xi is the selection of the step that produced X."""
    table = Table(filename, ['path', 'n', 't', 'node', 'X', 'xi'])
    for traj in trajectories:
        for n in range(1, traj.states.shape[0]):
            for i in range(traj.states.shape[1]):
                table.append(traj.path_id, n, float(traj.times[n]), i, float(traj.states[n, i]),
                             float(traj.selections[n - 1, i]))
    return table


def pool_map(func, tasks, workers=1):
    """Map over tasks in order, in a process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(func, tasks)


@dataclass(frozen=True, eq=False)
class PathSpec:
    """Everything but the Wiener draws that determines one path."""
    scheme: str
    params: SolverParams
    noise: typing.Any
    initial: InitialCondition


def _draws_for(specs, path_id):
    first = specs[0]
    fine = max(s.params.n_steps for s in specs)
    for s in specs:
        if fine % s.params.n_steps or not math.isclose(s.params.T, first.params.T, rel_tol=1e-12):
            raise SolverError('Paired paths need a common horizon and nested time grids')
        if s.noise.seed != first.noise.seed or s.noise.K != first.noise.K:
            raise SolverError('Paired paths need a common seed and mode count')
    draws = path_increments(first.noise.seed, path_id, fine, first.noise.K, first.params.T / fine)
    return [coarsen_increments(draws, fine // s.params.n_steps) for s in specs]


def solve_specs(op, g, specs, path_id=0):
    """Solve every spec for one path id on common Wiener draws."""
    out = []
    for spec, dws in zip(specs, _draws_for(specs, path_id)):
        x0 = spec.initial.sample(op.grid, spec.noise.seed, path_id)
        out.append(solve_path(spec.scheme, op, g, spec.noise, x0, spec.params, path_id, dws=dws))
    return out


def _run_specs(task):
    return solve_specs(*task)


def solve_many(op, g, specs, M, workers=1):
    """For every path id in range(M) solve all ``specs`` on common random numbers.
    Returns one list of trajectories (in ``specs`` order) per path."""
    if M < 1:
        raise SolverError(f'Number of paths must be >= 1, got {M}')
    return pool_map(_run_specs, [(op, g, list(specs), p) for p in range(M)], workers)


@dataclass
class Ensemble:
    scheme: str
    M: int
    params: SolverParams
    per_path: typing.Dict[str, np.ndarray]
    trajectories: typing.List[Trajectory] = field(default_factory=list)
    failures: typing.List[typing.Tuple[int, str]] = field(default_factory=list)

    @property
    def partial(self):
        return bool(self.failures)

    def estimate(self, name):
        return float(np.mean(self.per_path[name]))

    def std_error(self, name):
        values = self.per_path[name]
        if len(values) < 2:
            return 0.0
        return float(np.std(values, ddof=1) / math.sqrt(len(values)))

    def summary_rows(self, seed, epsilon=0.0):
        """(norm_name, estimate, std_error, M, dt, lambda, epsilon, alpha, scheme, seed)"""
        return [(name, self.estimate(name), self.std_error(name), len(self.per_path[name]), self.params.dt,
                 self.params.lam, epsilon, self.params.alpha, self.scheme, seed)
                for name in self.per_path]


ENSEMBLE_COLUMNS = ['norm_name', 'estimate', 'std_error', 'M', 'dt', 'lambda', 'epsilon', 'alpha', 'scheme', 'seed']


def _run_ensemble_path(task):
    scheme, op, g, nm, x0_sampler, params, path_id, retain = task
    try:
        x0 = x0_sampler.sample(op.grid, nm.seed, path_id)
        traj = solve_path(scheme, op, g, nm, x0, params, path_id)
    except NumericalError as ex:
        return path_id, None, None, str(ex)
    return path_id, path_norms(traj, op, g, params.alpha), traj if retain else None, None


def solve_ensemble(scheme, op, g, nm, x0_sampler, params, M, workers=1, retain=False):
    """Monte Carlo estimates over M paths. Per-path failures are recorded and
    the ensemble is marked partial; it fails only if every path fails."""
    if M < 1:
        raise SolverError(f'Number of paths must be >= 1, got {M}')
    tasks = [(scheme, op, g, nm, x0_sampler, params, p, retain) for p in range(M)]
    results = pool_map(_run_ensemble_path, tasks, workers)
    rows = [r for r in results if r[1] is not None]
    failures = [(p, message) for p, _, _, message in results if message is not None]
    if not rows:
        raise SolverError('Every path of the ensemble failed: %s' % failures[0][1])
    names = list(rows[0][1].keys())
    per_path = OrderedDict((name, np.array([r[1][name] for r in rows])) for name in names)
    trajectories = [r[2] for r in rows if r[2] is not None]
    return Ensemble(scheme=scheme, M=M, params=params, per_path=per_path, trajectories=trajectories,
                    failures=failures)


@dataclass
class PicardResult:
    alphas: typing.List[float]
    distances: np.ndarray
    ratios: np.ndarray
    factors: np.ndarray
    iterates: typing.List[Ensemble]
    noise_floor: float

    @property
    def fixed_point_residual(self):
        return float(self.distances[0, -1])

    def contraction_table(self):
        rows = []
        for a, alpha in enumerate(self.alphas):
            for k in range(self.distances.shape[1]):
                ratio = self.ratios[a, k - 1] if k else math.nan
                rows.append((float(alpha), k, float(self.distances[a, k]), float(ratio)))
        return rows


def _picard_path(task):
    scheme, op, g, nm, x0_sampler, params, path_id, iters, alphas = task
    x0 = x0_sampler.sample(op.grid, nm.seed, path_id)
    dws = path_increments(nm.seed, path_id, params.n_steps, nm.K, params.dt)
    frozen = np.tile(x0, (params.n_steps + 1, 1))
    norms = op.norms
    distances = np.empty((len(alphas), iters))
    iterate_norms = []
    for k in range(iters):
        traj = solve_path(scheme, op, g, nm, x0, params, path_id, dws=dws, frozen=frozen)
        diff2 = norms.h(traj.states[1:] - frozen[1:]) ** 2
        for a, alpha in enumerate(alphas):
            w = _weights(params, alpha)[:-1]
            distances[a, k] = params.dt * float(np.sum(w * diff2))
        iterate_norms.append(path_norms(traj, op, g, params.alpha))
        frozen = traj.states
    return distances, iterate_norms


def picard_iterate(op, g, nm, x0_sampler, params, M, iters, alphas=(0.0,), workers=1, scheme=None, noise_floor=1e-12):
    """Iterate Y -> X where X solves the equation with diffusion frozen at Y, on common
    random numbers, starting from the constant path X0.

    distances[a, k] = ||X^(k+1) - X^(k)|| in L^2(Omega; L^2_alpha(0,T;H)) for alphas[a]."""
    if iters < 2:
        raise SolverError('Picard iteration needs at least 2 iterations')
    scheme = scheme or params.scheme
    alphas = [float(a) for a in alphas]
    tasks = [(scheme, op, g, nm, x0_sampler, params, p, iters, alphas) for p in range(M)]
    results = pool_map(_picard_path, tasks, workers)
    distances = np.sqrt(np.mean([r[0] for r in results], axis=0))
    floor = noise_floor * max(1.0, float(np.max(distances[:, 0])))
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = np.where(distances[:, :-1] > floor, distances[:, 1:] / distances[:, :-1], 0.0)
    factors = np.zeros(len(alphas))
    for a in range(len(alphas)):
        valid = (distances[a, :-1] > floor) & (distances[a, 1:] > floor)
        if np.any(valid):
            factors[a] = float(np.exp(np.mean(np.log(ratios[a][valid]))))
    iterates = []
    for k in range(iters):
        names = list(results[0][1][k].keys())
        per_path = OrderedDict((name, np.array([r[1][k][name] for r in results])) for name in names)
        iterates.append(Ensemble(scheme=scheme, M=M, params=params, per_path=per_path))
    return PicardResult(alphas=alphas, distances=distances, ratios=ratios, factors=factors, iterates=iterates,
                        noise_floor=floor)
