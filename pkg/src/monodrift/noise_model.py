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

"""Finite-rank Hilbert-Schmidt diffusion driven by a truncated cylindrical
Wiener process.

Mode ``k`` of the diffusion is ``g_k`` (additive) or ``g_k * sigma(x)``
taken pointwise (multiplicative). Wiener draws come from a Philox stream
keyed by ``(seed, path)`` so every path can be replayed on its own.
"""

from dataclasses import dataclass, replace
import math
import typing

import numpy as np

from .core import NumericalError
from .expression import evaluate
from .spatial_operator import Grid, resolvent_power

KIND_ADDITIVE = 'additive'
KIND_MULTIPLICATIVE = 'multiplicative'
NOISE_KINDS = [KIND_ADDITIVE, KIND_MULTIPLICATIVE]

# (sigma(s, c), Lipschitz constant, pointwise bound |sigma(s)| <= bound*|s| + offset as (bound, offset))
SIGMA_FAMILIES = {
    'identity': (lambda s, c: s, lambda c: 1.0, lambda c: (1.0, 0.0)),
    'clamp': (lambda s, c: np.clip(s, -c, c), lambda c: 1.0, lambda c: (0.0, c)),
    'tanh': (lambda s, c: c * np.tanh(s / c), lambda c: 1.0, lambda c: (0.0, c)),
    'constant': (lambda s, c: np.ones_like(s), lambda c: 0.0, lambda c: (0.0, 1.0)),
}

_INITIAL_COUNTER = np.array([0, 0, 0, 1], dtype=np.uint64)


class NoiseError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseModel:
    grid: Grid
    columns: np.ndarray
    kind: str = KIND_ADDITIVE
    sigma: str = 'constant'
    sigma_scale: float = 1.0
    seed: int = 0
    epsilon: float = 0.0
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise NoiseError(f"Unknown noise kind '{self.kind}', expected one of {NOISE_KINDS}")
        if self.sigma not in SIGMA_FAMILIES:
            raise NoiseError(f"Unknown sigma family '{self.sigma}', expected one of {sorted(SIGMA_FAMILIES)}")
        if self.columns.ndim != 2 or self.columns.shape[0] < 1 or self.columns.shape[1] != self.grid.n:
            raise NoiseError(f'Noise columns must have shape (K, {self.grid.n}), got {self.columns.shape}')
        if not np.all(np.isfinite(self.columns)):
            raise NoiseError('Noise columns are not finite')
        if not self.sigma_scale > 0:
            raise NoiseError(f'sigma scale must be > 0, got {self.sigma_scale}')
        if not self.radius > 0:
            raise NoiseError(f'truncation radius must be > 0, got {self.radius}')

    @property
    def K(self):
        return self.columns.shape[0]

    @property
    def factor_hs(self):
        """Hilbert-Schmidt norm of the factor columns g_k."""
        return float(np.sqrt(self.grid.h * np.sum(self.columns ** 2)))

    @property
    def _column_energy(self):
        return np.sum(self.columns ** 2, axis=0)

    @property
    def lipschitz(self):
        if self.kind == KIND_ADDITIVE:
            return 0.0
        _, lip, _ = SIGMA_FAMILIES[self.sigma]
        return lip(self.sigma_scale) * float(np.sqrt(np.max(self._column_energy)))

    @property
    def growth(self):
        if self.kind == KIND_ADDITIVE:
            return self.factor_hs
        _, _, bound = SIGMA_FAMILIES[self.sigma]
        slope, offset = bound(self.sigma_scale)
        return max(slope * float(np.sqrt(np.max(self._column_energy))), offset * self.factor_hs)

    def project(self, x):
        """Projection of x onto the H-ball of the truncation radius."""
        x = np.asarray(x, dtype=float)
        if math.isinf(self.radius):
            return x
        norm = float(np.sqrt(self.grid.h * np.sum(x * x)))
        return x if norm <= self.radius else x * (self.radius / norm)

    def columns_at(self, t, x):
        """Matrix whose row k is B(t, x) e_k."""
        if self.kind == KIND_ADDITIVE:
            return self.columns
        func, _, _ = SIGMA_FAMILIES[self.sigma]
        return self.columns * func(self.project(x), self.sigma_scale)[None, :]


def _mode_columns(grid, K, g=None, amplitude=1.0, decay=1.0):
    k = np.arange(1, K + 1, dtype=float)[:, None]
    x = grid.nodes[None, :]
    if g is not None:
        return evaluate(g, shape=(K, grid.n), x=x, k=k, L=grid.length)
    return amplitude * math.sqrt(2.0 / grid.length) * k ** (-decay) * np.sin(k * np.pi * x / grid.length)


def build_noise(grid, kind=KIND_ADDITIVE, K=8, g=None, sigma=None, sigma_scale=1.0, amplitude=1.0, decay=1.0,
                seed=0, radius=math.inf):
    """Assemble a noise model; ``g`` is an expression in ``x`` and ``k`` overriding the sine modes."""
    if int(K) != K or K < 1:
        raise NoiseError(f'Number of modes must be an integer >= 1, got {K}')
    if sigma is None:
        sigma = 'constant' if kind == KIND_ADDITIVE else 'tanh'
    columns = _mode_columns(grid, int(K), g, amplitude, decay)
    return NoiseModel(grid=grid, columns=columns, kind=kind, sigma=sigma, sigma_scale=sigma_scale,
                      seed=int(seed), radius=radius)


def hs_norm(nm, t, x):
    cols = nm.columns_at(t, x)
    return float(np.sqrt(nm.grid.h * np.sum(cols * cols)))


def increment_from_draws(nm, t, x, dw):
    """sum_k B(t, x) e_k * dw_k for given Wiener draws."""
    dw = np.asarray(dw, dtype=float)
    if dw.shape != (nm.K,):
        raise NoiseError(f'Expected {nm.K} Wiener draws, got shape {dw.shape}')
    return dw @ nm.columns_at(t, x)


def sample_wiener(rng, K, dt):
    if not dt > 0:
        raise NoiseError(f'Time step must be > 0, got {dt}')
    return rng.standard_normal(K) * math.sqrt(dt)


def sample_increment(nm, t, x, dt, rng):
    return increment_from_draws(nm, t, x, sample_wiener(rng, nm.K, dt))


class IncrementOracle(typing.NamedTuple):
    mean: float
    expected: float
    standard_error: float

    def passed(self, standard_errors=3.0):
        return abs(self.mean - self.expected) <= standard_errors * self.standard_error


def increment_oracle(nm, t, x, dt, samples=2000, seed=0):
    """Sample mean of |B(t, x) dW|_H^2 / dt against its expectation ||B(t, x)||_HS^2."""
    if samples < 2:
        raise NoiseError(f'increment oracle needs at least two samples, got {samples}')
    rng = np.random.Generator(np.random.PCG64(seed=seed))
    h = nm.grid.h
    values = np.array([h * np.sum(sample_increment(nm, t, x, dt, rng) ** 2) / dt for _ in range(samples)])
    return IncrementOracle(mean=float(np.mean(values)), expected=hs_norm(nm, t, x) ** 2,
                           standard_error=float(np.std(values, ddof=1) / math.sqrt(samples)))


def step_generator(seed, path_id, step):
    """Stream of step ``step`` of one path: Philox keyed by (seed, path) with the step in the third counter word.
    Mode k of the step is the k-th draw of this stream."""
    counter = np.array([0, 0, step, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=np.array([seed, path_id], dtype=np.uint64), counter=counter))


def initial_generator(seed, path_id):
    """Stream for initial-datum perturbations, disjoint from the Wiener stream of the same path."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, path_id], dtype=np.uint64),
                                                counter=_INITIAL_COUNTER))


def path_increments(seed, path_id, n_steps, K, dt):
    """Wiener increments of one path as an (n_steps, K) array, row n holding the draws of step n."""
    if not dt > 0:
        raise NoiseError(f'Time step must be > 0, got {dt}')
    draws = np.empty((n_steps, K))
    for n in range(n_steps):
        draws[n] = step_generator(seed, path_id, n).standard_normal(K)
    return draws * math.sqrt(dt)


def coarsen_increments(dw, factor):
    """Sum consecutive groups of ``factor`` fine increments."""
    dw = np.asarray(dw, dtype=float)
    if int(factor) != factor or factor < 1 or dw.shape[0] % factor:
        raise NoiseError(f'Cannot coarsen {dw.shape[0]} increments by a factor of {factor}')
    return dw.reshape(dw.shape[0] // int(factor), int(factor), dw.shape[1]).sum(axis=1)


def smooth(nm, op, epsilon):
    """Replace every factor column by (I + epsilon*A)^{-m} g_k."""
    if not epsilon > 0:
        raise NoiseError(f'Smoothing level must be > 0, got {epsilon}')
    if not np.any(nm.columns):
        return replace(nm, epsilon=epsilon)
    smoothed = resolvent_power(op, epsilon, op.m_power, nm.columns.T).T
    return replace(nm, columns=np.ascontiguousarray(smoothed), epsilon=epsilon)


def truncate(nm, radius):
    """B_R(t, x) = B(t, P_R x) with P_R the projection onto the H-ball of radius R."""
    return replace(nm, radius=float(radius))


class SmoothingGap(typing.NamedTuple):
    lhs: float
    rhs: float
    shifted_contraction: float


def smoothing_gap(nm, op, epsilon):
    """lhs = ||(I+eps A)^{-m} G||_HS against rhs = ||(I+eps A)^{-m}||_{H->H} ||G||_HS for the factor columns G.

    ``shifted_contraction`` is the H-norm of the shifted power (I + eps(A + C2))^{-m}, at most one."""
    m = op.m_power
    smoothed = smooth(nm, op, epsilon)
    identity = np.eye(op.n)
    power = resolvent_power(op, epsilon, m, identity)
    _, c2 = op.coercivity
    shifted = np.linalg.matrix_power(np.linalg.inv(identity * (1.0 + epsilon * c2) + epsilon * op.matrix), m)
    return SmoothingGap(lhs=smoothed.factor_hs, rhs=float(np.linalg.norm(power, 2)) * nm.factor_hs,
                        shifted_contraction=float(np.linalg.norm(shifted, 2)))


def mode_truncation_table(grid, Ks, x=None, **settings):
    """Rows (K, hs_norm, relative change to the largest K) for a sequence of mode counts."""
    x = np.ones(grid.n) if x is None else np.asarray(x, dtype=float)
    norms = [hs_norm(build_noise(grid, K=K, **settings), 0.0, x) for K in Ks]
    reference = norms[-1] if norms and norms[-1] > 0 else 1.0
    return [(int(K), norm, abs(norms[-1] - norm) / reference) for K, norm in zip(Ks, norms)]


class NoiseCheck(typing.NamedTuple):
    name: str
    samples: int
    violations: int
    worst: float


def check_certificates(nm, samples=1000, seed=0, scale=2.0):
    """Sample states and verify the certified Lipschitz and linear-growth constants."""
    rng = np.random.Generator(np.random.PCG64(seed=seed))
    h = nm.grid.h
    lip_excess, growth_excess = [], []
    for _ in range(samples):
        t = float(rng.uniform())
        x = scale * rng.standard_normal(nm.grid.n)
        y = scale * rng.standard_normal(nm.grid.n)
        diff = nm.columns_at(t, x) - nm.columns_at(t, y)
        lhs = math.sqrt(h * np.sum(diff * diff))
        dist = math.sqrt(h * np.sum((x - y) ** 2))
        lip_excess.append(lhs - nm.lipschitz * dist * (1 + 1e-12) - 1e-12)
        growth_excess.append(hs_norm(nm, t, x) - nm.growth * (1.0 + math.sqrt(h * np.sum(x * x))) * (1 + 1e-12) - 1e-12)
    rows = []
    for name, excess in (('lipschitz', lip_excess), ('growth', growth_excess)):
        excess = np.asarray(excess)
        rows.append(NoiseCheck(name, samples, int(np.sum(excess > 0)), float(np.max(excess))))
    return rows
