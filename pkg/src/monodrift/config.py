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

"""Experiment configuration: a TOML file validated into pydantic models."""

from dataclasses import dataclass
import hashlib
import json
import math
import os
import sys
import typing

from packaging.specifiers import SpecifierSet
from packaging.version import InvalidVersion, Version
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt, ValidationError

# tomli can be removed when 3.10 based systems are not in support cycles
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ConfigError, Diagnostic, MonodriftError
from .monotone_graph import graph_from_spec
from .noise_model import build_noise, smooth
from .spatial_operator import OperatorSpec, Grid, assemble, fitted_m_power
from .spde_solver import InitialCondition, SolverParams

SUPPORTED_FORMAT = SpecifierSet('>=1,<2')
OUTPUT_ENV = 'MONODRIFT_OUT'
MAX_SEED = 2 ** 64 - 1


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class GridConfig(_Section):
    n: int = Field(31, ge=2, le=512)
    L: PositiveFloat = 1.0


class OperatorConfig(_Section):
    kind: typing.Literal['dirichlet_laplacian', 'divergence_form', 'fractional', 'zero'] = 'dirichlet_laplacian'
    a: str = '1'
    b: str = '0'
    c: str = '0'
    a0: str = '0'
    alpha: float = Field(0.5, gt=0.0, le=1.0)


class GraphConfig(_Section):
    kind: typing.Literal['linear', 'power', 'sign', 'sinh', 'piecewise'] = 'power'
    k: typing.Optional[NonNegativeFloat] = None
    p: typing.Optional[float] = Field(None, ge=1.0)
    c: typing.Optional[PositiveFloat] = None
    thresholds: typing.Optional[typing.List[NonNegativeFloat]] = None
    heights: typing.Optional[typing.List[PositiveFloat]] = None

    def as_spec(self):
        return self.model_dump(exclude_none=True)


class NoiseConfig(_Section):
    kind: typing.Literal['additive', 'multiplicative'] = 'additive'
    K: int = Field(8, ge=1, le=64)
    g: typing.Optional[str] = None
    sigma: typing.Optional[typing.Literal['identity', 'clamp', 'tanh', 'constant']] = None
    sigma_scale: PositiveFloat = 1.0
    amplitude: NonNegativeFloat = 0.5
    decay: NonNegativeFloat = 1.0
    epsilon: NonNegativeFloat = 0.0
    radius: typing.Optional[PositiveFloat] = None


class SolverConfig(_Section):
    scheme: typing.Literal['S1', 'S2'] = 'S1'
    T: PositiveFloat = 1.0
    n_steps: typing.Optional[PositiveInt] = None
    dt: typing.Optional[PositiveFloat] = None
    lam: NonNegativeFloat = 0.0625
    inner: typing.Literal['newton', 'fixed_point'] = 'newton'
    theta: float = Field(0.5, gt=0.0, le=1.0)
    alpha: NonNegativeFloat = 0.0
    tol_step: PositiveFloat = 1e-10
    max_inner: PositiveInt = 100

    def resolved_steps(self):
        if self.n_steps is not None:
            return self.n_steps
        if self.dt is not None:
            return max(1, int(round(self.T / self.dt)))
        return 64


class EnsembleConfig(_Section):
    M: int = Field(64, ge=1)
    seed: int = Field(20240601, ge=0, le=MAX_SEED)


class InitialConfig(_Section):
    profile: str = 'sin(pi*x)'
    perturbation: str = 'sin(pi*x)'
    amplitude: NonNegativeFloat = 0.2
    modes: PositiveInt = 8


def _default_lambda_graphs():
    return [GraphConfig(kind='power', p=3.0), GraphConfig(kind='sign', c=1.0)]


def _default_picard_noise():
    return NoiseConfig(kind='multiplicative', sigma='tanh', amplitude=2.0, K=8)


class StudiesConfig(_Section):
    graph_samples: PositiveInt = 10000
    audit_vectors: PositiveInt = 1000
    audit_deltas: typing.List[PositiveFloat] = Field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0], min_length=1)
    m_max: PositiveInt = 6
    lambdas: typing.List[PositiveFloat] = Field(
        default_factory=lambda: [4.0 ** -k for k in range(1, 5)], min_length=2)
    lambda_graphs: typing.List[GraphConfig] = Field(default_factory=_default_lambda_graphs, min_length=1)
    lambda_paths: PositiveInt = 16
    epsilons: typing.List[PositiveFloat] = Field(
        default_factory=lambda: [4.0 ** -k for k in range(2, 8)], min_length=1)
    alphas: typing.List[NonNegativeFloat] = Field(default_factory=lambda: [0.0, 4.0, 16.0], min_length=1)
    deltas: typing.List[PositiveFloat] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4], min_length=2)
    dt_ladder: typing.List[PositiveInt] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=2)
    energy_paths: PositiveInt = 4
    picard_alphas: typing.List[PositiveFloat] = Field(default_factory=lambda: [4.0, 16.0, 64.0, 256.0], min_length=2)
    picard_iters: int = Field(4, ge=3)
    picard_paths: PositiveInt = 16
    picard_steps: PositiveInt = 256
    picard_noise: NoiseConfig = Field(default_factory=_default_picard_noise)
    uniqueness_lambda: PositiveFloat = 1e-4
    uniqueness_envelope: PositiveFloat = 0.05
    dump_trajectories: bool = False


class OutputConfig(_Section):
    dir: str = 'monodrift-out'


class ExperimentConfig(_Section):
    format_version: str = '1'
    grid: GridConfig = Field(default_factory=GridConfig)
    operator: OperatorConfig = Field(default_factory=OperatorConfig)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    studies: StudiesConfig = Field(default_factory=StudiesConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def read_toml(config_path):
    """Parse a TOML file, raising ConfigError for missing, empty or malformed files."""
    try:
        with open(config_path, 'rb') as fh:
            raw = fh.read()
    except OSError as ex:
        raise ConfigError(f'Cannot read configuration {config_path}: {ex.strerror}',
                          [Diagnostic('', f'cannot read {config_path}')])
    if not raw.strip():
        raise ConfigError(f'Parse error in {config_path}: empty configuration',
                          [Diagnostic('', 'empty configuration')])
    try:
        return tomllib.loads(raw.decode('utf-8'))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as ex:
        raise ConfigError(f'Parse error in {config_path}: {ex}', [Diagnostic('', f'parse error: {ex}')])


def _schema_diagnostics(ex):
    return [Diagnostic('.'.join(str(part) for part in error['loc']), error['msg']) for error in ex.errors()]


def _semantic_diagnostics(config):
    diagnostics = []
    try:
        if Version(config.format_version) not in SUPPORTED_FORMAT:
            diagnostics.append(Diagnostic('format_version', f'unsupported format version, expected {SUPPORTED_FORMAT}'))
    except InvalidVersion:
        diagnostics.append(Diagnostic('format_version', f"invalid version '{config.format_version}'"))

    solver = config.solver
    if solver.scheme == 'S1' and not solver.lam > 0:
        diagnostics.append(Diagnostic('solver.lam', 'S1 requires lambda > 0'))
    n_steps = solver.resolved_steps()
    dt = solver.T / n_steps
    if solver.dt is not None and solver.n_steps is not None and \
            not math.isclose(solver.dt * solver.n_steps, solver.T, rel_tol=1e-9):
        diagnostics.append(Diagnostic('solver.n_steps', 'dt*N must equal T'))
    elif solver.dt is not None and not math.isclose(dt, solver.dt, rel_tol=1e-9):
        diagnostics.append(Diagnostic('solver.dt', 'T must be an integer multiple of dt'))
    if solver.inner == 'fixed_point' and solver.lam > 0 and dt > solver.theta * solver.lam:
        diagnostics.append(Diagnostic(
            'solver.dt', 'fixed_point inner solver requires dt <= theta*lambda (contraction cap)'))

    grid = Grid(config.grid.n, config.grid.L)
    op = None
    try:
        op = assemble(operator_spec(config), grid)
    except MonodriftError as ex:
        diagnostics.append(Diagnostic('operator', str(ex)))
    for path, spec in [('graph', config.graph)] + [('studies.lambda_graphs.%d' % i, s)
                                                   for i, s in enumerate(config.studies.lambda_graphs)]:
        try:
            graph_from_spec(spec.as_spec())
        except MonodriftError as ex:
            diagnostics.append(Diagnostic(path, str(ex)))
    for path, noise in (('noise', config.noise), ('studies.picard_noise', config.studies.picard_noise)):
        try:
            model = build_noise_model(noise, grid, config.ensemble.seed)
            if noise.epsilon > 0 and op is not None:
                smooth(model, op, noise.epsilon)
        except MonodriftError as ex:
            diagnostics.append(Diagnostic(path, str(ex)))
    for path, expression in (('initial.profile', config.initial.profile),
                             ('initial.perturbation', config.initial.perturbation)):
        try:
            InitialCondition(profile=expression).sample(grid)
        except MonodriftError as ex:
            diagnostics.append(Diagnostic(path, str(ex)))
    return diagnostics


def validate_data(data):
    """Return ``(config, diagnostics)``; config is None when the schema does not validate."""
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as ex:
        return None, _schema_diagnostics(ex)
    return config, _semantic_diagnostics(config)


def validate_config(config_path):
    """Every constraint violation of the file as a Diagnostic; empty for valid files.
    Raises ConfigError when the file cannot be parsed."""
    _, diagnostics = validate_data(read_toml(config_path))
    return diagnostics


def load_config(config_path, seed=None):
    config, diagnostics = validate_data(read_toml(config_path))
    if diagnostics:
        raise ConfigError(f'Invalid configuration {config_path}', diagnostics)
    if seed is not None:
        config = config.model_copy(update={'ensemble': config.ensemble.model_copy(update={'seed': seed})})
    return config


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON dump, output settings excluded."""
    payload = config.model_dump(mode='json', exclude={'output'})
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def operator_spec(config):
    o = config.operator
    return OperatorSpec(kind=o.kind, a=o.a, b=o.b, c=o.c, a0=o.a0, alpha=o.alpha if o.kind == 'fractional' else 1.0)


def build_noise_model(noise, grid, seed):
    return build_noise(grid, kind=noise.kind, K=noise.K, g=noise.g, sigma=noise.sigma, sigma_scale=noise.sigma_scale,
                       amplitude=noise.amplitude, decay=noise.decay, seed=seed,
                       radius=math.inf if noise.radius is None else noise.radius)


def solver_params(solver):
    n_steps = solver.resolved_steps()
    return SolverParams(dt=solver.T / n_steps, n_steps=n_steps, lam=solver.lam if solver.scheme == 'S1' else 0.0,
                        inner=solver.inner, theta=solver.theta, alpha=solver.alpha, tol_step=solver.tol_step,
                        max_inner=solver.max_inner)


def resolve_out_dir(cli_out, config):
    if cli_out:
        return cli_out
    return os.environ.get(OUTPUT_ENV) or config.output.dir


@dataclass(eq=False)
class ExperimentContext:
    """What studies read: the validated config and the objects assembled from it."""
    config: ExperimentConfig
    config_hash: str
    out_dir: str
    workers: int
    grid: Grid
    op: typing.Any
    graph: typing.Any
    noise: typing.Any
    params: SolverParams
    initial: InitialCondition

    @property
    def seed(self):
        return self.config.ensemble.seed

    @property
    def scheme(self):
        return self.config.solver.scheme


def build_context(config, out_dir, workers=1):
    grid = Grid(config.grid.n, config.grid.L)
    op = fitted_m_power(assemble(operator_spec(config), grid), m_max=config.studies.m_max)
    noise = build_noise_model(config.noise, grid, config.ensemble.seed)
    if config.noise.epsilon > 0:
        noise = smooth(noise, op, config.noise.epsilon)
    i = config.initial
    initial = InitialCondition(profile=i.profile, perturbation=i.perturbation, amplitude=i.amplitude, modes=i.modes)
    return ExperimentContext(config=config, config_hash=config_hash(config), out_dir=out_dir, workers=workers,
                             grid=grid, op=op, graph=graph_from_spec(config.graph.as_spec()), noise=noise,
                             params=solver_params(config.solver), initial=initial)
