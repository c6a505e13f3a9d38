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

from dataclasses import replace
import math

import numpy as np

from .config import build_noise_model
from .core import CheckOutcome, MonodriftStudy, StudyOutcome, Table
from .graph_studies import register_study_flag
from .monotone_graph import LinearGraph, graph_from_spec
from .noise_model import (KIND_ADDITIVE, build_noise, check_certificates, increment_oracle, mode_truncation_table,
                          smoothing_gap, truncate)
from .spatial_operator import eigenpairs, resolvent_matrix
from .spde_solver import (ENSEMBLE_COLUMNS, SCHEME_PROX, SCHEME_REGULARIZED, PathSpec, monotone_loss, paired_norms,
                          picard_iterate, solve_ensemble, solve_many, solve_path, solve_specs, trajectory_table)
from .verification import (REPORT_COLUMNS, contraction_rate_fit, continuous_dependence_check,
                           energy_defect_sweep, epsilon_cauchy_check, expectation_energy_check,
                           jstar_integrability_check, lipschitz_regression, node_identity_gap, pathwise_energy_check,
                           uniformity_report, uniqueness_mollifier_check)

ORACLE_TOL = 1e-12
MEMBERSHIP_TOL = 1e-9
RESIDUAL_SLACK = 10.0
STANDARD_ERRORS = 3.0
R2_MIN = 0.99
EXPONENT_RANGE = (-0.7, -0.3)


def report_table(filename, reports):
    table = Table(filename, REPORT_COLUMNS)
    for r in reports:
        table.append(*r.row())
    return table


def report_check(name, report):
    return CheckOutcome(name, report.passed, report.lhs,
                        'rhs=%r constant=%r%s' % (report.rhs, report.constant,
                                                  ' ' + report.detail if report.detail else ''))


def regularized_params(context):
    """Solver parameters for the regularized scheme; the smallest swept lambda when S2 is configured."""
    if context.params.lam > 0:
        return context.params
    return context.params.with_lambda(min(context.config.studies.lambdas))


def zero_noise(grid, seed):
    return build_noise(grid, K=1, amplitude=0.0, seed=seed)


def raw_noise(context):
    """The configured noise before smoothing."""
    return build_noise_model(context.config.noise, context.grid, context.seed)


class Solve(MonodriftStudy):
    """Monte Carlo ensemble of the configured scheme with deterministic and covariance oracles."""

    @staticmethod
    def get_name():
        return 'solve'

    def invoke_after(self, cliargs):
        return {'audit_operator'}

    def statements(self):
        return ['existence of strong solutions', 'solution class norms', 'Hilbert-Schmidt noise conditions']

    def run(self, context):
        config = context.config
        op, g, nm, params = context.op, context.graph, context.noise, context.params
        ens = solve_ensemble(context.scheme, op, g, nm, context.initial, params, config.ensemble.M,
                             context.workers, retain=config.studies.dump_trajectories)
        summary = Table('ensemble.csv', ENSEMBLE_COLUMNS)
        for row in ens.summary_rows(context.seed, config.noise.epsilon):
            summary.append(*row)
        outcome = StudyOutcome(tables=[summary])
        outcome.checks.append(CheckOutcome(
            'ensemble complete', not ens.partial, float(len(ens.failures)),
            '; '.join('path %d: %s' % f for f in ens.failures[:3])))

        if context.scheme == SCHEME_REGULARIZED:
            residual = float(np.max(ens.per_path['max_residual']))
            bound = RESIDUAL_SLACK * params.tol_step * (1.0 + math.sqrt(float(np.max(ens.per_path['sup_h2']))))
            outcome.checks.append(CheckOutcome('step residual', residual <= bound, residual, 'bound %r' % bound))
        gap = float(np.max(ens.per_path['max_young_gap']))
        outcome.checks.append(CheckOutcome('graph membership', gap <= MEMBERSHIP_TOL, gap,
                                           'max |j(x) + j*(xi) - xi x| over nodes'))

        outcome.checks.append(self._decay_oracle(context))
        outcome.checks.append(self._covariance_oracle(context))
        outcome.checks.append(self._dissipation(context))
        outcome.tables.extend(self._noise_tables(context, outcome))
        if ens.trajectories:
            outcome.tables.append(trajectory_table(ens.trajectories, 'trajectories.csv'))
        return outcome

    def _decay_oracle(self, context):
        op, params = context.op, context.params
        if not op.symmetric:
            return CheckOutcome('decay oracle', True, math.nan, 'skipped: operator is not symmetric')
        values, vectors = eigenpairs(op)
        x0 = vectors[:, 0]
        traj = solve_path(context.scheme, op, LinearGraph(0.0), zero_noise(context.grid, context.seed), x0, params)
        expected = np.outer((1.0 + params.dt * values[0]) ** -np.arange(params.n_steps + 1), x0)
        error = float(np.max(op.norms.h(traj.states - expected)))
        return CheckOutcome('decay oracle', error <= ORACLE_TOL, error,
                            'first eigenvalue %r' % float(values[0]))

    def _covariance_oracle(self, context):
        op, nm, params = context.op, context.noise, context.params
        if nm.kind != KIND_ADDITIVE:
            return CheckOutcome('covariance oracle', True, math.nan, 'skipped: multiplicative noise')
        initial = replace(context.initial, amplitude=0.0)
        x0 = initial.sample(context.grid)
        resolvent = resolvent_matrix(op, params.dt)
        forcing = params.dt * nm.columns.T @ nm.columns
        cov = np.outer(x0, x0)
        for _ in range(params.n_steps):
            cov = resolvent @ (cov + forcing) @ resolvent.T
        expected = context.grid.h * float(np.trace(cov))
        ens = solve_ensemble(context.scheme, op, LinearGraph(0.0), nm, initial, params,
                             context.config.ensemble.M, context.workers)
        estimate, se = ens.estimate('xT_h2'), ens.std_error('xT_h2')
        return CheckOutcome('covariance oracle', abs(estimate - expected) <= STANDARD_ERRORS * se, estimate,
                            'expected %r, standard error %r' % (expected, se))

    def _dissipation(self, context):
        op, params = context.op, context.params
        if op.coercivity[1] > 0:
            return CheckOutcome('noiseless dissipation', True, math.nan, 'skipped: shifted coercivity')
        traj = solve_path(context.scheme, op, context.graph, zero_noise(context.grid, context.seed),
                          context.initial.sample(context.grid), params)
        norms = op.norms.h(traj.states)
        growth = float(np.max(np.diff(norms) - 1e-12 * norms[:-1], initial=-math.inf))
        return CheckOutcome('noiseless dissipation', growth <= 0, growth, 'max |X^{n+1}| - |X^n|')

    def _noise_tables(self, context, outcome):
        nm = raw_noise(context)
        certificates = Table('noise_certificates.csv', ['model', 'check', 'samples', 'violations', 'worst'])
        for label, model in (('configured', nm), ('truncated', truncate(nm, 1.0))):
            for c in check_certificates(model, samples=200, seed=context.seed):
                certificates.append(label, c.name, c.samples, c.violations, c.worst)
                outcome.checks.append(CheckOutcome('%s noise %s' % (label, c.name), c.violations == 0, c.worst,
                                                   'certified constant'))
        oracle = increment_oracle(nm, 0.0, context.initial.sample(context.grid), context.params.dt, seed=context.seed)
        outcome.checks.append(CheckOutcome('increment oracle', oracle.passed(STANDARD_ERRORS), oracle.mean,
                                           'expected %r, standard error %r' % (oracle.expected, oracle.standard_error)))
        noise = context.config.noise
        modes = Table('mode_truncation.csv', ['K', 'hs_norm', 'relative_change'])
        for row in mode_truncation_table(context.grid, [1, 2, 4, 8, 16, 32], amplitude=noise.amplitude,
                                         decay=noise.decay, seed=context.seed):
            modes.append(*row)
        smoothing = Table('smoothing.csv', ['epsilon', 'lhs', 'rhs', 'shifted_contraction'])
        for eps in context.config.studies.epsilons:
            gap = smoothing_gap(nm, context.op, eps)
            smoothing.append(eps, gap.lhs, gap.rhs, gap.shifted_contraction)
            outcome.checks.append(CheckOutcome(
                'smoothing bound eps=%r' % eps,
                gap.lhs <= gap.rhs * (1 + 1e-12) + 1e-15 and gap.shifted_contraction <= 1 + 1e-12,
                gap.lhs, 'rhs %r' % gap.rhs))
        return [certificates, modes, smoothing]

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, Solve.get_name(), 'Also run the ensemble solve')


class LambdaStudy(MonodriftStudy):
    """Yosida limit lambda -> 0 on common random numbers, against the resolvent splitting scheme."""

    @staticmethod
    def get_name():
        return 'lambda_study'

    def invoke_after(self, cliargs):
        return {'solve'}

    def statements(self):
        return ['convergence of the regularized solutions', 'identification of the limit selection']

    def run(self, context):
        studies = context.config.studies
        op, nm, initial = context.op, context.noise, context.initial
        lambdas = sorted(studies.lambdas, reverse=True)
        outcome = StudyOutcome()
        for spec in studies.lambda_graphs:
            g = graph_from_spec(spec.as_spec())
            specs = []
            for lam in lambdas:
                specs.append(PathSpec(SCHEME_REGULARIZED, context.params.with_lambda(lam), nm, initial))
                specs.append(PathSpec(SCHEME_REGULARIZED, context.params.with_lambda(lam / 2.0), nm, initial))
            specs.append(PathSpec(SCHEME_PROX, context.params.with_lambda(0.0), nm, initial))
            runs = solve_many(op, g, specs, studies.lambda_paths, context.workers)

            table = Table('convergence_%s.csv' % g.get_name(),
                          ['family', 'lambda', 'cauchy_l2h', 'prox_l2h', 'monotone_loss'])
            cauchy, prox = [], []
            for i, lam in enumerate(lambdas):
                c = math.sqrt(float(np.mean([paired_norms(r[2 * i], r[2 * i + 1], op).l2_h2 for r in runs])))
                p = math.sqrt(float(np.mean([paired_norms(r[2 * i], r[-1], op).l2_h2 for r in runs])))
                loss = min(monotone_loss(r[2 * i], r[-1], op) for r in runs)
                table.append(g.get_name(), lam, c, p, loss)
                cauchy.append(c)
                prox.append(p)
            outcome.tables.append(table)
            splitting = max(float(np.max(r[-1].column('residual'))) for r in runs)
            outcome.checks.append(CheckOutcome(
                '%s cauchy distance decreases as lambda halves' % g.get_name(), bool(np.all(np.diff(cauchy) < 0)),
                cauchy[-1],
                'lambda %r -> %r' % (lambdas[0], lambdas[-1])))
            outcome.checks.append(CheckOutcome(
                '%s distance to splitting scheme decreases' % g.get_name(), prox[-1] < prox[0], prox[-1],
                'distance at the largest lambda %r, splitting defect %r' % (prox[0], splitting)))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, LambdaStudy.get_name(), 'Also run the lambda sweep')


class EnergyStudy(MonodriftStudy):
    """Pathwise and expectation energy estimates, uniform in lambda."""

    @staticmethod
    def get_name():
        return 'energy_study'

    def invoke_after(self, cliargs):
        return {'lambda_study'}

    def statements(self):
        return ['pathwise energy estimate', 'expectation energy estimate', 'integrability of the conjugate']

    def run(self, context):
        studies = context.config.studies
        op, g, nm, initial = context.op, context.graph, context.noise, context.initial
        params = regularized_params(context)
        outcome = StudyOutcome()

        if op.coercive_i > 0:
            spec = PathSpec(SCHEME_REGULARIZED, params, nm, initial)
            runs = solve_many(op, g, [spec], studies.energy_paths, context.workers)
            pathwise = [pathwise_energy_check(r[0], op, g, nm) for r in runs]
            outcome.tables.append(report_table('pathwise.csv', pathwise))
            for p, report in enumerate(pathwise):
                outcome.checks.append(report_check('pathwise energy path %d' % p, report))
            identity = max(node_identity_gap(r[0], g) for r in runs)
            outcome.checks.append(CheckOutcome('conjugate identity', identity <= MEMBERSHIP_TOL, identity,
                                               'max |j(R) + j*(xi) - xi R|'))

            sweep, order = energy_defect_sweep(op, g, nm, initial, params, studies.dt_ladder)
            outcome.tables.append(report_table('defect_sweep.csv', sweep))
            outcome.checks.append(CheckOutcome('dissipation defect order', order >= 0.5, order,
                                               'defects %s' % ', '.join('%.3g' % r.defect for r in sweep)))
        else:
            outcome.checks.append(CheckOutcome('pathwise energy', True, math.nan,
                                               'skipped: operator needs a shift to be coercive'))

        expectation, jstar = [], []
        for lam in studies.lambdas:
            ens = solve_ensemble(SCHEME_REGULARIZED, op, g, nm, initial, params.with_lambda(lam),
                                 context.config.ensemble.M, context.workers)
            expectation.append(expectation_energy_check(ens))
            jstar.append(jstar_integrability_check(ens, g))
        for report in jstar:
            outcome.checks.append(report_check('conjugate integrability lambda=%r' % report.sweep_param, report))
        uniform = [
            uniformity_report('expectation_energy_uniformity', [r.constant for r in expectation], studies.lambdas,
                              context.seed),
            uniformity_report('jstar_uniformity', [r.constant for r in jstar], studies.lambdas, context.seed),
        ]
        for report in uniform:
            outcome.checks.append(report_check(report.name, report))
        outcome.tables.append(report_table('uniform_estimates.csv', expectation + jstar + uniform))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, EnergyStudy.get_name(), 'Also run the energy estimates')


class UniquenessStudy(MonodriftStudy):
    """Mollified uniqueness argument on paired paths, with a perturbed negative control."""

    @staticmethod
    def get_name():
        return 'uniqueness_study'

    def invoke_after(self, cliargs):
        return {'energy_study'}

    def statements(self):
        return ['pathwise uniqueness in the solution class']

    def run(self, context):
        studies = context.config.studies
        op, g, nm, initial = context.op, context.graph, context.noise, context.initial
        envelope = studies.uniqueness_envelope
        prox = PathSpec(SCHEME_PROX, context.params.with_lambda(0.0), nm, initial)
        regularized = PathSpec(SCHEME_REGULARIZED, context.params.with_lambda(studies.uniqueness_lambda), nm, initial)
        perturbed = replace(prox, initial=replace(initial, perturbation='sin(pi*x/L)', delta=1.0))

        same = uniqueness_mollifier_check(*solve_specs(op, g, [prox, prox]), op, g, envelope=envelope)
        same.name = 'uniqueness_identical'
        limit = uniqueness_mollifier_check(*solve_specs(op, g, [regularized, prox]), op, g, envelope=envelope)
        limit.name = 'uniqueness_regularized_limit'
        control = uniqueness_mollifier_check(*solve_specs(op, g, [perturbed, prox]), op, g, envelope=envelope)
        control.name = 'uniqueness_negative_control'

        outcome = StudyOutcome(tables=[report_table('uniqueness.csv', [same, limit, control])])
        outcome.checks.append(report_check('identical data', same))
        outcome.checks.append(CheckOutcome('identical data exact', same.lhs == 0.0, same.lhs, 'sup |Y|_H'))
        outcome.checks.append(report_check('regularized limit', limit))
        outcome.checks.append(CheckOutcome('negative control', not control.passed, control.lhs,
                                           'perturbed data must leave the envelope %r' % envelope))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, UniquenessStudy.get_name(), 'Also run the uniqueness replay')


class EpsilonStudy(MonodriftStudy):
    """Cauchy property of the smoothed-noise solutions as the smoothing level halves."""

    @staticmethod
    def get_name():
        return 'epsilon_study'

    def invoke_after(self, cliargs):
        return {'uniqueness_study'}

    def statements(self):
        return ['removal of the noise smoothing']

    def run(self, context):
        studies = context.config.studies
        pairs = [(eps, eps / 2.0) for eps in studies.epsilons]
        reports, uniform = epsilon_cauchy_check(context.op, context.graph, raw_noise(context), context.params,
                                                context.initial, pairs, context.config.ensemble.M, context.workers,
                                                scheme=context.scheme)
        outcome = StudyOutcome(tables=[report_table('epsilon_cauchy.csv', reports + [uniform])])
        for report in reports:
            outcome.checks.append(report_check('cauchy eps=%s' % report.sweep_param, report))
        outcome.checks.append(report_check('ratio stability', uniform))
        outcome.checks.append(CheckOutcome('cauchy distance shrinks', reports[-1].lhs <= reports[0].lhs,
                                           reports[-1].lhs, 'largest pair %r' % reports[0].lhs))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, EpsilonStudy.get_name(), 'Also run the smoothing sweep')


class DependenceStudy(MonodriftStudy):
    """Lipschitz dependence on the initial datum in the weighted solution norms."""

    @staticmethod
    def get_name():
        return 'dependence_study'

    def invoke_after(self, cliargs):
        return {'epsilon_study'}

    def statements(self):
        return ['continuous dependence on the data', 'Lipschitz continuity of the solution map']

    def run(self, context):
        studies = context.config.studies
        op, g, nm, initial = context.op, context.graph, context.noise, context.initial
        deltas, alphas = studies.deltas, studies.alphas
        x0_pairs = [(initial, initial.shifted(d)) for d in deltas]
        reports, lhs_table = continuous_dependence_check(op, g, nm, context.params, x0_pairs,
                                                         context.config.ensemble.M, alphas, context.workers,
                                                         scheme=context.scheme)
        sweep = Table('delta_sweep.csv', ['delta'] + ['lhs_alpha_%r' % float(a) for a in alphas])
        for d, row in zip(deltas, lhs_table):
            sweep.append(d, *row)
        last = [r.constant for r in reports[-len(alphas):]]
        uniform = uniformity_report('alpha_uniformity', last, alphas, context.seed)
        outcome = StudyOutcome(tables=[report_table('dependence.csv', reports + [uniform]), sweep])
        for report in reports:
            outcome.checks.append(report_check('dependence %s' % report.sweep_param, report))
        outcome.checks.append(report_check('alpha uniformity', uniform))

        fit = lipschitz_regression(deltas, lhs_table[:, 0])
        outcome.checks.append(CheckOutcome('linear in delta', fit.r2 >= R2_MIN, fit.r2,
                                           'slope %r intercept %r' % (fit.slope, fit.intercept)))

        spec = PathSpec(context.scheme, context.params, nm, initial)
        first, second = solve_specs(op, g, [spec, spec])
        outcome.checks.append(CheckOutcome('identical data bit-identical',
                                           bool(np.array_equal(first.states, second.states)), 0.0, ''))
        serial = solve_many(op, g, [spec], 2, workers=1)
        pooled = solve_many(op, g, [spec], 2, workers=max(2, context.workers))
        same = all(np.array_equal(a[0].states, b[0].states) for a, b in zip(serial, pooled))
        outcome.checks.append(CheckOutcome('worker count independence', same, 0.0, ''))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, DependenceStudy.get_name(), 'Also run the dependence sweep')


class PicardStudy(MonodriftStudy):
    """Contraction of the frozen-diffusion map in exponentially weighted norms."""

    @staticmethod
    def get_name():
        return 'picard_study'

    def invoke_after(self, cliargs):
        return {'dependence_study'}

    def statements(self):
        return ['existence by fixed point for Lipschitz diffusion', 'weighted-norm contraction']

    def run(self, context):
        studies = context.config.studies
        op, g = context.op, context.graph
        params = context.params.with_steps(studies.picard_steps)
        noise = build_noise_model(studies.picard_noise, context.grid, context.seed)
        result = picard_iterate(op, g, noise, context.initial, params, studies.picard_paths, studies.picard_iters,
                                studies.picard_alphas, context.workers, scheme=context.scheme)
        fit = contraction_rate_fit(result)

        iterations = Table('picard.csv', ['alpha', 'iteration', 'distance', 'ratio'])
        for row in result.contraction_table():
            iterations.append(*row)
        factors = Table('contraction_fit.csv', ['alpha', 'factor'])
        for row in fit.rows:
            factors.append(*row)
        outcome = StudyOutcome(tables=[iterations, factors])
        outcome.checks.append(CheckOutcome('factors decrease in alpha', fit.monotone, float(fit.rows[-1][1]),
                                           'factors %s' % ', '.join('%.3g' % f for _, f in fit.rows)))
        low, high = EXPONENT_RANGE
        outcome.checks.append(CheckOutcome('contraction exponent', low <= fit.exponent <= high, fit.exponent,
                                           'expected in [%r, %r]' % (low, high)))
        outcome.checks.append(CheckOutcome('contracting alpha', fit.alpha_star is not None,
                                           math.nan if fit.alpha_star is None else fit.alpha_star,
                                           'smallest alpha with factor < 1'))

        additive = build_noise_model(studies.picard_noise.model_copy(update={'kind': KIND_ADDITIVE, 'sigma': None}),
                                     context.grid, context.seed)
        control = picard_iterate(op, g, additive, context.initial, params, min(studies.picard_paths, 2), 3,
                                 studies.picard_alphas[:1], 1, scheme=context.scheme)
        outcome.checks.append(CheckOutcome('additive control', contraction_rate_fit(control).degenerate,
                                           float(control.distances[0, 1]), 'second iterate equals the first'))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, PicardStudy.get_name(), 'Also run the Picard iteration')
