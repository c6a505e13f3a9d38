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

import math

import numpy as np

from .core import CheckOutcome, MonodriftStudy, StudyOutcome, Table, name_to_argument
from .monotone_graph import (LinearGraph, PiecewiseGraph, PowerGraph, SignGraph, SinhGraph, audit_graph,
                             graph_diagnostics, moreau_rate)
from .spatial_operator import (KIND_FRACTIONAL, audit_assumption_A, integral_jensen_check, jensen_check,
                               predicted_resolvent_bound, strong_convergence_rate)

JENSEN_TOL = 1e-10
STRONG_DELTAS = [1e-2, 1e-3, 1e-4, 1e-5]


def catalog_graphs(configured=None):
    """The configured graph followed by one default member of every family."""
    graphs = [] if configured is None else [configured]
    for g in (LinearGraph(1.0), PowerGraph(3.0), SignGraph(1.0), SinhGraph(1.0),
              PiecewiseGraph(k=0.5, thresholds=[0.0, 1.0], heights=[1.0, 0.5])):
        if g not in graphs:
            graphs.append(g)
    return graphs


def register_study_flag(parser, defaults, name, help_text):
    parser.add_argument(name_to_argument(name),
        action='store_true',
        default=defaults.get(name, False),
        help=help_text)


def conjugate_agreement(g, rs=(0.1, 0.5, 2.0, 5.0)):
    """Worst relative difference between the closed-form and the numeric conjugate."""
    rs = np.asarray(rs, dtype=float)
    closed = np.asarray(g.conjugate(rs), dtype=float)
    numeric = np.asarray(g.numeric_conjugate(rs), dtype=float)
    both_inf = np.isinf(closed) & np.isinf(numeric)
    with np.errstate(invalid='ignore'):
        diff = np.where(both_inf, 0.0, np.abs(closed - numeric) / (1.0 + np.abs(closed)))
    return float(np.max(np.where(np.isnan(diff), np.inf, diff)))


class CheckGraph(MonodriftStudy):
    """Sampled audit of the graph calculus for the configured graph and the catalog."""

    @staticmethod
    def get_name():
        return 'check_graph'

    def statements(self):
        return ['resolvent and Yosida approximation', 'Moreau envelope ordering',
                'Young inequality and its equality case', 'superlinear growth of the conjugate']

    def run(self, context):
        studies = context.config.studies
        audit = Table('audit.csv', ['family', 'params', 'check', 'samples', 'violations', 'worst', 'pass'])
        outcome = StudyOutcome(tables=[audit])
        for g in catalog_graphs(context.graph):
            checks = audit_graph(g, samples=studies.graph_samples, seed=context.seed)
            for c in checks:
                audit.append(g.get_name(), repr(g.params()), c.name, c.samples, c.violations, c.worst, c.passed)
            failed = [c.name for c in checks if not c.passed]
            outcome.checks.append(CheckOutcome(
                '%s identities' % g.get_name(), not failed, float(sum(c.violations for c in checks)),
                'failed: %s' % ', '.join(failed) if failed else '%d checks' % len(checks)))
            agreement = conjugate_agreement(g)
            outcome.checks.append(CheckOutcome('%s conjugate' % g.get_name(), agreement <= 1e-6, agreement,
                                               'closed form against bounded maximization'))

        lambdas = [1.0, 0.1, 0.01, 0.001]
        diagnostics = Table('diagnostics.csv', ['family', 'lambda', 'x', 'resolvent', 'yosida', 'moreau', 'young_gap'])
        for row in graph_diagnostics(context.graph, lambdas, np.linspace(-3.0, 3.0, 13)):
            diagnostics.append(*row)
        outcome.tables.append(diagnostics)
        rate = moreau_rate(context.graph, 1.5, lambdas)
        outcome.checks.append(CheckOutcome('moreau rate', math.isnan(rate) or rate > 0, rate,
                                           'order of j - j_lambda at x=1.5'))
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, CheckGraph.get_name(), 'Also run the graph identity audit')


class AuditOperator(MonodriftStudy):
    """Conditions on the assembled operator, Jensen checks and the ultracontractivity fit."""

    @staticmethod
    def get_name():
        return 'audit_operator'

    def invoke_after(self, cliargs):
        return {'check_graph'}

    def statements(self):
        return ['coercivity of the operator', 'L1-contraction of the resolvent', 'sub-Markovian resolvent',
                'L1 to Linf bound of a resolvent power', 'abstract Jensen inequality']

    def run(self, context):
        studies = context.config.studies
        op = context.op
        report = audit_assumption_A(op, vectors=studies.audit_vectors, deltas=studies.audit_deltas, seed=context.seed,
                                    m_max=studies.m_max)
        conditions = Table('assumption_a.csv', ['condition', 'pass', 'constant', 'detail'])
        for row in report.rows:
            conditions.append(row.condition, row.passed, row.constant, row.detail)
        outcome = StudyOutcome(tables=[conditions])
        coercive = report.row('i').passed or report.row("i'").passed
        c1, c2 = report.coercivity
        outcome.checks.append(CheckOutcome('coercivity', coercive, c1, 'C1=%r C2=%r' % (c1, c2)))
        for row in report.rows:
            if row.condition in ('i', "i'"):
                continue
            outcome.checks.append(CheckOutcome('condition %s' % row.condition, row.passed, row.constant, row.detail))

        order = op.spec.alpha if op.kind == KIND_FRACTIONAL else 1.0
        ultra = Table('ultracontractivity.csv', ['m', 'n', 'delta', 'norm', 'predicted'])
        for m, n, delta, norm in report.fit.rows:
            ultra.append(m, n, delta, norm, predicted_resolvent_bound(m, delta, 1, order))
        outcome.tables.append(ultra)
        fitted = report.m_power if report.m_power is not None else report.fit.predicted_m
        outcome.checks.append(CheckOutcome('recorded m_power', op.m_power == fitted, float(op.m_power),
                                           'fitted %s, predicted %d' % (report.m_power, report.fit.predicted_m)))

        f0 = context.initial.sample(context.grid, context.seed)
        slope, errors = strong_convergence_rate(op, f0, STRONG_DELTAS)
        strong = Table('strong_convergence.csv', ['delta', 'error'])
        for delta, error in zip(STRONG_DELTAS, errors):
            strong.append(delta, error)
        outcome.tables.append(strong)
        shrinking = bool(np.all(np.diff(errors) <= 0))
        outcome.checks.append(CheckOutcome('resolvent strong convergence', shrinking, slope,
                                           'fitted order in delta of |(I + delta*A)^-1 f - f|_H'))

        rng = np.random.Generator(np.random.PCG64(seed=context.seed))
        f = rng.uniform(-2.0, 2.0, (op.n, studies.audit_vectors))
        jensen = Table('jensen.csv', ['family', 'delta', 'pointwise', 'integral', 'pass'])
        for g in catalog_graphs(context.graph):
            worst_point, worst_integral = -math.inf, -math.inf
            for delta in studies.audit_deltas:
                point = jensen_check(op, delta, g, f)
                integral = integral_jensen_check(op, delta, g, f)
                jensen.append(g.get_name(), delta, point, integral, point <= JENSEN_TOL and integral <= JENSEN_TOL)
                worst_point = max(worst_point, point)
                worst_integral = max(worst_integral, integral)
            outcome.checks.append(CheckOutcome('jensen %s' % g.get_name(), worst_point <= JENSEN_TOL, worst_point,
                                               'max j(Tf) - Tj(f)'))
            outcome.checks.append(CheckOutcome('integral jensen %s' % g.get_name(), worst_integral <= JENSEN_TOL,
                                               worst_integral, 'max int j(Tf) - int j(f)'))
        outcome.tables.append(jensen)
        return outcome

    @staticmethod
    def register_arguments(parser, defaults):
        register_study_flag(parser, defaults, AuditOperator.get_name(), 'Also run the operator audit')
