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

import argparse
import os
import unittest
from tempfile import TemporaryDirectory

import pytest

from monodrift.config import build_context
from monodrift.config import load_config
from monodrift.core import list_plugins
from monodrift.core import name_to_argument
from monodrift.core import StudyManager
from monodrift.graph_studies import catalog_graphs
from monodrift.graph_studies import conjugate_agreement
from monodrift.monotone_graph import PowerGraph
from monodrift.monotone_graph import SignGraph

DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), '..', 'config', 'default.toml')

SMALL_CONFIG = """
format_version = "1"

[grid]
n = 15

[solver]
scheme = "S1"
T = 0.5
n_steps = 32
lam = 0.0625

[ensemble]
M = 8
seed = 11

[studies]
graph_samples = 500
audit_vectors = 50
m_max = 3
lambdas = [0.25, 0.0625]
lambda_paths = 4
epsilons = [0.0625, 0.00390625, 0.000244140625]
deltas = [0.1, 0.2]
alphas = [0.0, 4.0]
dt_ladder = [1, 2]
energy_paths = 2
picard_paths = 4
picard_steps = 128
picard_iters = 3
"""


def study_load_parser_correctly(study):
    """A helper function to test that the studies at least
    register an option for their own name."""
    parser = argparse.ArgumentParser(description='test_parser')
    study.register_arguments(parser, {})
    argument_name = name_to_argument(study.get_name())
    for action in parser._actions:
        option_strings = getattr(action, 'option_strings', [])
        if argument_name in option_strings:
            return True
    return False


def small_context(out_dir, text=SMALL_CONFIG):
    path = os.path.join(out_dir, 'experiment.toml')
    with open(path, 'w') as fh:
        fh.write(text)
    return build_context(load_config(path), os.path.join(out_dir, 'out'))


def failed_checks(outcome, ignore=()):
    return [(c.name, c.value, c.detail) for c in outcome.checks if not c.passed and c.name not in ignore]


class StudyRegistrationTest(unittest.TestCase):

    def test_every_study_registers_its_flag(self):
        for name, study in list_plugins().items():
            with self.subTest(study=name):
                self.assertTrue(study_load_parser_correctly(study))
                self.assertTrue(study().statements())

    def test_full_suite_order(self):
        study_manager = StudyManager()
        active = study_manager.get_active_studies({'subcommand': 'full-suite', 'study_blacklist': []})
        self.assertEqual([s.get_name() for s in active], [
            'check_graph', 'audit_operator', 'solve', 'lambda_study', 'energy_study', 'uniqueness_study',
            'epsilon_study', 'dependence_study', 'picard_study'])

    def test_single_study_runs_alone(self):
        study_manager = StudyManager()
        active = study_manager.get_active_studies({'subcommand': 'epsilon-study', 'study_blacklist': []})
        self.assertEqual([s.get_name() for s in active], ['epsilon_study'])

    def test_catalog(self):
        graphs = catalog_graphs(PowerGraph(3.0))
        self.assertEqual(graphs[0], PowerGraph(3.0))
        self.assertEqual(len(graphs), len(set(graphs)))
        self.assertEqual(len(catalog_graphs(PowerGraph(5.0))), len(graphs) + 1)
        self.assertLessEqual(conjugate_agreement(SignGraph(1.0)), 1e-6)


class GraphAndOperatorStudyTest(unittest.TestCase):

    def setUp(self):
        self.tmp = TemporaryDirectory()
        self.context = small_context(self.tmp.name)
        self.plugins = list_plugins()

    def tearDown(self):
        self.tmp.cleanup()

    def test_check_graph(self):
        outcome = self.plugins['check_graph']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        self.assertEqual([t.filename for t in outcome.tables], ['audit.csv', 'diagnostics.csv'])

    def test_audit_operator(self):
        outcome = self.plugins['audit_operator']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        names = [t.filename for t in outcome.tables]
        for filename in ['assumption_a.csv', 'ultracontractivity.csv', 'strong_convergence.csv', 'jensen.csv']:
            self.assertIn(filename, names)

    def test_audit_operator_with_drift(self):
        context = small_context(self.tmp.name, SMALL_CONFIG + '\n[operator]\nkind = "divergence_form"\nb = "0.3"\n')
        outcome = self.plugins['audit_operator']().run(context)
        checks = {c.name: c for c in outcome.checks}
        self.assertTrue(checks['coercivity'].passed)
        self.assertTrue(checks['condition ii'].passed)
        self.assertTrue(checks['condition iii'].passed)


@pytest.mark.slow
class PathStudyTest(unittest.TestCase):

    def setUp(self):
        self.tmp = TemporaryDirectory()
        self.context = small_context(self.tmp.name)
        self.plugins = list_plugins()

    def tearDown(self):
        self.tmp.cleanup()

    def test_solve(self):
        outcome = self.plugins['solve']().run(self.context)
        self.assertEqual(failed_checks(outcome, ignore=('covariance oracle',)), [])
        names = [t.filename for t in outcome.tables]
        for filename in ['ensemble.csv', 'noise_certificates.csv', 'mode_truncation.csv', 'smoothing.csv']:
            self.assertIn(filename, names)
        self.assertNotIn('trajectories.csv', names)
        self.assertIn('increment oracle', [c.name for c in outcome.checks])

    def test_lambda_study(self):
        outcome = self.plugins['lambda_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        self.assertEqual([t.filename for t in outcome.tables], ['convergence_power.csv', 'convergence_sign.csv'])
        for table in outcome.tables:
            self.assertEqual(len(table.rows), 2)
        names = [c.name for c in outcome.checks]
        self.assertIn('power cauchy distance decreases as lambda halves', names)
        self.assertIn('sign distance to splitting scheme decreases', names)

    def test_energy_study(self):
        outcome = self.plugins['energy_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        checks = {c.name: c for c in outcome.checks}
        for name in ['pathwise energy path 0', 'conjugate identity', 'conjugate integrability lambda=0.25',
                     'expectation_energy_uniformity', 'jstar_uniformity']:
            self.assertIn(name, checks)
        self.assertLessEqual(checks['jstar_uniformity'].value, 2.0)

    def test_energy_study_without_coercivity(self):
        context = small_context(self.tmp.name, SMALL_CONFIG + '\n[operator]\nkind = "zero"\n')
        outcome = self.plugins['energy_study']().run(context)
        self.assertIn('skipped', outcome.checks[0].detail)
        self.assertNotIn('pathwise.csv', [t.filename for t in outcome.tables])

    def test_uniqueness_study(self):
        outcome = self.plugins['uniqueness_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        checks = {c.name: c for c in outcome.checks}
        self.assertIn('energy ok', checks['regularized limit'].detail)
        self.assertEqual(len(outcome.tables[0].rows), 3)

    def test_epsilon_study(self):
        outcome = self.plugins['epsilon_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        self.assertEqual(len(outcome.tables[0].rows), 4)
        checks = {c.name: c for c in outcome.checks}
        self.assertIn('cauchy eps=0.0625/0.03125', checks)
        self.assertLess(checks['cauchy distance shrinks'].value, checks['cauchy eps=0.0625/0.03125'].value)

    def test_dependence_study(self):
        outcome = self.plugins['dependence_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        checks = {c.name: c for c in outcome.checks}
        self.assertTrue(checks['identical data bit-identical'].passed)
        self.assertTrue(checks['worker count independence'].passed)
        self.assertEqual(len(outcome.tables[1].rows), 2)

    def test_picard_study(self):
        outcome = self.plugins['picard_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        checks = {c.name: c for c in outcome.checks}
        self.assertLess(checks['contraction exponent'].value, 0.0)
        self.assertIn(checks['contracting alpha'].value, [4.0, 16.0, 64.0, 256.0])
        self.assertEqual([t.filename for t in outcome.tables], ['picard.csv', 'contraction_fit.csv'])


@pytest.mark.statistical
class CovarianceOracleTest(unittest.TestCase):

    def test_large_ensemble(self):
        with TemporaryDirectory() as tmp:
            context = small_context(tmp, SMALL_CONFIG.replace('M = 8', 'M = 400'))
            outcome = list_plugins()['solve']().run(context)
        checks = {c.name: c for c in outcome.checks}
        self.assertTrue(checks['covariance oracle'].passed, checks['covariance oracle'].detail)
        self.assertTrue(checks['increment oracle'].passed, checks['increment oracle'].detail)


@pytest.mark.slow
class DefaultConfigTest(unittest.TestCase):

    def setUp(self):
        self.tmp = TemporaryDirectory()
        self.context = build_context(load_config(DEFAULT_CONFIG), os.path.join(self.tmp.name, 'out'))
        self.plugins = list_plugins()

    def tearDown(self):
        self.tmp.cleanup()

    def test_check_graph(self):
        outcome = self.plugins['check_graph']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])

    def test_energy_study(self):
        outcome = self.plugins['energy_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])

    def test_epsilon_study(self):
        outcome = self.plugins['epsilon_study']().run(self.context)
        self.assertEqual(failed_checks(outcome), [])
        checks = {c.name: c for c in outcome.checks}
        self.assertTrue(checks['cauchy distance shrinks'].passed)
        self.assertTrue(checks['ratio stability'].passed)
