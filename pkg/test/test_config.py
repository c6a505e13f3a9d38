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

import os
import unittest
from tempfile import TemporaryDirectory
from unittest import mock

from monodrift.config import build_context
from monodrift.config import config_hash
from monodrift.config import load_config
from monodrift.config import resolve_out_dir
from monodrift.config import validate_config
from monodrift.config import validate_data
from monodrift.core import ConfigError

DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), '..', 'config', 'default.toml')


class ConfigTest(unittest.TestCase):

    def setUp(self):
        self.tmp = TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text, name='experiment.toml'):
        path = os.path.join(self.tmp.name, name)
        with open(path, 'w') as fh:
            fh.write(text)
        return path

    def paths(self, text):
        return [d.path for d in validate_config(self.write(text))]

    def test_default_is_valid(self):
        self.assertEqual(validate_config(DEFAULT_CONFIG), [])
        config = load_config(DEFAULT_CONFIG)
        self.assertEqual(config.grid.n, 31)
        self.assertEqual(config.solver.resolved_steps(), 64)

    def test_minimal_file(self):
        config = load_config(self.write('format_version = "1"\n'))
        self.assertEqual(config.operator.kind, 'dirichlet_laplacian')
        self.assertEqual(config.graph.kind, 'power')

    def test_unknown_key(self):
        self.assertIn('grid.bogus', self.paths('[grid]\nn = 31\nbogus = 1\n'))

    def test_schema_ranges(self):
        self.assertIn('grid.n', self.paths('[grid]\nn = 1\n'))
        self.assertIn('noise.K', self.paths('[noise]\nK = 0\n'))
        self.assertIn('operator.kind', self.paths('[operator]\nkind = "biharmonic"\n'))

    def test_solver_rules(self):
        self.assertIn('solver.lam', self.paths('[solver]\nscheme = "S1"\nlam = 0.0\n'))
        self.assertEqual(self.paths('[solver]\nscheme = "S2"\nlam = 0.0\n'), [])
        self.assertIn('solver.n_steps', self.paths('[solver]\nT = 1.0\ndt = 0.1\nn_steps = 20\n'))
        self.assertIn('solver.dt', self.paths('[solver]\nT = 1.0\ndt = 0.3\n'))
        self.assertIn('solver.dt', self.paths('[solver]\nlam = 0.01\ninner = "fixed_point"\nn_steps = 10\n'))

    def test_format_version(self):
        self.assertIn('format_version', self.paths('format_version = "2"\n'))
        self.assertIn('format_version', self.paths('format_version = "one"\n'))

    def test_semantic_diagnostics(self):
        diagnostics = validate_config(self.write('[operator]\nkind = "divergence_form"\nb = "100"\n'))
        self.assertEqual([d.path for d in diagnostics], ['operator'])
        self.assertIn('Mesh-Peclet', str(diagnostics[0]))
        self.assertIn('graph', self.paths('[graph]\nkind = "sign"\np = 3.0\n'))
        self.assertIn('initial.profile', self.paths('[initial]\nprofile = "sin(y)"\n'))

    def test_unreadable(self):
        for text in ['', '   \n', '[grid\nn = 3\n']:
            with self.subTest(text=text):
                with self.assertRaises(ConfigError) as cm:
                    validate_config(self.write(text))
                self.assertEqual(len(cm.exception.diagnostics), 1)
        self.assertRaises(ConfigError, validate_config, os.path.join(self.tmp.name, 'missing.toml'))

    def test_load_raises_with_diagnostics(self):
        with self.assertRaises(ConfigError) as cm:
            load_config(self.write('[solver]\nscheme = "S1"\nlam = 0.0\n[grid]\nn = 1\n'))
        self.assertEqual([d.path for d in cm.exception.diagnostics], ['grid.n'])

    def test_hash(self):
        config = load_config(DEFAULT_CONFIG)
        digest = config_hash(config)
        self.assertEqual(len(digest), 16)
        self.assertEqual(digest, config_hash(load_config(DEFAULT_CONFIG)))
        reseeded = load_config(DEFAULT_CONFIG, seed=5)
        self.assertEqual(reseeded.ensemble.seed, 5)
        self.assertNotEqual(digest, config_hash(reseeded))
        moved = config.model_copy(update={'output': config.output.model_copy(update={'dir': 'elsewhere'})})
        self.assertEqual(digest, config_hash(moved))

    def test_out_dir(self):
        config = load_config(DEFAULT_CONFIG)
        with mock.patch.dict(os.environ, {'MONODRIFT_OUT': '/tmp/from-env'}):
            self.assertEqual(resolve_out_dir('cli-dir', config), 'cli-dir')
            self.assertEqual(resolve_out_dir(None, config), '/tmp/from-env')
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_out_dir(None, config), 'monodrift-out')

    def test_context(self):
        config = load_config(self.write('[grid]\nn = 15\n[solver]\nscheme = "S2"\nn_steps = 8\n'
                                        '[noise]\nepsilon = 0.1\n'))
        context = build_context(config, self.tmp.name, workers=2)
        self.assertEqual(context.op.n, 15)
        self.assertEqual(context.op.m_power, 1)
        self.assertEqual(context.params.n_steps, 8)
        self.assertEqual(context.params.lam, 0.0)
        self.assertEqual(context.scheme, 'S2')
        self.assertEqual(context.noise.epsilon, 0.1)
        self.assertEqual(context.seed, 20240601)
        self.assertEqual(context.workers, 2)
        self.assertEqual(context.config_hash, config_hash(config))

    def test_arithmetic_in_expressions(self):
        config, diagnostics = validate_data({'operator': {'kind': 'divergence_form', 'a': '1/0'}})
        self.assertIsNotNone(config)
        self.assertEqual([d.path for d in diagnostics], ['operator'])
        _, diagnostics = validate_data({'initial': {'profile': '10**400'}})
        self.assertEqual([d.path for d in diagnostics], ['initial.profile'])
