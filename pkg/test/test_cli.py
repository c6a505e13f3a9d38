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
import contextlib
import em
import io
import os
import unittest
from tempfile import TemporaryDirectory
from unittest import mock

import numpy as np

from monodrift.cli import main
from monodrift.cli import positive_int
from monodrift.cli import run
from monodrift.cli import seed_u64
from monodrift.cli import validate_main
from monodrift.core import EXIT_CONFIG_ERROR
from monodrift.core import EXIT_PASS
from monodrift.core import EXIT_RUNTIME_ERROR
from monodrift.core import list_plugins
from monodrift.graph_studies import CheckGraph

CONFIG = """
format_version = "1"

[grid]
n = 15

[studies]
graph_samples = 200
"""


class CliTest(unittest.TestCase):

    def setUp(self):
        # empy keeps a stdout proxy between Interpreter instances,
        # reset it so summaries render under the test runner
        em.Interpreter._wasProxyInstalled = False
        self.tmp = TemporaryDirectory()
        self.config = os.path.join(self.tmp.name, 'experiment.toml')
        with open(self.config, 'w') as fh:
            fh.write(CONFIG)
        self.out = os.path.join(self.tmp.name, 'out')

    def tearDown(self):
        self.tmp.cleanup()

    def invoke(self, func, *argv):
        buf = io.StringIO()
        with mock.patch('sys.argv', ['monodrift'] + list(argv)), contextlib.redirect_stdout(buf):
            status = func()
        return status, buf.getvalue()

    def test_validators(self):
        self.assertEqual(seed_u64('0'), 0)
        self.assertEqual(seed_u64(str(2 ** 64 - 1)), 2 ** 64 - 1)
        for value in ['-1', str(2 ** 64), 'abc']:
            with self.subTest(value=value):
                self.assertRaises(argparse.ArgumentTypeError, seed_u64, value)
        self.assertEqual(positive_int('3'), 3)
        self.assertRaises(argparse.ArgumentTypeError, positive_int, '0')
        self.assertRaises(argparse.ArgumentTypeError, positive_int, 'two')

    def test_list_studies(self):
        status, output = self.invoke(main, '--list-studies')
        self.assertEqual(status, EXIT_PASS)
        self.assertIn('check-graph:', output)
        self.assertIn('picard-study:', output)

    def test_check_graph(self):
        status, output = self.invoke(main, 'check-graph', '--config', self.config, '--out', self.out)
        self.assertEqual(status, EXIT_PASS, output)
        self.assertIn("Active studies ['check_graph']", output)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'summary.txt')))
        with open(os.path.join(self.out, 'check_graph', 'audit.csv')) as fh:
            self.assertTrue(fh.readline().startswith('# config_hash='))

    def test_seed_changes_hash(self):
        study = list_plugins()['check_graph']
        first = run([study()], self.config, self.out, output_callback=None)
        second = run([study()], self.config, self.out, seed=5, output_callback=None)
        self.assertEqual(first.exit_status, EXIT_PASS)
        self.assertNotEqual(first.summary.splitlines()[0], second.summary.splitlines()[0])

    def test_usage_errors(self):
        for argv in [[], ['no-such-study', '--config', self.config], ['check-graph'],
                     ['check-graph', '--config', self.config, '--workers', '0']]:
            with self.subTest(argv=argv):
                with self.assertRaises(SystemExit) as cm:
                    with contextlib.redirect_stderr(io.StringIO()):
                        self.invoke(main, *argv)
                self.assertEqual(cm.exception.code, 2)

    def test_invalid_config(self):
        with open(self.config, 'w') as fh:
            fh.write('[grid]\nn = 1\n')
        status, output = self.invoke(main, 'check-graph', '--config', self.config, '--out', self.out)
        self.assertEqual(status, EXIT_CONFIG_ERROR)
        self.assertIn('ERROR: grid.n:', output)
        self.assertFalse(os.path.exists(self.out))

    def test_validate(self):
        status, output = self.invoke(validate_main, self.config)
        self.assertEqual(status, EXIT_PASS)
        self.assertIn('valid', output)
        with open(self.config, 'w') as fh:
            fh.write('[solver]\nscheme = "S1"\nlam = 0.0\n')
        status, output = self.invoke(validate_main, self.config)
        self.assertEqual(status, EXIT_CONFIG_ERROR)
        self.assertIn('solver.lam: S1 requires lambda > 0', output)

    def test_unexpected_failure(self):
        with mock.patch.object(CheckGraph, 'run', side_effect=np.linalg.LinAlgError('Singular matrix')):
            status, output = self.invoke(main, 'check-graph', '--config', self.config, '--out', self.out)
        self.assertEqual(status, EXIT_RUNTIME_ERROR)
        self.assertIn('ERROR: unexpected LinAlgError: Singular matrix', output)
        with mock.patch('monodrift.cli.validate_config', side_effect=ZeroDivisionError('float division by zero')):
            status, output = self.invoke(validate_main, self.config)
        self.assertEqual(status, EXIT_RUNTIME_ERROR)
        self.assertIn('ERROR: unexpected ZeroDivisionError', output)
