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
import unittest

import numpy as np

from monodrift.monotone_graph import audit_graph
from monodrift.monotone_graph import GraphError
from monodrift.monotone_graph import graph_diagnostics
from monodrift.monotone_graph import graph_from_spec
from monodrift.monotone_graph import LinearGraph
from monodrift.monotone_graph import moreau_rate
from monodrift.monotone_graph import PiecewiseGraph
from monodrift.monotone_graph import PowerGraph
from monodrift.monotone_graph import resolvent_young_gap
from monodrift.monotone_graph import SignGraph
from monodrift.monotone_graph import SinhGraph
from monodrift.monotone_graph import young_gap

CATALOG = [
    LinearGraph(1.0),
    LinearGraph(0.0),
    PowerGraph(3.0),
    PowerGraph(2.0),
    PowerGraph(1.5),
    SignGraph(1.0),
    SinhGraph(1.0),
    PiecewiseGraph(k=0.5, thresholds=[0.0, 1.0], heights=[1.0, 0.5]),
]


class MonotoneGraphTest(unittest.TestCase):

    def test_power_resolvent(self):
        g = PowerGraph(3.0)
        # x + 0.5*x^3 = 1.5 at x = 1
        self.assertAlmostEqual(g.resolvent(0.5, 1.5), 1.0, places=12)
        self.assertAlmostEqual(g.yosida(0.5, 1.5), 1.0, places=11)
        self.assertAlmostEqual(g.moreau(0.5, 1.5), 0.25 + 0.25, places=11)
        self.assertAlmostEqual(g.resolvent(0.5, -1.5), -1.0, places=12)
        self.assertAlmostEqual(g.j(2.0), 4.0)
        self.assertAlmostEqual(g.conjugate(8.0), 8.0 ** (4.0 / 3.0) * 3.0 / 4.0)

    def test_sign_resolvent(self):
        g = SignGraph(1.0)
        self.assertEqual(g.resolvent(0.5, 2.0), 1.5)
        self.assertEqual(g.resolvent(0.5, 0.3), 0.0)
        self.assertAlmostEqual(g.yosida(0.5, 0.3), 0.6)
        self.assertEqual(g.yosida(0.5, -2.0), -1.0)
        self.assertEqual(g.conjugate(0.5), 0.0)
        self.assertTrue(math.isinf(g.conjugate(2.0)))
        lo, hi = g.bounds(0.0)
        self.assertEqual((float(lo), float(hi)), (-1.0, 1.0))
        self.assertTrue(g.contains(0.0, 0.4))
        self.assertFalse(g.contains(1.0, 0.4))

    def test_linear_closed_forms(self):
        g = LinearGraph(2.0)
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(g.resolvent(0.25, x), x / 1.5)
        np.testing.assert_allclose(g.yosida(0.25, x), 2.0 * x / 1.5)
        np.testing.assert_allclose(g.conjugate(x), x * x / 4.0)

    def test_piecewise_gap(self):
        g = PiecewiseGraph(k=0.0, thresholds=[1.0], heights=[2.0])
        lo, hi = g.bounds(1.0)
        self.assertEqual((float(lo), float(hi)), (0.0, 2.0))
        # inputs on the filled gap land on the threshold
        self.assertAlmostEqual(g.resolvent(0.5, 1.5), 1.0)
        self.assertAlmostEqual(g.resolvent(0.5, 0.5), 0.5)
        self.assertAlmostEqual(g.resolvent(0.5, 3.0), 2.0)

    def test_vectorized_shapes(self):
        for g in CATALOG:
            with self.subTest(graph=repr(g)):
                x = np.linspace(-2, 2, 9)
                self.assertEqual(g.resolvent(0.1, x).shape, x.shape)
                self.assertIsInstance(g.resolvent(0.1, 0.3), float)
                self.assertEqual(np.asarray(g.moreau(0.1, x.reshape(3, 3))).shape, (3, 3))

    def test_audit_catalog(self):
        for g in CATALOG:
            with self.subTest(graph=repr(g)):
                checks = audit_graph(g, samples=10000, seed=7)
                failed = [(c.name, c.violations, c.worst) for c in checks if not c.passed]
                self.assertEqual(failed, [])

    def test_young_gap(self):
        g = PowerGraph(3.0)
        self.assertAlmostEqual(young_gap(g, 1.0, 1.0), 0.0, places=12)
        self.assertGreater(young_gap(g, 1.0, 0.0), 0.0)
        self.assertTrue(math.isinf(young_gap(SignGraph(1.0), 1.0, 3.0)))

    def test_resolvent_young_gap(self):
        for g in CATALOG:
            with self.subTest(graph=repr(g)):
                x = np.linspace(-4, 4, 41)
                gap, slack = resolvent_young_gap(g, 0.2, x)
                self.assertLessEqual(float(np.max(np.abs(gap))), 1e-9)
                self.assertGreaterEqual(float(np.min(slack)), -1e-12)

    def test_moreau_rate(self):
        # j - j_lam = lam/2 * |beta(x)|^2 to first order
        self.assertAlmostEqual(moreau_rate(PowerGraph(3.0), 1.5, [1e-4, 1e-5, 1e-6]), 1.0, places=2)
        self.assertAlmostEqual(moreau_rate(LinearGraph(1.0), 1.0, [0.1, 0.01, 0.001]), 1.0, places=1)

    def test_numeric_conjugate(self):
        for g in CATALOG:
            if g == LinearGraph(0.0):
                continue
            with self.subTest(graph=repr(g)):
                r = np.array([0.1, 0.5, 2.0, 5.0])
                closed = np.asarray(g.conjugate(r))
                numeric = np.asarray(g.numeric_conjugate(r))
                finite = np.isfinite(closed)
                np.testing.assert_array_equal(finite, np.isfinite(numeric))
                np.testing.assert_allclose(numeric[finite], closed[finite], rtol=1e-6, atol=1e-9)

    def test_graph_from_spec(self):
        self.assertEqual(graph_from_spec({'kind': 'power', 'p': 3}), PowerGraph(3.0))
        self.assertEqual(graph_from_spec({'kind': 'sign'}), SignGraph(1.0))
        self.assertRaises(GraphError, graph_from_spec, {'kind': 'cubic'})
        self.assertRaises(GraphError, graph_from_spec, {'kind': 'power', 'q': 3})
        self.assertRaises(GraphError, graph_from_spec, {'kind': 'power', 'p': 0.5})
        self.assertRaises(GraphError, graph_from_spec, {'kind': 'piecewise', 'thresholds': [1.0], 'heights': []})

    def test_invalid_lambda(self):
        g = PowerGraph(3.0)
        self.assertRaises(GraphError, g.resolvent, 0.0, 1.0)
        self.assertRaises(GraphError, g.yosida, -1.0, 1.0)
        self.assertRaises(GraphError, g.resolvent, 0.1, math.nan)

    def test_diagnostics_rows(self):
        rows = graph_diagnostics(SignGraph(1.0), [1.0, 0.1], [-1.0, 0.0, 2.0])
        self.assertEqual(len(rows), 6)
        self.assertEqual(rows[0][0], 'sign')
        self.assertAlmostEqual(rows[-1][3], 1.9)

    def test_lambda_arrays(self):
        g = PowerGraph(3.0)
        lam = np.array([0.5, 0.25])
        np.testing.assert_allclose(g.resolvent(lam, np.array([1.5, 0.0])), [1.0, 0.0], atol=1e-12)
        self.assertRaises(GraphError, g.resolvent, np.array([0.5, 0.0]), np.ones(2))
        self.assertRaises(GraphError, g.yosida, np.array([0.5, math.inf]), np.ones(2))
