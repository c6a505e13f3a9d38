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
import pytest

from monodrift.noise_model import build_noise
from monodrift.noise_model import check_certificates
from monodrift.noise_model import coarsen_increments
from monodrift.noise_model import hs_norm
from monodrift.noise_model import increment_from_draws
from monodrift.noise_model import increment_oracle
from monodrift.noise_model import initial_generator
from monodrift.noise_model import mode_truncation_table
from monodrift.noise_model import NoiseError
from monodrift.noise_model import path_increments
from monodrift.noise_model import sample_increment
from monodrift.noise_model import smooth
from monodrift.noise_model import smoothing_gap
from monodrift.noise_model import step_generator
from monodrift.noise_model import truncate
from monodrift.spatial_operator import assemble
from monodrift.spatial_operator import Grid


class NoiseModelTest(unittest.TestCase):

    def setUp(self):
        self.grid = Grid(31)

    def test_additive_modes(self):
        nm = build_noise(self.grid, K=4, amplitude=0.5)
        self.assertEqual(nm.columns.shape, (4, 31))
        # sine modes are orthonormal on the grid
        expected = 0.5 * math.sqrt(1 + 1 / 4 + 1 / 9 + 1 / 16)
        self.assertAlmostEqual(nm.factor_hs, expected, places=12)
        self.assertEqual(nm.lipschitz, 0.0)
        self.assertAlmostEqual(hs_norm(nm, 0.3, np.ones(31) * 7.0), expected, places=12)

    def test_expression_columns(self):
        nm = build_noise(self.grid, K=2, g='sin(k*pi*x/L)')
        np.testing.assert_allclose(nm.columns[1], np.sin(2 * np.pi * self.grid.nodes))

    def test_multiplicative(self):
        nm = build_noise(self.grid, kind='multiplicative', K=4, sigma='tanh', sigma_scale=2.0)
        x = np.full(31, 100.0)
        cols = nm.columns_at(0.0, x)
        np.testing.assert_allclose(cols, nm.columns * 2.0 * np.tanh(50.0))
        self.assertGreater(nm.lipschitz, 0.0)
        for check in check_certificates(nm, samples=200, seed=1):
            with self.subTest(check=check.name):
                self.assertEqual(check.violations, 0)

    def test_identity_sigma_certificates(self):
        nm = build_noise(self.grid, kind='multiplicative', K=3, sigma='identity')
        for check in check_certificates(nm, samples=200, seed=2):
            self.assertEqual(check.violations, 0)

    def test_invalid(self):
        self.assertRaises(NoiseError, build_noise, self.grid, kind='levy')
        self.assertRaises(NoiseError, build_noise, self.grid, K=0)
        self.assertRaises(NoiseError, build_noise, self.grid, kind='multiplicative', sigma='relu')
        self.assertRaises(NoiseError, build_noise, self.grid, sigma_scale=0.0)
        nm = build_noise(self.grid, K=3)
        self.assertRaises(NoiseError, increment_from_draws, nm, 0.0, np.zeros(31), np.zeros(2))

    def test_truncation(self):
        nm = truncate(build_noise(self.grid, kind='multiplicative', K=2, sigma='identity'), 1.0)
        x = np.full(31, 4.0)
        projected = nm.project(x)
        self.assertAlmostEqual(math.sqrt(self.grid.h * np.sum(projected ** 2)), 1.0)
        small = np.full(31, 0.1)
        np.testing.assert_array_equal(nm.project(small), small)
        self.assertRaises(NoiseError, truncate, nm, 0.0)

    def test_increment_from_draws(self):
        nm = build_noise(self.grid, K=3)
        dw = np.array([1.0, 0.0, -2.0])
        np.testing.assert_allclose(increment_from_draws(nm, 0.0, np.zeros(31), dw),
                                   nm.columns[0] - 2.0 * nm.columns[2])


class WienerStreamTest(unittest.TestCase):

    def test_replay(self):
        a = path_increments(7, 3, 16, 4, 0.01)
        b = path_increments(7, 3, 16, 4, 0.01)
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.shape, (16, 4))
        self.assertFalse(np.array_equal(a, path_increments(7, 4, 16, 4, 0.01)))
        self.assertFalse(np.array_equal(a, path_increments(8, 3, 16, 4, 0.01)))

    def test_prefix_is_stable(self):
        short = path_increments(11, 0, 8, 3, 0.1)
        long = path_increments(11, 0, 16, 3, 0.1)
        np.testing.assert_array_equal(long[:8], short)

    def test_step_is_addressable(self):
        dw = path_increments(11, 2, 16, 3, 0.25)
        for n in (0, 5, 15):
            np.testing.assert_array_equal(dw[n], 0.5 * step_generator(11, 2, n).standard_normal(3))
        self.assertFalse(np.array_equal(dw[0], dw[1]))

    def test_initial_stream_is_separate(self):
        a = step_generator(5, 1, 0).standard_normal(8)
        b = initial_generator(5, 1).standard_normal(8)
        self.assertFalse(np.array_equal(a, b))
        np.testing.assert_array_equal(b, initial_generator(5, 1).standard_normal(8))

    def test_coarsen(self):
        dw = np.arange(12, dtype=float).reshape(6, 2)
        np.testing.assert_array_equal(coarsen_increments(dw, 2), [[2, 4], [10, 12], [18, 20]])
        np.testing.assert_array_equal(coarsen_increments(dw, 1), dw)
        self.assertRaises(NoiseError, coarsen_increments, dw, 4)

    def test_invalid_step(self):
        self.assertRaises(NoiseError, path_increments, 0, 0, 4, 2, 0.0)


class SmoothingTest(unittest.TestCase):

    def setUp(self):
        self.grid = Grid(31)
        self.op = assemble('dirichlet_laplacian', self.grid)

    def test_first_mode_scaling(self):
        nm = build_noise(self.grid, K=1)
        smoothed = smooth(nm, self.op, 0.1)
        mu = 4.0 / self.grid.h ** 2 * math.sin(math.pi * self.grid.h / 2.0) ** 2
        np.testing.assert_allclose(smoothed.columns, nm.columns / (1.0 + 0.1 * mu), rtol=1e-10)
        self.assertEqual(smoothed.epsilon, 0.1)
        self.assertRaises(NoiseError, smooth, nm, self.op, 0.0)

    def test_gap(self):
        nm = build_noise(self.grid, K=8)
        for epsilon in [1.0, 0.1, 0.01]:
            gap = smoothing_gap(nm, self.op, epsilon)
            self.assertLessEqual(gap.lhs, gap.rhs * (1 + 1e-12))
            self.assertLessEqual(gap.shifted_contraction, 1.0 + 1e-12)

    def test_uses_recorded_power(self):
        nm = build_noise(self.grid, K=1)
        mu = 4.0 / self.grid.h ** 2 * math.sin(math.pi * self.grid.h / 2.0) ** 2
        smoothed = smooth(nm, self.op.with_m_power(3), 0.1)
        np.testing.assert_allclose(smoothed.columns, nm.columns / (1.0 + 0.1 * mu) ** 3, rtol=1e-10)

    def test_zero_columns(self):
        nm = build_noise(self.grid, K=2, amplitude=0.0)
        self.assertEqual(smooth(nm, self.op, 0.5).factor_hs, 0.0)

    def test_mode_truncation_table(self):
        rows = mode_truncation_table(self.grid, [1, 2, 4, 8], amplitude=1.0)
        self.assertEqual([r[0] for r in rows], [1, 2, 4, 8])
        self.assertEqual(rows[-1][2], 0.0)
        changes = [r[2] for r in rows]
        self.assertEqual(changes, sorted(changes, reverse=True))


@pytest.mark.statistical
class IncrementOracleTest(unittest.TestCase):

    def setUp(self):
        self.grid = Grid(31)

    def test_sample_increment(self):
        nm = build_noise(self.grid, K=4)
        rng = np.random.Generator(np.random.PCG64(seed=1))
        self.assertEqual(sample_increment(nm, 0.0, np.zeros(self.grid.n), 0.01, rng).shape, (self.grid.n,))
        self.assertRaises(NoiseError, sample_increment, nm, 0.0, np.zeros(self.grid.n), 0.0, rng)

    def test_additive(self):
        nm = build_noise(self.grid, K=8, amplitude=0.5)
        oracle = increment_oracle(nm, 0.0, np.zeros(self.grid.n), 0.01, samples=4000, seed=3)
        self.assertAlmostEqual(oracle.expected, nm.factor_hs ** 2)
        self.assertTrue(oracle.passed(), oracle)
        self.assertLess(oracle.standard_error, 0.1 * oracle.expected)

    def test_multiplicative(self):
        nm = build_noise(self.grid, kind='multiplicative', sigma='tanh', K=4)
        x = np.sin(np.pi * self.grid.nodes)
        oracle = increment_oracle(nm, 0.5, x, 0.02, samples=4000, seed=4)
        self.assertTrue(oracle.passed(), oracle)

    def test_needs_samples(self):
        self.assertRaises(NoiseError, increment_oracle, build_noise(self.grid, K=1), 0.0, np.zeros(self.grid.n), 0.1,
                          samples=1)
