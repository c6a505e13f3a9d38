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

import unittest

import numpy as np

from monodrift.expression import evaluate
from monodrift.expression import ExpressionError
from monodrift.expression import parse


class ExpressionTest(unittest.TestCase):

    def test_constant_broadcasts(self):
        value = evaluate('1', shape=(4,))
        np.testing.assert_array_equal(value, np.ones(4))
        self.assertEqual(evaluate(0.5, shape=(2,)).tolist(), [0.5, 0.5])

    def test_functions_and_constants(self):
        x = np.linspace(0.0, 1.0, 5)
        np.testing.assert_allclose(evaluate('1+0.5*cos(pi*x)', x=x), 1 + 0.5 * np.cos(np.pi * x))
        np.testing.assert_allclose(evaluate('sqrt(x)*exp(-x)', x=x), np.sqrt(x) * np.exp(-x))
        np.testing.assert_allclose(evaluate('-x**2 + e', x=x), -x ** 2 + np.e)

    def test_two_variables(self):
        k = np.arange(1, 4, dtype=float)[:, None]
        x = np.linspace(0.0, 1.0, 3)[None, :]
        value = evaluate('sin(k*pi*x)/k', shape=(3, 3), x=x, k=k)
        self.assertEqual(value.shape, (3, 3))
        np.testing.assert_allclose(value, np.sin(k * np.pi * x) / k)

    def test_rejected_syntax(self):
        for text in ['__import__("os")', 'x.real', 'abs(x)', 'x if x else 1', 'sin(x, x)', '[x]', 'True']:
            with self.subTest(text=text):
                self.assertRaises(ExpressionError, parse, text)
        self.assertRaises(ExpressionError, parse, '1 +')

    def test_unknown_name(self):
        with self.assertRaises(ExpressionError) as cm:
            evaluate('y + 1', x=np.zeros(2))
        self.assertIn("'y'", str(cm.exception))

    def test_not_finite(self):
        self.assertRaises(ExpressionError, evaluate, '1/x', x=np.array([0.0, 1.0]))

    def test_arithmetic_errors(self):
        for text in ['1/0', '10**400', '10.0**400', '(-1)**0.5']:
            with self.subTest(text=text):
                self.assertRaises(ExpressionError, evaluate, text, shape=(3,))
        self.assertRaises(ExpressionError, evaluate, '1/(x-x)', x=np.ones(2))
