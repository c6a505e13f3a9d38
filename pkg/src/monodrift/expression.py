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

"""Arithmetic expressions for coefficient fields such as ``1+0.5*cos(pi*x)``.

Only numbers, the variables handed to :func:`evaluate`, the constants ``pi``
and ``e``, the operators ``+ - * / **`` and the functions ``cos``, ``sin``,
``exp`` and ``sqrt`` are accepted. Evaluation is vectorized over numpy arrays.
"""

import ast
import operator

import numpy as np

from .core import MonodriftError


class ExpressionError(MonodriftError):
    pass


_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

_UNARY = {
    ast.UAdd: operator.pos,
    ast.USub: operator.neg,
}

_FUNCTIONS = {
    'cos': np.cos,
    'sin': np.sin,
    'exp': np.exp,
    'sqrt': np.sqrt,
}

_CONSTANTS = {
    'pi': np.float64(np.pi),
    'e': np.float64(np.e),
}


def parse(text):
    """Parse ``text`` once so it can be evaluated many times."""
    if not isinstance(text, str):
        text = repr(text)
    try:
        tree = ast.parse(text.strip(), mode='eval')
    except SyntaxError as ex:
        raise ExpressionError(f"Invalid expression '{text}': {ex.msg}")
    _check(tree.body, text)
    return tree.body


def _check(node, text):
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand, text)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        pass
    elif isinstance(node, ast.Name):
        pass
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"Function '{node.func.id}' takes exactly one argument in '{text}'")
        _check(node.args[0], text)
    else:
        raise ExpressionError(f"Unsupported syntax '{ast.dump(node)}' in '{text}'")


def _eval(node, variables):
    if isinstance(node, ast.BinOp):
        return _BINARY[type(node.op)](_eval(node.left, variables), _eval(node.right, variables))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, variables))
    if isinstance(node, ast.Constant):
        return np.float64(node.value)
    if isinstance(node, ast.Name):
        if node.id in variables:
            return variables[node.id]
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"Unknown name '{node.id}', expected one of {sorted(variables) + sorted(_CONSTANTS)}")
    return _FUNCTIONS[node.func.id](_eval(node.args[0], variables))


def evaluate(text, shape=None, **variables):
    """Evaluate ``text`` with the given variables and broadcast to ``shape``.

    >>> evaluate('1+x', x=np.array([0.0, 1.0]))
    array([1., 2.])
    """
    tree = parse(text)
    arrays = {name: np.asarray(value, dtype=float) for name, value in variables.items()}
    try:
        with np.errstate(all='ignore'):
            value = np.asarray(_eval(tree, arrays), dtype=float)
    except ArithmeticError as ex:
        raise ExpressionError(f"Expression '{text}' cannot be evaluated: {ex}")
    if shape is None:
        shape = np.broadcast_shapes(*[a.shape for a in arrays.values()]) if arrays else value.shape
    value = np.broadcast_to(value, shape).copy()
    if not np.all(np.isfinite(value)):
        raise ExpressionError(f"Expression '{text}' is not finite on the evaluation points")
    return value
