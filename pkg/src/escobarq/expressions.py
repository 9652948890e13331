"""Tiny arithmetic-expression grammar for weight and conformal-factor specs.

Expressions are written over the coordinates ``x1 .. x{n-1}`` and ``t``
with numbers, ``+ - * / ^``, parentheses, and the functions
``sin cos exp sqrt tanh``.  ``^`` means power.  The grammar is validated
up front, before any numerics run, and errors carry the offending
position or name.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.USub, ast.UAdd)


class Expression:
    """A validated expression evaluable on numpy coordinate arrays."""

    def __init__(self, text: str, n: int):
        self.text = text
        self.variables = tuple(f"x{i}" for i in range(1, n)) + ("t",)
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(
                f"cannot parse expression {text!r}: {exc.msg} at column {exc.offset}"
            ) from exc
        _validate(tree.body, set(self.variables), text)
        self._code = compile(tree, f"<expression {text!r}>", "eval")

    def __call__(self, coords: dict[str, np.ndarray]) -> np.ndarray:
        env = dict(_FUNCTIONS)
        env.update({name: coords[name] for name in self.variables})
        out = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        return np.asarray(out, dtype=float)

    def __repr__(self):
        return f"Expression({self.text!r})"


def _validate(node: ast.AST, names: set[str], text: str) -> None:
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ConfigError(f"non-numeric constant {node.value!r} in {text!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ConfigError(
                f"unknown variable {node.id!r} in {text!r} "
                f"(allowed: {', '.join(sorted(names))})"
            )
        return
    if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _validate(node.left, names, text)
        _validate(node.right, names, text)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _validate(node.operand, names, text)
        return
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
            raise ConfigError(f"unknown function call in {text!r}")
        if node.keywords or len(node.args) != 1:
            raise ConfigError(f"functions take exactly one argument in {text!r}")
        _validate(node.args[0], names, text)
        return
    raise ConfigError(
        f"disallowed syntax {type(node).__name__!r} at column "
        f"{getattr(node, 'col_offset', '?')} in {text!r}"
    )
