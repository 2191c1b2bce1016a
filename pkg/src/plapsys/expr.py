"""A small arithmetic expression language evaluated with numpy.

Expressions are parsed with :mod:`ast` and checked against a whitelist of
node types, names and functions before being compiled, so configuration
files can never execute arbitrary Python.
"""

import ast

import numpy as np

from .errors import ExpressionError

FUNCTIONS = {
    "exp": np.exp,
    "expm1": np.expm1,
    "log": np.log,
    "log1p": np.log1p,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


class Expression:
    """Compiled arithmetic expression in a fixed set of variables.

    >>> Expression("t**2 + 1", ["t"])(3.0)
    10.0
    """

    def __init__(self, source, variables):
        self.source = str(source)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(
                f"cannot parse expression {self.source!r}: {exc.msg}",
                operation="parse", witness={"offset": exc.offset},
            ) from None
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ExpressionError(
                    f"unsupported syntax {type(node).__name__} in {self.source!r}",
                    operation="parse",
                )
            if isinstance(node, ast.Name):
                if node.id not in self.variables and node.id not in FUNCTIONS and node.id not in CONSTANTS:
                    raise ExpressionError(
                        f"unknown name {node.id!r} in {self.source!r}; "
                        f"allowed variables: {', '.join(self.variables)}",
                        operation="parse",
                    )
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                    raise ExpressionError(f"unknown function in {self.source!r}", operation="parse")
                if node.keywords:
                    raise ExpressionError("keyword arguments are not allowed", operation="parse")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ExpressionError(f"non-numeric literal in {self.source!r}", operation="parse")
        self._code = compile(tree, "<expr>", "eval")
        self.names = sorted({n.id for n in ast.walk(tree) if isinstance(n, ast.Name) and n.id in self.variables})

    def __call__(self, *args, **kwargs):
        env = dict(CONSTANTS)
        env.update(FUNCTIONS)
        env.update(zip(self.variables, args))
        env.update(kwargs)
        with np.errstate(all="ignore"):
            value = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        shape = np.broadcast(*[np.asarray(env[v]) for v in self.variables if v in env]).shape \
            if self.variables else ()
        out = np.broadcast_to(np.asarray(value, dtype=float), shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def __repr__(self):
        return f"Expression({self.source!r}, {list(self.variables)!r})"
