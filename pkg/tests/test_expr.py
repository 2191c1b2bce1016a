import numpy as np
import pytest

from plapsys.errors import ExpressionError
from plapsys.expr import Expression


def test_scalar_and_array_evaluation():
    ex = Expression("u1 * u2**2 + sin(x)", ["x", "u1", "u2"])
    assert ex(0.0, 2.0, 3.0) == pytest.approx(18.0)
    out = ex(np.zeros(3), np.ones(3), np.arange(3.0))
    np.testing.assert_allclose(out, [0.0, 1.0, 4.0])


def test_constant_broadcasts_to_inputs():
    ex = Expression("2.5", ["t"])
    np.testing.assert_allclose(ex(np.ones(4)), 2.5)


@pytest.mark.parametrize("src", ["__import__('os')", "t.real", "[t]", "t if t else 1", "lambda: 1", "'a'"])
def test_rejects_non_arithmetic(src):
    with pytest.raises(ExpressionError):
        Expression(src, ["t"])


def test_unknown_name_lists_allowed_variables():
    with pytest.raises(ExpressionError, match="allowed variables: x"):
        Expression("y + 1", ["x"])


def test_syntax_error():
    with pytest.raises(ExpressionError, match="cannot parse"):
        Expression("1 +", ["t"])
