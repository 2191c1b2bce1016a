import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapsys.errors import DomainError, NonlinearityError, RangeError, TransformUndefinedError
from plapsys.nonlinearity import (
    class_f_validate,
    expm1,
    keller_osserman_check,
    parse_nonlinearity,
    phi_invert,
    phi_invert_array,
    phi_transform,
    power,
    primitive_H,
    sum_of,
)


def phi_power(gamma, p, w):
    # closed form of int_w^inf t^(-gamma/(p-1)) dt
    q = gamma / (p - 1)
    return w ** (1 - q) / (q - 1)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("gamma", [1.0, 1.5, 2.0, 3.0, 4.0])
def test_ko_verdict_matches_power_threshold(gamma, p):
    v = keller_osserman_check(power(1.0, gamma), p)
    assert v.converges == (gamma > p - 1)
    if gamma == p - 1:
        assert v.boundary_case


def test_ko_estimate_for_square_at_p2():
    # int_1^inf (t^3/3)^(-1/2) dt = 2 sqrt(3)
    v = keller_osserman_check(power(1.0, 2.0), 2.0)
    assert v.total == pytest.approx(2 * math.sqrt(3), rel=1e-3)
    assert v.tail_exponent == pytest.approx(1.5, abs=1e-6)


def test_ko_exponential_converges():
    assert keller_osserman_check(expm1(1.0), 2.0).converges


def test_primitive_matches_closed_form():
    f = power(2.0, 3.0)
    assert primitive_H(f, 2.0) == pytest.approx(2.0 * 2.0 ** 4 / 4)
    g = parse_nonlinearity('expr("t**3 + t")')
    assert g.primitive(1.5) == pytest.approx(1.5 ** 4 / 4 + 1.5 ** 2 / 2, rel=1e-10)


def test_sum_of_adds_values():
    f = sum_of(power(1, 2), power(2, 3))
    assert float(f.h(2.0)) == pytest.approx(4 + 16)
    assert float(f.h_prime(2.0)) == pytest.approx(4 + 24)


def test_parse_rejects_garbage():
    with pytest.raises(NonlinearityError):
        parse_nonlinearity("cube(3)")
    with pytest.raises(NonlinearityError):
        parse_nonlinearity("power(1,")


@pytest.mark.parametrize("spec", ["power(1,3)", "expm1(2)", 'expr("sinh(t)")', "sum(power(1,2),expm1(1))"])
def test_class_f_members_pass(spec):
    d = class_f_validate(spec, 2.0)
    assert all(c.passed for c in d.checks.values()), d.checks


def test_class_f_failures_carry_witnesses():
    d = class_f_validate('expr("t**2 - 0.25")', 2.0)
    assert not d.checks["h_zero"].passed
    assert d.checks["h_zero"].witness["h"] == pytest.approx(-0.25)
    assert not d.checks["positive"].passed
    assert d.checks["positive"].witness["h"] < 0

    d = class_f_validate('expr("t**3 - t**2")', 2.0)
    assert not d.checks["monotone"].passed
    assert not d.checks["positive"].passed
    # minimum of t^3 - t^2 sits at t = 2/3
    assert d.checks["positive"].witness["t"] == pytest.approx(2 / 3, abs=1e-6)

    d = class_f_validate("power(1,1)", 2.0)
    assert not d.checks["keller_osserman"].passed


def test_class_f_sample_count_floor():
    with pytest.raises(ValueError):
        class_f_validate("power(1,2)", 2.0, sample_count=8)


@pytest.mark.parametrize("gamma,p,w", [(2.0, 2.0, 1.0), (3.0, 2.0, 0.5), (4.0, 3.0, 2.0), (2.0, 1.5, 3.0)])
def test_phi_closed_forms(gamma, p, w):
    assert phi_transform(power(1, gamma), p, w) == pytest.approx(phi_power(gamma, p, w), rel=1e-8)


def test_phi_errors():
    with pytest.raises(TransformUndefinedError):
        phi_transform(power(1, 1), 2.0, 1.0)
    with pytest.raises(DomainError):
        phi_transform(power(1, 2), 2.0, 0.0)
    with pytest.raises(RangeError):
        phi_invert(power(1, 2), 2.0, -1.0)


def test_phi_invert_square():
    # Phi(w) = 1/w for g = t^2, p = 2
    assert phi_invert(power(1, 2), 2.0, 0.25) == pytest.approx(4.0, rel=1e-10)
    z = np.array([2.0, 1.0, 0.1, 1e-3])
    w, back = phi_invert_array(power(1, 2), 2.0, z)
    np.testing.assert_allclose(w, 1 / z, rtol=1e-10)
    np.testing.assert_allclose(back, z, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 100.0), b=st.floats(0.01, 100.0))
def test_phi_strictly_decreasing(a, b):
    f = power(1.0, 3.0)
    if abs(a - b) < 1e-6 * max(a, b):
        return
    lo, hi = sorted((a, b))
    assert phi_transform(f, 2.0, lo) > phi_transform(f, 2.0, hi)


@settings(max_examples=40, deadline=None)
@given(w=st.floats(0.05, 1e4), gamma=st.sampled_from([2.0, 3.0, 4.0]))
def test_phi_round_trip(w, gamma):
    f = power(1.0, gamma)
    z = phi_transform(f, 2.0, w)
    assert phi_invert(f, 2.0, z) == pytest.approx(w, rel=1e-7)


def test_phi_values_at_p3():
    # Phi(w) = 2 / sqrt(w) for g = t^3, p = 3
    assert phi_transform(power(1, 3), 3.0, 8.0) == pytest.approx(2 / math.sqrt(8), rel=1e-8)
    assert phi_invert(power(1, 3), 3.0, 1.0) == pytest.approx(4.0, rel=1e-9)
