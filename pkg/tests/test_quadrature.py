from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vonkarman.quadrature import MAX_EXACTNESS, conical_rule, monomial_integral, quadrature_rule


def exact_monomial(a, b):
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


def test_centroid_rule():
    r = quadrature_rule(1)
    assert len(r) == 1
    assert np.allclose(r.points, [[1 / 3, 1 / 3]])
    assert r.weights[0] == pytest.approx(0.5)


def test_dirichlet_integral():
    r = quadrature_rule(3)
    s, t = r.points.T
    value = np.sum(r.weights * (1 - s - t) * s * t)
    # 2 * area * 1! 1! 1! / 5! with area 1/2
    assert value == pytest.approx(1 / 120, abs=1e-16)


def test_degree_eight_monomials():
    r = quadrature_rule(8)
    s, t = r.points.T
    for a in range(9):
        for b in range(9 - a):
            assert np.sum(r.weights * s**a * t**b) == pytest.approx(float(exact_monomial(a, b)), abs=1e-14)


def test_monomial_integral_closed_form():
    for a in range(6):
        for b in range(6):
            assert monomial_integral(a, b) == pytest.approx(float(exact_monomial(a, b)), rel=1e-15)


def test_unsupported_exactness():
    with pytest.raises(ValueError):
        quadrature_rule(-1)
    with pytest.raises(ValueError):
        quadrature_rule(MAX_EXACTNESS + 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 24))
def test_rules_are_exact_to_declared_degree(p):
    r = quadrature_rule(p)
    assert r.exactness >= p
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-14)
    s, t = r.points.T
    assert np.all(s >= 0) and np.all(t >= 0) and np.all(s + t <= 1)
    for a in range(r.exactness + 1):
        for b in range(r.exactness + 1 - a):
            got = np.sum(r.weights * s**a * t**b)
            assert got == pytest.approx(float(exact_monomial(a, b)), abs=1e-14)


def test_low_order_rules_have_positive_weights():
    for p in range(1, 9):
        assert np.all(quadrature_rule(p).weights > 0)


def test_conical_rule_size():
    r = conical_rule(6)
    assert len(r) == 36
    assert r.exactness == 11
