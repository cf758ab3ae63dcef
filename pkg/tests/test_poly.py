import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ssfilter.poly import (
    Polynomial,
    PolyVector,
    finite_difference_gradient,
    lie_derivative_f,
    lie_derivative_g,
    poly_norm_sq,
)


def x_var(i, n=2):
    return Polynomial.variable(n, i)


@pytest.fixture(scope="module")
def barrier():
    # ||x - (0,4)||^2 - 4 expanded
    x1, x2 = x_var(0), x_var(1)
    return x1 * x1 + (x2 - 4.0) * (x2 - 4.0) - 4.0


def test_evaluate_barrier_at_boundary(barrier):
    assert barrier.evaluate((0.0, 2.0)) == 0.0


def test_evaluate_zero_polynomial():
    z = Polynomial.zero(3)
    assert z.evaluate((1.0, -2.0, 7.5)) == 0.0


def test_evaluate_norm_square():
    p = poly_norm_sq(2)
    assert p.evaluate((3.0, 4.0)) == 25.0


def test_expand_barrier_coefficients(barrier):
    # hand expansion: x1^2 + x2^2 - 8 x2 + 12
    assert barrier.terms == {(2, 0): 1.0, (0, 2): 1.0, (0, 1): -8.0, (0, 0): 12.0}


def test_gradient_norm_square():
    g = poly_norm_sq(2).gradient()
    assert g[0].terms == {(1, 0): 2.0}
    assert g[1].terms == {(0, 1): 2.0}


def test_gradient_constant_is_zero():
    c = Polynomial.constant(2, 5.0)
    assert all(p.is_zero() for p in c.gradient())


def test_gradient_barrier(barrier):
    g = barrier.gradient()
    assert g[0].terms == {(1, 0): 2.0}
    assert g[1].terms == {(0, 1): 2.0, (0, 0): -8.0}


def test_lie_derivative_f_barrier(barrier):
    # f = x: grad b . f = 2x1^2 + 2x2^2 - 8x2
    f = PolyVector([x_var(0), x_var(1)])
    lfb = lie_derivative_f(barrier, f)
    assert lfb.terms == {(2, 0): 2.0, (0, 2): 2.0, (0, 1): -8.0}


def test_lie_derivative_f_zero_field(barrier):
    f = PolyVector([Polynomial.zero(2), Polynomial.zero(2)])
    assert lie_derivative_f(barrier, f).is_zero()


def test_lie_derivative_f_norm_square():
    V = poly_norm_sq(2)
    f = PolyVector([x_var(0), x_var(1)])
    assert lie_derivative_f(V, f).terms == {(2, 0): 2.0, (0, 2): 2.0}


def test_lie_derivative_g_identity(barrier):
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial.zero(2)
    row = lie_derivative_g(barrier, [[one, zero], [zero, one]])
    assert row[0].terms == {(1, 0): 2.0}
    assert row[1].terms == {(0, 1): 2.0, (0, 0): -8.0}


def test_lie_derivative_g_constant_is_zero():
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial.zero(2)
    c = Polynomial.constant(2, 3.0)
    row = lie_derivative_g(c, [[one, zero], [zero, one]])
    assert all(p.is_zero() for p in row)


def test_lie_derivative_g_polynomial_case():
    # state-dependent diagonal gains: LgV rows from the nonlinear example
    x1, x2 = x_var(0), x_var(1)
    V = poly_norm_sq(2)
    zero = Polynomial.zero(2)
    g = [
        [0.2 * x1 * x1 + 0.2 * x2 + 1.0, zero],
        [zero, -0.2 * x2 * x2 + 0.2 * x1 + 4.0],
    ]
    row = lie_derivative_g(V, g)
    assert row[0].terms == pytest.approx({(3, 0): 0.4, (1, 1): 0.4, (1, 0): 2.0})
    assert row[1].terms == pytest.approx({(0, 3): -0.4, (1, 1): 0.4, (0, 1): 8.0})


def test_additive_inverse(barrier):
    assert (barrier + (-barrier)).is_zero()


def test_monomial_product():
    x1 = x_var(0)
    assert (x1 * x1).terms == {(2, 0): 1.0}


def test_degree_conventions(barrier):
    assert barrier.degree() == 2
    assert Polynomial.zero(2).degree() == 0
    assert Polynomial.constant(2, 3.0).degree() == 0


def test_dimension_mismatch_raises():
    p = poly_norm_sq(2)
    with pytest.raises(ValueError):
        p.evaluate((1.0,))
    with pytest.raises(ValueError):
        p + poly_norm_sq(3)


def test_json_round_trip_identical_terms(barrier):
    data = json.loads(json.dumps(barrier.to_json()))
    back = Polynomial.from_json(data)
    assert back.terms == barrier.terms
    assert back.num_vars == barrier.num_vars


def test_json_exponents_sorted(barrier):
    exps = [tuple(t["exp"]) for t in barrier.to_json()["terms"]]
    assert exps == sorted(exps)


def test_compiled_matches_evaluate(barrier):
    fn = barrier.compile()
    rng = random.Random(7)
    for _ in range(50):
        x = (rng.uniform(-5, 5), rng.uniform(-5, 5))
        assert fn(x) == pytest.approx(barrier.evaluate(x), rel=1e-12, abs=1e-12)


@st.composite
def polynomials(draw, num_vars=2, max_degree=6, max_terms=8):
    n_terms = draw(st.integers(1, max_terms))
    terms = {}
    for _ in range(n_terms):
        exp = tuple(
            draw(st.integers(0, max_degree // num_vars + 1)) for _ in range(num_vars)
        )
        coef = draw(
            st.floats(-10, 10, allow_nan=False, allow_infinity=False).filter(
                lambda c: abs(c) > 1e-6
            )
        )
        terms[exp] = coef
    return Polynomial(num_vars, terms)


@given(p=polynomials(), q=polynomials(), a=st.floats(-5, 5, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_lie_derivative_linearity(p, q, a):
    f = PolyVector([x_var(0), x_var(1)])
    lhs = lie_derivative_f(p.scale(a) + q, f)
    rhs = lie_derivative_f(p, f).scale(a) + lie_derivative_f(q, f)
    x = (0.7, -1.3)
    assert lhs.evaluate(x) == pytest.approx(rhs.evaluate(x), rel=1e-9, abs=1e-9)


@given(p=polynomials())
@settings(max_examples=60, deadline=None)
def test_gradient_matches_finite_differences(p):
    x = (0.8, -0.6)
    grad = [g.evaluate(x) for g in p.gradient()]
    fd = finite_difference_gradient(p.evaluate, x)
    scale = 1.0 + max(abs(v) for v in grad)
    for a, b in zip(grad, fd):
        assert abs(a - b) <= 1e-6 * scale


@given(p=polynomials(), q=polynomials())
@settings(max_examples=60, deadline=None)
def test_product_evaluation(p, q):
    x = (1.1, -0.9)
    prod = (p * q).evaluate(x)
    sep = p.evaluate(x) * q.evaluate(x)
    assert prod == pytest.approx(sep, rel=1e-10, abs=1e-10)


def test_polyvector_requires_nonempty():
    with pytest.raises(ValueError):
        PolyVector([])


def test_coefficient_pruning():
    p = Polynomial(2, {(1, 0): 1.0})
    q = Polynomial(2, {(1, 0): -1.0 + 1e-16})
    assert (p + q).is_zero()
