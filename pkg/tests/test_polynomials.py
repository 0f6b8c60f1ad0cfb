import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leafavg import (
    EXACT,
    FLOAT,
    Polynomial,
    PolynomialParseError,
    DimensionMismatch,
    ScalarModeMismatch,
    euler_apply,
    format_polynomial,
    monomial_basis,
    parse_polynomial,
    radius_squared,
    rationalize,
    sphere_inner,
    sphere_mean,
    sphere_norm,
)
from leafavg.models import sample_sphere_many

from util import random_homogeneous


def P(text, dim, mode=EXACT):
    return parse_polynomial(text, dim, mode)


# -- evaluation ---------------------------------------------------------------


def test_eval_square_sum():
    assert P("x1^2 + x2^2", 2).eval((3, 4)) == 25


def test_eval_unit_vector():
    quadric = P("x1^2 + x2^2 - x3^2 - x4^2", 4)
    assert quadric.eval((1, 0, 0, 0)) == 1
    assert quadric.eval((0, 0, 1, 0)) == -1


def test_eval_zero_polynomial():
    assert Polynomial.zero(3).eval((5, 7, 9)) == 0


def test_eval_exact_rational_point():
    p = P("1/3 * x1^2", 1)
    value = p.eval((Fraction(1, 2),))
    assert value == Fraction(1, 12)
    assert isinstance(value, Fraction)


def test_eval_many_matches_eval():
    rng = np.random.default_rng(0)
    p = random_homogeneous(3, 4, rng)
    pts = rng.normal(size=(20, 3))
    vectorized = p.eval_many(pts)
    for row, value in zip(pts, vectorized):
        assert math.isclose(float(p.eval(tuple(row))), value, rel_tol=1e-12, abs_tol=1e-12)


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        P("x1", 2).eval((1,))


# -- ring operations ----------------------------------------------------------


def test_binomial_square():
    x_plus_y = P("x1 + x2", 2)
    assert x_plus_y * x_plus_y == P("x1^2 + 2 * x1 * x2 + x2^2", 2)


def test_additive_identity():
    p = P("x1^2 - 3 * x2", 2)
    assert p + Polynomial.zero(2) == p


def test_scale_by_zero():
    assert P("x1^2", 2).scale(0).is_zero


def test_mode_mismatch_rejected():
    with pytest.raises(ScalarModeMismatch):
        P("x1", 2) + P("x1", 2, FLOAT)


def test_dim_mismatch_rejected():
    with pytest.raises(DimensionMismatch):
        P("x1", 2) * P("x1", 3)


def test_no_implicit_float_in_exact_mode():
    with pytest.raises(ScalarModeMismatch):
        Polynomial(2, {(1, 0): 0.5}, EXACT)


def test_power():
    p = P("x1 + 1", 1)
    assert p ** 3 == P("x1^3 + 3 * x1^2 + 3 * x1 + 1", 1)
    assert (p ** 0) == Polynomial.constant(1, 1)


# -- calculus -----------------------------------------------------------------


def test_gradient_power_rule():
    grad = P("x1^2 + x2^2", 2).gradient()
    assert grad[0] == P("2 * x1", 2)
    assert grad[1] == P("2 * x2", 2)


def test_gradient_of_constant():
    grad = Polynomial.constant(3, 7).gradient()
    assert all(g.is_zero for g in grad)


def test_quadric_gradient_norm_squared():
    # |grad F|^2 for the signature quadric expands to 4 r^2 (degree 2 case
    # of the g^2 r^(2g-2) identity); oracle is the hand expansion
    quadric = P("x1^2 + x2^2 - x3^2 - x4^2", 4)
    grad_sq = Polynomial.zero(4)
    for part in quadric.gradient():
        grad_sq = grad_sq + part * part
    assert grad_sq == radius_squared(4).scale(4)


def test_laplacian_examples():
    assert P("x1^2 + x2^2", 2).laplacian() == Polynomial.constant(2, 4)
    assert P("x1^2 + x2^2 - x3^2 - x4^2", 4).laplacian().is_zero
    assert P("x1^3", 1).laplacian() == P("6 * x1", 1)


def test_homogeneous_components():
    p = P("x1^2 + x1", 1)
    comps = p.homogeneous_components()
    assert comps == {2: P("x1^2", 1), 1: P("x1", 1)}
    hom = P("x1^2 + x1 * x2", 2)
    assert hom.homogeneous_components() == {2: hom}
    assert Polynomial.zero(2).homogeneous_components() == {}


# -- monomial bookkeeping -------------------------------------------------------


def test_monomial_basis_two_vars_degree_two():
    assert monomial_basis(2, 2) == [(2, 0), (1, 1), (0, 2)]


def test_monomial_basis_counts():
    assert len(monomial_basis(4, 2)) == 10
    assert monomial_basis(1, 5) == [(5,)]


# -- sphere moments -------------------------------------------------------------


def test_sphere_mean_circle():
    assert sphere_mean(P("x1^2", 2)) == Fraction(1, 2)
    assert sphere_mean(P("x1^4", 2)) == Fraction(3, 8)


def test_sphere_mean_odd_vanishes():
    assert sphere_mean(P("x1 * x2", 2)) == 0
    assert sphere_mean(P("x1^3 * x2^2", 3)) == 0


def test_sphere_mean_s2():
    assert sphere_mean(P("x1^2", 3)) == Fraction(1, 3)


def test_sphere_mean_matches_monte_carlo():
    rng = np.random.default_rng(7)
    for trial in range(3):
        p = random_homogeneous(3, int(rng.integers(1, 7)), rng)
        exact = float(sphere_mean(p))
        samples = p.eval_many(sample_sphere_many(200_000, 3, rng))
        se = samples.std(ddof=1) / math.sqrt(len(samples))
        assert abs(samples.mean() - exact) <= 3 * se + 1e-12


def test_sphere_inner_is_product_mean():
    p = P("x1", 2)
    q = P("x1^3", 2)
    assert sphere_inner(p, q) == sphere_mean(P("x1^4", 2))


# -- rationalize ----------------------------------------------------------------


def test_rationalize_examples():
    p = Polynomial(1, {(2,): 0.49999998}, FLOAT)
    cleaned, worst = rationalize(p, 10)
    assert cleaned == P("1/2 * x1^2", 1)
    assert worst < 1e-7

    zero, worst = rationalize(Polynomial(1, {(1,): 0.0}, FLOAT), 10)
    assert zero.is_zero and worst == 0.0

    third, _ = rationalize(Polynomial(1, {(1,): 0.333333}, FLOAT), 4)
    assert third == P("1/3 * x1", 1)


# -- text format ----------------------------------------------------------------


@pytest.mark.parametrize("text", [
    "x1^2 + 2 * x1 * x2 + x2^2",
    "3/4 * x1^2 * x2 - x3^4 + 5",
    "-x1 + 1/2",
    "0",
])
def test_parse_format_roundtrip(text):
    p = parse_polynomial(text, 4)
    assert parse_polynomial(format_polynomial(p), 4) == p


def test_parse_whitespace_insensitive():
    assert P(" x1 ^2+   2*x1* x2 ", 2) == P("x1^2 + 2 * x1 * x2", 2)


def test_parse_decimal_exactly_in_exact_mode():
    assert P("0.5 * x1", 1) == P("1/2 * x1", 1)


def test_parse_errors():
    with pytest.raises(PolynomialParseError):
        parse_polynomial("x9", 2)
    with pytest.raises(PolynomialParseError):
        parse_polynomial("x1 +", 2)
    with pytest.raises(PolynomialParseError):
        parse_polynomial("x1^x2", 2)
    with pytest.raises(PolynomialParseError):
        parse_polynomial("", 2)


def test_format_is_graded_lex():
    p = P("x2 + x1^2 + x1 * x2", 2)
    assert format_polynomial(p) == "x1^2 + x1 * x2 + x2"


# -- algebraic properties (hypothesis) -------------------------------------------


@st.composite
def exact_polys(draw, dim=2, max_degree=3):
    n_terms = draw(st.integers(0, 4))
    terms = {}
    for _ in range(n_terms):
        expo = tuple(draw(st.integers(0, max_degree)) for _ in range(dim))
        coeff = Fraction(draw(st.integers(-9, 9)), draw(st.integers(1, 9)))
        if coeff:
            terms[expo] = terms.get(expo, 0) + coeff
    return Polynomial(dim, {e: c for e, c in terms.items() if c != 0})


@settings(max_examples=60, deadline=None, derandomize=True)
@given(exact_polys(), exact_polys(), exact_polys())
def test_ring_axioms(p, q, r):
    assert (p + q) + r == p + (q + r)
    assert p * q == q * p
    assert p * (q + r) == p * q + p * r
    assert (p * q) * r == p * (q * r)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(exact_polys(), exact_polys(), st.tuples(st.integers(-5, 5), st.integers(-5, 5)))
def test_eval_is_ring_homomorphism(p, q, point):
    assert (p * q).eval(point) == p.eval(point) * q.eval(point)
    assert (p + q).eval(point) == p.eval(point) + q.eval(point)


@settings(max_examples=40, deadline=None, derandomize=True)
@given(exact_polys(), exact_polys())
def test_laplacian_product_rule(p, q):
    cross = Polynomial.zero(2)
    for i in range(2):
        cross = cross + p.partial(i) * q.partial(i)
    lhs = (p * q).laplacian()
    rhs = p * q.laplacian() + q * p.laplacian() + cross.scale(2)
    assert lhs == rhs


@settings(max_examples=40, deadline=None, derandomize=True)
@given(st.integers(1, 5), st.integers(0, 10))
def test_euler_identity(degree, seed):
    # radial derivation of a homogeneous polynomial returns degree * p,
    # the infinitesimal form of f(r x) = r^m f(x)
    rng = np.random.default_rng(seed)
    p = random_homogeneous(3, degree, rng)
    assert euler_apply(p) == p.scale(degree)


def test_dilation_scaling_of_homogeneous_eval():
    rng = np.random.default_rng(3)
    p = random_homogeneous(3, 4, rng)
    x = (Fraction(1, 2), Fraction(-2, 3), Fraction(5, 7))
    r = Fraction(3, 2)
    scaled = tuple(r * c for c in x)
    assert p.eval(scaled) == r ** 4 * p.eval(x)


def test_sphere_norm_nonnegative():
    p = P("x1 - x2", 2)
    assert sphere_norm(p) > 0
    assert sphere_norm(Polynomial.zero(2)) == 0.0
