import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecert.poly import (Polynomial, StructureError, VariableSpace, basis_size, grlex_key,
                         monomial_basis, poly_add, poly_compose, poly_eval, poly_mul)

S3 = VariableSpace.of("x", 3)


def polys(space=S3, max_deg=3, max_terms=6, coef=st.integers(-20, 20)):
    exps = st.tuples(*[st.integers(0, max_deg)] * space.arity).filter(lambda e: sum(e) <= max_deg)
    return st.dictionaries(exps, coef.map(float), max_size=max_terms).map(
        lambda d: Polynomial(space, d))


# --- ring axioms (integer coefficients keep arithmetic exact) --------------------------------

@settings(max_examples=1000)
@given(polys(), polys(), polys())
def test_ring_axioms(p, q, r):
    zero, one = Polynomial.zero(S3), Polynomial.constant(S3, 1.0)
    assert p + q == q + p
    assert (p + q) + r == p + (q + r)
    assert p + zero == p
    assert p + (-p) == zero
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p * one == p
    assert p * (q + r) == p * q + p * r


@settings(max_examples=200)
@given(polys(), polys())
def test_degree_of_product(p, q):
    if p.is_zero() or q.is_zero():
        assert (p * q).is_zero()
    else:
        assert (p * q).degree == p.degree + q.degree


def test_no_stored_zeros():
    x = Polynomial.variable(S3, 0)
    p = (x + 1) - x
    assert p == Polynomial.constant(S3, 1.0)
    assert len(p - p) == 0


# --- composition and evaluation --------------------------------------------------------------

P2 = VariableSpace(("x1", "x2", "y1", "y2"))
S2 = VariableSpace.of("x", 2)


@settings(max_examples=300)
@given(polys(P2, 3, 6), polys(S2, 2, 4), polys(S2, 2, 4),
       st.lists(st.floats(-2, 2, allow_nan=False), min_size=4, max_size=4))
def test_compose_commutes_with_evaluation(p, f1, f2, pt):
    # p(x, y) with x replaced by f(x): evaluating the composite equals evaluating p at (f(x), y)
    comp = p.compose({0: f1.embed(P2, [0, 1]), 1: f2.embed(P2, [0, 1])})
    x = pt[:2]
    direct = p.evaluate([f1.evaluate(x), f2.evaluate(x), pt[2], pt[3]])
    val = comp.evaluate(pt)
    assert abs(val - direct) <= 1e-9 * max(1.0, abs(direct))
    if not comp.is_zero():
        assert comp.degree <= p.degree * max(f1.degree, f2.degree, 1)


def test_compose_missing_substitution_rejected():
    p = Polynomial.parse("x1*x2", S2)
    with pytest.raises(StructureError):
        p.compose({0: Polynomial.variable(S3, 0)}, target=S3)


def test_functional_aliases():
    p, q = Polynomial.parse("x1 + 2*x2", S2), Polynomial.parse("x1^2", S2)
    assert poly_add(p, q) == p + q
    assert poly_mul(p, q) == p * q
    assert poly_eval(q, [3.0, 0.0]) == 9.0
    assert poly_compose(q, {0: p}) == p * p


# --- monomial bases --------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("d", range(0, 7))
def test_monomial_counts(n, d):
    basis = monomial_basis(n, d)
    assert len(basis) == math.comb(n + d, d) == basis_size(n, d)
    assert len(set(basis)) == len(basis)


def test_grlex_order():
    basis = monomial_basis(3, 3)
    assert basis[:5] == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 2)]
    assert basis == sorted(basis, key=grlex_key)
    assert [sum(e) for e in basis] == sorted(sum(e) for e in basis)


# --- text --------------------------------------------------------------------------------------

@settings(max_examples=300)
@given(polys(P2, 4, 8, st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)))
def test_text_round_trip(p):
    assert Polynomial.parse(p.to_text(), P2) == p


def test_text_format():
    p = Polynomial.parse("3*x1^2*y2 - 0.5*x2 + 1", P2)
    assert p.to_text() == "1.0 - 0.5*x2 + 3.0*x1^2*y2"


def test_parse_rejects_unknown_variable():
    with pytest.raises((StructureError, ValueError)):
        Polynomial.parse("z9 + 1", S2)


def test_evaluate_many_matches_evaluate(rng):
    p = Polynomial.parse("x1^3 - 2*x1*x2 + 0.25*x2^2 - 7", S2)
    pts = rng.uniform(-3, 3, size=(50, 2))
    assert np.allclose(p.evaluate_many(pts), [p.evaluate(x) for x in pts], rtol=1e-12, atol=1e-12)
