import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecert.poly import Polynomial, StructureError, VariableSpace, monomial_basis
from vecert.semialg import box_set, whole_space
from vecert.sosprog import (AffinePolyExpr, BilinearityError, SizingError, SosProgram,
                            gram_polynomial)

S2 = VariableSpace.of("x", 2)


@settings(max_examples=20, derandomize=True)
@given(st.integers(0, 10 ** 6), st.integers(1, 3))
def test_sos_round_trip(seed, terms):
    # a sum of squares of random quadratics is recovered with a PSD Gram matrix
    rng = np.random.default_rng(seed)
    basis = monomial_basis(S2, 2)
    p = Polynomial.zero(S2)
    for _ in range(terms):
        q = Polynomial.from_coefficients(S2, basis, rng.normal(size=len(basis)))
        p = p + q * q
    prog = SosProgram()
    cid = prog.add_sos_on_set(p, whole_space(S2))
    sol = prog.solve()
    assert sol.optimal
    assert sol.reconstruction_residual(cid) <= 1e-6
    assert min(sol.min_eigenvalues(cid)) >= -1e-8


def test_putinar_on_box():
    # x is not globally SOS but is nonnegative on [0, 1]
    x = Polynomial.variable(VariableSpace.of("x", 1), 0)
    B = box_set([0.0], [1.0], x.space)
    prog = SosProgram()
    cid = prog.add_sos_on_set(x, B)
    sol = prog.solve()
    assert sol.optimal and sol.reconstruction_residual(cid) <= 1e-6
    prog2 = SosProgram()
    prog2.add_sos_on_set(x, whole_space(x.space))
    assert not prog2.solve().optimal


def test_template_search():
    # find c with x^2 + c*x + 1 SOS while maximizing c -> c = 2
    prog = SosProgram()
    c = prog.new_scalar("c", cost=-1.0, lb=-10, ub=10)
    x = Polynomial.variable(S2, 0)
    expr = AffinePolyExpr.of(x * x + 1.0) + prog.scalar_expr(c, S2) * AffinePolyExpr.of(x)
    prog.add_sos_on_set(expr, whole_space(S2))
    sol = prog.solve()
    assert sol.optimal and abs(sol.value(c) - 2.0) < 1e-5


def test_template_polynomial():
    prog = SosProgram()
    t = prog.declare_template(S2, 2, "T")
    assert t.n_coefs == 6
    vals = np.arange(len(prog.scalars), dtype=float)
    assert t.polynomial(vals) == Polynomial.from_coefficients(S2, t.basis, vals[list(t.coef_vars)])


def test_bilinearity_rejected():
    prog = SosProgram()
    a, b = prog.new_scalar(), prog.new_scalar()
    with pytest.raises(BilinearityError):
        prog.scalar_expr(a, S2) * prog.scalar_expr(b, S2)


def test_sizing_errors():
    prog = SosProgram()
    x = Polynomial.variable(S2, 0)
    with pytest.raises(SizingError):
        prog.add_sos_on_set(x ** 3, whole_space(S2), target_degree=3)
    with pytest.raises(SizingError):
        prog.add_sos_on_set(x ** 4, whole_space(S2), target_degree=2)
    with pytest.raises(StructureError):
        prog.add_sos_on_set(x, box_set([0], [1]))


def test_size_report_matches_compile():
    prog = SosProgram()
    x = Polynomial.variable(S2, 0)
    prog.add_sos_on_set(x ** 2 + 1.0, box_set([0, 0], [1, 1], S2))
    pre = prog.size_report()
    post = prog.compile().size_report()
    assert pre["equalities"] == post["sdp_equalities"] == 6
    assert pre["max_block"] == post["sdp_max_block"] == 3


def test_gram_polynomial():
    basis = monomial_basis(S2, 1)
    Q = np.eye(3)
    assert gram_polynomial(Q, basis, S2) == Polynomial.parse("1 + x1^2 + x2^2", S2)
