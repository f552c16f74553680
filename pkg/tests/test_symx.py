import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from flatcheck.symx import (Add, Call, Const, Div, EvalError, Frame, Mul,
                            ParseError, PivotError, Pow, Sub, Sym, SymxError,
                            UnsampleableDomainError, ZERO, compile_fn, diff,
                            equiv, eval_at, free_symbols, is_zero,
                            linear_decompose, normalize, nullspace_exprs,
                            parse, polynomial_terms, pow_expr, rref_exprs,
                            solve_affine_exprs, subst, to_str)

FR = Frame("x", ("x1", "x2", "x3"), ())


def P(s):
    return parse(s, FR)


# --- parsing ----------------------------------------------------------------

def test_parse_precedence_and_unary():
    assert is_zero(Sub(P("2 + 3*4"), P("14")))
    assert is_zero(Sub(P("-x1^2"), P("-(x1^2)")))
    assert is_zero(Sub(P("2^3^2"), P("512")))
    assert is_zero(Sub(P("x1 - x2 - x3"), P("(x1 - x2) - x3")))
    assert is_zero(Sub(P("6/3/2"), P("1")))


def test_parse_fraction_constants_exact():
    e = normalize(P("1/3 + 1/6"))
    assert e == Const(Fraction(1, 2))


@pytest.mark.parametrize("text,offset", [
    ("x1 + ", 5),
    ("x1 $ x2", 3),
    ("(x1", 3),
    ("x1 + )", 5),
    ("x9", 0),
])
def test_parse_error_offsets(text, offset):
    with pytest.raises(ParseError) as ei:
        P(text)
    assert ei.value.offset == offset


def test_frame_rejects_undeclared():
    with pytest.raises(SymxError, match="y1"):
        FR.parse("x1 + y1")


def test_point_env_binds_params():
    fr = Frame("m", ("x1",), ("J",))
    q = fr.point([2.0], {"J": 0.5})
    assert eval_at(parse("J*x1^2", fr), q) == pytest.approx(2.0)


# --- normalize --------------------------------------------------------------

def test_normalize_cancels_constant_ratio():
    assert normalize(P("(2*x1^2 + 2)/(x1^2 + 1)")) == Const(Fraction(2))
    assert normalize(P("(x1^2 + x2)/(x1^2 + x2)")) == Const(Fraction(1))


def test_normalize_monomial_content():
    assert is_zero(Sub(normalize(P("x1^3/x1")), P("x1^2")))


def test_normalize_expands_products():
    assert is_zero(Sub(P("(x1 + x2)^2"), P("x1^2 + 2*x1*x2 + x2^2")))


def test_is_zero_requires_exact():
    assert not is_zero(Sub(P("x1"), P("x1 + 1/1000000")))


def test_kernels_are_opaque_but_keyed_by_argument():
    assert is_zero(Sub(P("sin(x1 + x2)"), P("sin(x2 + x1)")))
    assert not is_zero(Sub(P("sin(x1)"), P("sin(x2)")))


_leaf = st.one_of(
    st.integers(-4, 4).map(lambda k: Const(Fraction(k))),
    st.sampled_from([Sym("x1"), Sym("x2")]),
)


def _combine(children):
    a, b = children
    return st.sampled_from([Add(a, b), Sub(a, b), Mul(a, b),
                            Div(a, Add(Mul(b, b), Const(Fraction(1))))])


_expr = st.recursive(_leaf,
                     lambda s: st.tuples(s, s).flatmap(_combine),
                     max_leaves=12)


@given(_expr)
@settings(max_examples=80, deadline=None)
def test_normalize_idempotent(e):
    n1 = normalize(e)
    assert normalize(n1) == n1


@given(_expr, st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=80, deadline=None)
def test_normalize_preserves_values(e, a, b):
    env = {"x1": a, "x2": b}
    try:
        before = eval_at(e, env)
    except EvalError:
        return
    after = eval_at(normalize(e), env)
    assert after == pytest.approx(before, rel=1e-9, abs=1e-9)


@given(_expr)
@settings(max_examples=80, deadline=None)
def test_to_str_reparses_to_same_function(e):
    back = parse(to_str(e), Frame("x", ("x1", "x2"), ()))
    assert is_zero(Sub(e, back))


# --- differentiation --------------------------------------------------------

def test_diff_product_rule():
    d = diff(P("x1*sin(x1)"), "x1")
    assert is_zero(Sub(d, P("sin(x1) + x1*cos(x1)")))


def test_diff_chain_rule_sqrt():
    d = diff(P("sqrt(1 + x1^2)"), "x1")
    assert equiv(d, P("x1/sqrt(1 + x1^2)"))


def test_diff_quotient_matches_finite_difference():
    e = P("(x1^2 + x2)/(x2^2 + 1)")
    d = diff(e, "x2")
    h = 1e-6
    env = {"x1": 0.7, "x2": -0.3}
    fd = (eval_at(e, {**env, "x2": env["x2"] + h})
          - eval_at(e, {**env, "x2": env["x2"] - h})) / (2 * h)
    assert eval_at(d, env) == pytest.approx(fd, rel=1e-8)


def test_diff_of_exp_kernel():
    assert is_zero(Sub(diff(P("exp(2*x1)"), "x1"), P("2*exp(2*x1)")))


# --- substitution and evaluation ---------------------------------------------

def test_subst_and_free_symbols():
    e = subst(P("x1 + x2^2"), {"x2": P("x1 + 1")})
    assert is_zero(Sub(e, P("x1 + (x1 + 1)^2")))
    assert free_symbols(e) == {"x1"}


def test_eval_at_division_by_zero():
    with pytest.raises(EvalError):
        eval_at(P("1/x1"), {"x1": 0.0, "x2": 0.0, "x3": 0.0})


def test_compile_fn_vectorizes():
    f = compile_fn(P("x1^2 + x2"), ("x1", "x2"))
    out = f([np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.5, 0.5])])
    assert np.allclose(out, [1.5, 4.5, 9.5])


def test_compile_fn_binds_consts():
    fr = Frame("m", ("x1",), ("J",))
    f = compile_fn(parse("J*x1", fr), ("x1",), {"J": 3.0})
    assert f([2.0]) == pytest.approx(6.0)


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_compile_fn_matches_eval_at(a, b):
    e = P("sin(x1)*x2 + exp(x2/4) - x1^3/(x2^2 + 1)")
    f = compile_fn(e, ("x1", "x2"))
    assert f([a, b]) == pytest.approx(eval_at(e, {"x1": a, "x2": b}),
                                      rel=1e-12, abs=1e-12)


# --- equivalence ------------------------------------------------------------

def test_equiv_exact_for_rational_pairs():
    assert equiv(P("x1^2 - x2^2"), P("(x1 - x2)*(x1 + x2)"))
    # exact route: a 1e-12 offset is NOT equivalent, no tolerance window
    assert not equiv(P("x1"), P("x1 + 1/1000000000000"))


def test_equiv_samples_kernel_pairs():
    assert equiv(P("sin(2*x1)"), P("2*sin(x1)*cos(x1)"), trials=100)
    assert not equiv(P("sin(x1)"), P("cos(x1)"))


def test_equiv_unsampleable_domain():
    with pytest.raises(UnsampleableDomainError):
        equiv(P("sqrt(x1 - 10)"), P("sqrt(x1 - 10) + 1"), trials=10)


# --- linear algebra over expressions -----------------------------------------

def test_rref_detects_symbolic_rank_drop():
    rows, pivots = rref_exprs([[P("1"), P("x1")],
                               [P("x1"), P("x1^2")]],
                              ref_env={"x1": 0.7})
    assert pivots == [0]
    assert all(is_zero(e) for e in rows[1])


def test_nullspace_annihilates():
    mat = [[P("1"), P("x1"), P("0")],
           [P("0"), P("x2^2 + 1"), P("1")]]
    basis = nullspace_exprs(mat, ref_env={"x1": 0.3, "x2": 0.5})
    assert len(basis) == 1
    v = basis[0]
    for row in mat:
        acc = ZERO
        for a, b in zip(row, v):
            acc = Add(acc, Mul(a, b))
        assert is_zero(acc)


def test_solve_affine_substitutes_back():
    mat = [[P("2"), P("0")], [P("0"), P("x2^2 + 1")]]
    rhs = [P("x1"), P("1")]
    part, null = solve_affine_exprs(mat, rhs, ref_env={"x1": 1.0, "x2": 0.0})
    assert null == []
    for row, b in zip(mat, rhs):
        acc = ZERO
        for a, w in zip(row, part):
            acc = Add(acc, Mul(a, w))
        assert is_zero(Sub(acc, b))


def test_solve_affine_inconsistent_returns_none():
    mat = [[P("1"), P("0")], [P("1"), P("0")]]
    rhs = [P("1"), P("2")]
    assert solve_affine_exprs(mat, rhs, ref_env={"x1": 0.0, "x2": 0.0}) is None


def test_pivot_error_when_reference_degenerate():
    with pytest.raises(PivotError):
        rref_exprs([[P("x1")]], ref_env={"x1": 0.0})


def test_linear_decompose():
    fr = Frame("w", ("x1", "u1", "u2"), ())
    e = parse("(x1^2 + 1)*u1 - 3*u2 + sin(x1)", fr)
    coeffs, rest = linear_decompose(e, ("u1", "u2"))
    assert is_zero(Sub(coeffs["u1"], parse("x1^2 + 1", fr)))
    assert is_zero(Sub(coeffs["u2"], parse("-3", fr)))
    assert is_zero(Sub(rest, parse("sin(x1)", fr)))
    with pytest.raises(SymxError):
        linear_decompose(parse("u1^2", fr), ("u1",))


def test_polynomial_terms_groups_by_monomial():
    terms = polynomial_terms(P("3*x1^2*x2 + x1*x3 + 5"), ("x1",))
    keys = set(terms)
    assert (("x1", 2),) in keys and (("x1", 1),) in keys and () in keys
    assert is_zero(Sub(terms[(("x1", 2),)], P("3*x2")))
    assert is_zero(Sub(terms[()], P("5")))


def test_pow_expr_negative_power():
    e = pow_expr(P("x1 + 1"), -2)
    assert equiv(e, P("1/(x1 + 1)^2"))


def test_to_str_printer_golden():
    assert to_str(normalize(P("1/(2*x1)"))) == "(1/2)/x1"
    assert to_str(normalize(P("(x1 + 1)^2"))) == "x1^2 + 2*x1 + 1"
