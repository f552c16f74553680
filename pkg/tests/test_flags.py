import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from fractions import Fraction

from flatcheck.symx import Const, Frame, SymxError, parse
from flatcheck.diffgeo import VectorField, basis_vector
from flatcheck.flags import (SystemSpec, check_condition1, compute_flags,
                             dims_at, feedback_flags)

import systems


def _points(spec, count, seed=3):
    rng = np.random.default_rng(seed)
    params = spec.bound_params(seed)
    box = spec.sample_box()
    return [spec.frame.point([float(rng.uniform(lo, hi)) for lo, hi in box],
                             params)
            for _ in range(count)]


@pytest.mark.parametrize("n", [4, 5, 6])
def test_chained_flags_grow_one_per_level(n):
    spec = systems.chained(n)
    res = check_condition1(spec, _points(spec, 5))
    assert res["pass"], res["first_failure"]
    assert res["expected"] == [2 + k for k in range(n - 1)]


def test_example1_condition1_passes(example1_spec):
    res = check_condition1(example1_spec, _points(example1_spec, 20))
    assert res["pass"]
    assert res["points_checked"] == 20


def test_involutive_pair_fails_at_k1_everywhere():
    spec = systems.involutive()
    res = check_condition1(spec, _points(spec, 25))
    assert not res["pass"]
    assert res["first_failure"]["level"] == 1
    for rec in res["per_point"]:
        assert rec["dim_F"][1] == 2 and rec["dim_G"][1] == 2


def test_dims_at_single_point(chained4_spec):
    table = compute_flags(chained4_spec)
    q = chained4_spec.point([0.3, -0.2, 0.5, 0.1])
    df, dg = dims_at(table, q)
    assert df == [2, 3, 4] and dg == [2, 3, 4]


def test_flag_table_depth(motor_spec):
    table = compute_flags(motor_spec)
    assert table.depth == motor_spec.n - 2


@given(st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3),
       st.integers(-3, 3))
@settings(max_examples=20, deadline=None)
def test_constant_feedback_leaves_dims_invariant(a, b, c, d):
    if a * d - b * c == 0:
        return
    spec = systems.chained(4)
    beta = ((Const(Fraction(a)), Const(Fraction(b))),
            (Const(Fraction(c)), Const(Fraction(d))))
    base = compute_flags(spec)
    mixed = feedback_flags(spec, beta)
    for q in _points(spec, 3, seed=11):
        assert dims_at(base, q) == dims_at(mixed, q)


def test_feedback_flags_rejects_singular_matrix(chained4_spec):
    one = Const(Fraction(1))
    beta = ((one, one), (one, one))
    with pytest.raises(SymxError, match="determinant"):
        feedback_flags(chained4_spec, beta)


def test_spec_validation_errors():
    fr = Frame("x", ("x1", "x2"), ())
    other = Frame("y", ("y1", "y2"), ())
    zero = VectorField(fr, (Const(Fraction(0)),) * 2)
    e1 = basis_vector(fr, 0)
    with pytest.raises(ValueError, match="chart"):
        SystemSpec(frame=fr, f=zero, g1=e1,
                   g2=basis_vector(other, 1))
    with pytest.raises(ValueError, match="zero"):
        SystemSpec(frame=fr, f=zero, g1=zero, g2=zero)
    with pytest.raises(ValueError, match="box"):
        SystemSpec(frame=fr, f=zero, g1=e1, g2=basis_vector(fr, 1),
                   box=((1.0, -1.0), (0.0, 1.0)))


def test_bound_params_deterministic_and_complete():
    spec = systems.motor(params={"J": 0.1})
    b1, b2 = spec.bound_params(seed=5), spec.bound_params(seed=5)
    assert b1 == b2
    assert b1["J"] == 0.1
    assert set(b1) == set(spec.frame.params)
    assert all(0.5 <= v <= 1.5 for k, v in b1.items() if k != "J")


def test_sample_box_default_unit_cube(example1_spec):
    assert example1_spec.sample_box() == ((-1.0, 1.0),) * 4
