import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nddestab.expr import (Binary, Const, DivisionByZero, ExprError,
                           ParseError, ScalarExpr, Unary, Var, WrongVariable,
                           constant_value, lipschitz_estimate, parse, sup_abs)

ROUND_TRIP = [
    "0.1*sin(t)",
    "0.1*cos(t)",
    "-16",
    "0.3/(1+exp(-t))",
    "0.2*abs(sin(t))",
    "0.125*sin(t)^3",
    "0.999*cos(t)*sin(2*t)",
    "0.2*tanh(2*x)",
    "arctan(0.4*x)",
    "satlin(x)",
    "0.575*t-0.5",
    "t^2-3*t+1",
    "x^-2",
    "(t+1)*(t-1)",
    "1/(1+t)",
    "2*pi*t",
    "-(t+1)",
    "t-(1-t)",
    "t/(2/t)",
]


@pytest.mark.parametrize("text", ROUND_TRIP)
def test_round_trip(text):
    e = parse(text)
    again = parse(str(e))
    assert again.root == e.root


def test_evaluate_basics():
    assert parse("2+3*4").evaluate(0.0) == 14.0
    assert parse("2^3").evaluate(0.0) == 8.0
    assert parse("2**3").evaluate(0.0) == 8.0
    assert parse("t^-2").evaluate(2.0, var="t") == 0.25
    assert parse("satlin(x)").evaluate(0.5, var="x") == 0.5
    assert parse("satlin(x)").evaluate(3.0, var="x") == 1.0
    assert parse("satlin(x)").evaluate(-3.0, var="x") == -1.0
    assert parse("arctan(x)").evaluate(1.0, var="x") == pytest.approx(
        math.pi / 4)
    assert parse("pi").evaluate(0.0) == pytest.approx(math.pi)


def test_evaluate_arrays():
    e = parse("sin(t)^2")
    ts = np.linspace(0, 2 * np.pi, 11)
    out = e.evaluate(ts, var="t")
    assert out.shape == ts.shape
    assert np.allclose(out, np.sin(ts) ** 2)


def test_variable_binding():
    e = parse("sin(t)")
    assert e.variable == "t"
    with pytest.raises(WrongVariable):
        e.evaluate(1.0, var="x")
    with pytest.raises(WrongVariable):
        e.evaluate(1.0, var="z")
    # constants accept any binding
    assert parse("3").evaluate(1.0, var="x") == 3.0


def test_mixed_variables_rejected():
    with pytest.raises(ExprError):
        parse("t+x")


@pytest.mark.parametrize("bad", ["sin(", "2+", "unknownfn(1)", "sin 2",
                                 "2^t", "2^1.5", "(1", "1)", "$", "", "1 2"])
def test_parse_errors(bad):
    with pytest.raises(ParseError) as err:
        parse(bad)
    assert err.value.offset >= 0


def test_parse_error_offset():
    with pytest.raises(ParseError) as err:
        parse("1+zzz")
    assert err.value.offset == 2


def test_division_by_zero():
    with pytest.raises(DivisionByZero):
        parse("1/t").evaluate(0.0, var="t")
    with pytest.raises(DivisionByZero):
        parse("t^-1").evaluate(0.0, var="t")
    assert parse("1/t").evaluate(2.0, var="t") == 0.5


def test_constant_value():
    assert constant_value(parse("2*pi")) == pytest.approx(2 * math.pi)
    assert constant_value(parse("-16")) == -16.0
    assert constant_value(parse("t")) is None


def test_sup_abs_values():
    assert sup_abs(parse("2.5"), 0.0, 10.0, 1e-3) == 2.5
    assert sup_abs(parse("0.1*sin(t)"), 0.0, 10.0, 1e-3) == pytest.approx(
        0.1, abs=1e-9)
    # max of |cos t sin 2t| is 4/(3 sqrt 3)
    target = 0.999 * 4.0 / (3.0 * math.sqrt(3.0))
    got = sup_abs(parse("0.999*cos(t)*sin(2*t)"), 0.0, 100.0, 1e-3)
    assert got == pytest.approx(target, abs=1e-7)


def test_sup_abs_refinement_monotone():
    e = parse("sin(3*t)+0.5*cos(7*t)")
    coarse = sup_abs(e, 0.0, 20.0, 1e-1)
    fine = sup_abs(e, 0.0, 20.0, 1e-3)
    assert fine >= coarse - 1e-12
    assert coarse <= fine + 1e-6  # refinement already near the sup


def test_sup_abs_validation():
    with pytest.raises(ValueError):
        sup_abs(parse("t"), 1.0, 0.0, 1e-3)
    with pytest.raises(ValueError):
        sup_abs(parse("t"), 0.0, 1.0, 0.0)


def test_lipschitz_estimate():
    assert lipschitz_estimate(parse("x"), -5, 5, 1e-3) == pytest.approx(1.0)
    assert lipschitz_estimate(parse("0.6*x"), -5, 5, 1e-3) == pytest.approx(
        0.6)
    assert lipschitz_estimate(parse("0.2*tanh(2*x)"), -5, 5, 1e-3) == \
        pytest.approx(0.4, abs=1e-4)
    assert lipschitz_estimate(parse("satlin(x)"), -5, 5, 1e-3) == \
        pytest.approx(1.0, abs=1e-9)


# random expression trees over t with nonnegative constants

def _consts():
    return st.one_of(
        st.integers(min_value=0, max_value=9).map(float),
        st.floats(min_value=0.0, max_value=100.0, allow_nan=False,
                  allow_infinity=False, width=32).map(float))


def _trees():
    leaves = st.one_of(_consts().map(Const), st.just(Var("t")))

    def extend(children):
        unary = st.builds(Unary,
                          st.sampled_from(("neg", "abs", "sin", "cos",
                                           "tanh", "arctan", "exp",
                                           "satlin")),
                          children)
        binary = st.builds(Binary, st.sampled_from(("+", "-", "*", "/")),
                           children, children)
        power = st.builds(
            lambda b, k: Binary("pow", b, Const(float(k))),
            children, st.integers(min_value=-3, max_value=4))
        return st.one_of(unary, binary, power)

    return st.recursive(leaves, extend, max_leaves=12)


@given(_trees())
@settings(max_examples=200, deadline=None)
def test_round_trip_random_trees(root):
    e = ScalarExpr(root)
    assert parse(str(e)).root == root
