import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intercurv.expr import (
    DomainError,
    ExprError,
    ExprSyntaxError,
    Jet2,
    UnknownIdentifierError,
    eval_jet2,
    parse,
)

VARS = ("x1", "x2", "x3")


# -- grammar-driven generator -------------------------------------------------

leaf = st.one_of(
    st.sampled_from(VARS),
    st.floats(-2, 2, allow_nan=False).map(lambda c: f"({c!r})"),
    st.just("pi"),
)


def _grow(children):
    # every wrapper keeps values in a moderate range on [-1, 1]^3
    unary = st.sampled_from(
        [
            "sin({})",
            "cos({})",
            "tanh({})",
            "exp(tanh({}))",
            "log(2+sin({}))",
            "sqrt(1+({})^2)",
            "cosh(tanh({}))",
            "sinh(tanh({}))",
            "coth(2+tanh({}))",
            "-({})",
            "({})^2",
            "(1+({})^2)^(-0.5)",
        ]
    )
    binary = st.sampled_from(["({})+({})", "({})-({})", "({})*({})", "({})/(2+cos({}))", "(2+sin({}))^(tanh({}))"])
    return st.one_of(
        st.tuples(unary, children).map(lambda t: t[0].format(t[1])),
        st.tuples(binary, children, children).map(lambda t: t[0].format(t[1], t[2])),
    )


expressions = st.recursive(leaf, _grow, max_leaves=8)
points = st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3).map(np.array)


def _close(a, b, rel=1e-6, atol=1e-8):
    scale = max(float(np.max(np.abs(b))), 1.0)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) <= max(rel * scale, atol)


@settings(max_examples=1000, deadline=None)
@given(expressions, points)
def test_jets_match_central_differences(src, x):
    e = parse(src, VARS)
    J = e.jet(x)
    h = 1e-5
    fd_grad = np.zeros(3)
    fd_hess = np.zeros((3, 3))
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        fd_grad[i] = (e(x + d) - e(x - d)) / (2 * h)
        fd_hess[i] = (e.jet(x + d).grad - e.jet(x - d).grad) / (2 * h)
    assert _close(J.grad, fd_grad), (src, J.grad, fd_grad)
    assert _close(J.hess, fd_hess), (src, J.hess, fd_hess)
    assert np.array_equal(J.hess, J.hess.T)


@settings(max_examples=200, deadline=None)
@given(expressions, expressions, points)
def test_sum_and_product_follow_jet_algebra(a, b, x):
    ja, jb = parse(a, VARS).jet(x), parse(b, VARS).jet(x)
    js = parse(f"({a})+({b})", VARS).jet(x)
    jp = parse(f"({a})*({b})", VARS).jet(x)
    s, p = ja + jb, ja * jb
    for got, want in ((js, s), (jp, p)):
        assert got.value == pytest.approx(want.value, rel=1e-15, abs=1e-300)
        np.testing.assert_allclose(got.grad, want.grad, rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(got.hess, want.hess, rtol=1e-13, atol=1e-13)


def test_batched_evaluation_matches_pointwise():
    e = parse("sin(x1)*exp(x2) + x3^3", VARS)
    pts = np.random.default_rng(0).uniform(-1, 1, (4, 5, 3))
    J = e.jet(pts)
    assert J.value.shape == (4, 5) and J.grad.shape == (4, 5, 3) and J.hess.shape == (4, 5, 3, 3)
    single = e.jet(pts[2, 3])
    np.testing.assert_array_equal(J.hess[2, 3], single.hess)


# -- worked examples ----------------------------------------------------------


def test_warp_function_at_origin():
    e = parse("2 + 0.5*sin(2*pi*x1)*cos(2*pi*x2)", ["x1", "x2"])
    assert e([0.0, 0.0]) == 2.0


def test_hyperbolic_identity():
    e = parse("cosh(r)^2 - sinh(r)^2", ["r"])
    assert float(e([1.7])) == pytest.approx(1.0, abs=1e-13)


def test_undeclared_variable():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x1^2 + x2", ["x1"])
    assert info.value.name == "x2"


def test_sin_jet_at_zero():
    J = parse("sin(x1)", ["x1"]).jet([0.0])
    assert float(J.value) == 0.0
    assert J.grad.tolist() == [1.0]
    assert J.hess.tolist() == [[0.0]]


def test_bilinear_jet():
    J = parse("x1*x2", ["x1", "x2"]).jet([3.0, 5.0])
    assert float(J.value) == 15.0
    assert J.grad.tolist() == [5.0, 3.0]
    assert J.hess.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_gaussian_profile_jet():
    e = parse("exp(r^2/2)", ["r"])
    J = e.jet([1.0])
    root = math.exp(0.5)
    assert float(J.value) == pytest.approx(root, rel=1e-15)
    assert float(J.grad[0]) == pytest.approx(root, rel=1e-15)
    assert float(J.hess[0, 0]) == pytest.approx(2 * root, rel=1e-15)
    h = 1e-5
    fd = (e([1 + h]) - 2 * e([1.0]) + e([1 - h])) / h**2
    assert float(fd) == pytest.approx(2 * root, rel=1e-4)
    fd1 = (e([1 + h]) - e([1 - h])) / (2 * h)
    assert float(fd1) == pytest.approx(root, rel=1e-7)


def test_precedence_rules():
    e = parse("-x^2 + 2^3^2 - 8/2/2", ["x"])
    assert float(e([3.0])) == pytest.approx(-9 + 512 - 2, rel=1e-14)
    assert float(parse("2*pi", [])(np.zeros(0))) == pytest.approx(2 * math.pi)


def test_scientific_notation():
    assert float(parse("1.5e-3*x + .5", ["x"])([2.0])) == pytest.approx(0.503)


# -- errors ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "src, pos",
    [("1 + * 2", 4), ("sin(x", 5), ("x $ 2", 2), ("(x))", 3)],
)
def test_syntax_errors_report_position(src, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src, ["x"])
    assert info.value.position == pos


def test_empty_expression():
    with pytest.raises(ExprSyntaxError):
        parse("  ", ["x"])


def test_function_needs_call_syntax():
    with pytest.raises(ExprError):
        parse("sin + 1", ["x"])


def test_bad_variable_names():
    with pytest.raises(ExprError):
        parse("x", ["x", "x"])
    with pytest.raises(ExprError):
        parse("sin(1)", ["sin"])


@pytest.mark.parametrize(
    "src, x",
    [("log(x)", 0.0), ("sqrt(x)", -1.0), ("coth(x)", 0.0), ("1/x", 0.0), ("x^x", -1.0)],
)
def test_domain_errors_are_hard(src, x):
    e = parse(src, ["x"])
    with pytest.raises(DomainError):
        e([x])


def test_domain_error_anywhere_in_batch():
    e = parse("log(x)", ["x"])
    with pytest.raises(DomainError):
        e(np.array([[1.0], [2.0], [-1.0]]))


def test_point_shape_checked():
    with pytest.raises(ExprError):
        parse("x1", ["x1", "x2"]).jet([1.0])


def test_free_variables():
    e = parse("2 + sin(2*pi*x1)", ["x1", "x2", "x3"])
    assert e.free_variables() == ("x1",)


def test_constant_jet_shapes():
    J = Jet2.constant(3.0, 2, (4,))
    assert J.value.shape == (4,) and J.grad.shape == (4, 2) and J.hess.shape == (4, 2, 2)


def test_eval_jet2_is_the_method():
    e = parse("x*y", ["x", "y"])
    a, b = eval_jet2(e, [2.0, 3.0]), e.jet([2.0, 3.0])
    assert np.array_equal(a.hess, b.hess)
