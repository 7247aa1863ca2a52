import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from varmech import expr as ex


# ---------------------------------------------------------------------------
# parsing


def test_parse_free_vars_example():
    e = ex.parse("y_1^2/2 - z^2/2")
    assert ex.free_vars(e) == {"y_1", "z"}


def test_parse_product_node():
    e = ex.parse("sin(x)*p")
    assert isinstance(e, ex.BinOp) and e.op == "*"


def test_parse_double_caret_is_syntax_error():
    with pytest.raises(ex.ParseError) as err:
        ex.parse("2^^3")
    assert err.value.line == 1 and err.value.column == 3


def test_parse_unknown_function():
    with pytest.raises(ex.ParseError, match="unknown function"):
        ex.parse("tan(x)")


def test_parse_reports_line_and_column():
    with pytest.raises(ex.ParseError) as err:
        ex.parse("x +\n  (y * )")
    assert err.value.line == 2


def test_parse_trailing_garbage():
    with pytest.raises(ex.ParseError):
        ex.parse("x + 1) * 2")


def test_parse_non_constant_exponent_rejected():
    with pytest.raises(ex.ParseError, match="constant"):
        ex.parse("x^y")


def test_parse_constant_expression_exponent():
    e = ex.parse("x^(1 + 1)")
    assert e == ex.pow_(ex.sym("x"), 2.0)


def test_parse_precedence_and_unary():
    assert ex.evaluate(ex.parse("-2^2"), {}) == -4.0
    assert ex.evaluate(ex.parse("2 - 3 - 4"), {}) == -5.0
    assert ex.evaluate(ex.parse("12 / 2 / 3"), {}) == 2.0
    assert ex.evaluate(ex.parse("2 + 3 * 4"), {}) == 14.0


_names = hs.sampled_from(["x", "y_1", "q2", "alpha", "xd12"])
_leaf = hs.one_of(
    hs.floats(min_value=-100, max_value=100, allow_nan=False).map(ex.num),
    _names.map(ex.sym),
)
_exprs = hs.recursive(
    _leaf,
    lambda ch: hs.one_of(
        hs.tuples(ch, ch).map(lambda t: ex.add(*t)),
        hs.tuples(ch, ch).map(lambda t: ex.sub(*t)),
        hs.tuples(ch, ch).map(lambda t: ex.mul(*t)),
        hs.tuples(ch, ch).map(lambda t: ex.div(*t)),
        ch.map(ex.neg),
        hs.tuples(ch, hs.sampled_from([2.0, 3.0, 0.5, -1.0, -2.0])).map(lambda t: ex.pow_(*t)),
        hs.tuples(hs.sampled_from(list(ex.UNARY_FUNCTIONS)), ch).map(lambda t: ex.call(*t)),
    ),
    max_leaves=25,
)


@settings(max_examples=300, deadline=None)
@given(_exprs)
def test_serialize_parse_round_trip(e):
    assert ex.parse(ex.serialize(e)) == e


# ---------------------------------------------------------------------------
# evaluation


def test_eval_examples():
    assert ex.evaluate(ex.parse("y^2/2"), {"y": 3}) == 4.5
    assert ex.evaluate(ex.parse("sqrt(x)"), {"x": 0}) == 0.0


def test_eval_division_by_zero():
    with pytest.raises(ex.EvalError, match="division by zero"):
        ex.evaluate(ex.parse("1/x"), {"x": 0})


def test_eval_reports_offending_subexpression():
    with pytest.raises(ex.EvalError, match=r"log"):
        ex.evaluate(ex.parse("1 + log(x - 2)"), {"x": 1})


def test_eval_unbound_variable():
    with pytest.raises(ex.EvalError, match="unbound variable 'z'"):
        ex.evaluate(ex.parse("z + 1"), {})


def test_eval_negative_base_non_integer_power():
    with pytest.raises(ex.EvalError, match="non-integer exponent"):
        ex.evaluate(ex.parse("x^0.5"), {"x": -2})
    assert ex.evaluate(ex.parse("x^3"), {"x": -2}) == -8.0


def test_eval_deterministic_bit_for_bit():
    e = ex.parse("sin(x)*exp(y) - sqrt(1 + x^2)/(3 + cos(y))")
    a = ex.evaluate(e, {"x": 0.7310585786300049, "y": -1.2})
    b = ex.evaluate(e, {"x": 0.7310585786300049, "y": -1.2})
    assert a == b


def test_compile_matches_evaluate():
    e = ex.parse("sin(x)*p + sqrt(1 + x^2) - p/(2 + cos(x))")
    f = ex.compile_expr(e, ["x", "p"])
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, p = rng.uniform(-2, 2, 2)
        assert math.isclose(float(f([x, p])), ex.evaluate(e, {"x": x, "p": p}), rel_tol=1e-15)


def test_compile_vectorized():
    e = ex.parse("x^2 + y")
    f = ex.compile_expr(e, ["x", "y"])
    out = f([np.array([1.0, 2.0]), np.array([10.0, 20.0])])
    assert np.allclose(out, [11.0, 24.0])


# ---------------------------------------------------------------------------
# differentiation


def _fd(e, name, point, h=1e-5):
    up = dict(point)
    dn = dict(point)
    up[name] += h
    dn[name] -= h
    return (ex.evaluate(e, up) - ex.evaluate(e, dn)) / (2 * h)


def test_diff_simple_cases():
    y = {"y": 1.7}
    assert ex.evaluate(ex.diff(ex.parse("y^2/2"), "y"), y) == pytest.approx(1.7, rel=1e-12)
    d = ex.diff(ex.parse("sin(x)*p"), "x")
    pt = {"x": 0.3, "p": 2.0}
    assert ex.evaluate(d, pt) == pytest.approx(math.cos(0.3) * 2.0, rel=1e-12)


def test_diff_sqrt_matches_finite_difference():
    e = ex.parse("sqrt(u)")
    d = ex.diff(e, "u")
    assert ex.evaluate(d, {"u": 4.0}) == pytest.approx(0.25, rel=1e-12)
    assert ex.evaluate(d, {"u": 4.0}) == pytest.approx(_fd(e, "u", {"u": 4.0}), rel=1e-6)


def test_diff_abs_at_zero_is_zero():
    d = ex.diff(ex.parse("abs(x)"), "x")
    assert ex.evaluate(d, {"x": 0.0}) == 0.0
    assert ex.evaluate(d, {"x": -2.0}) == -1.0


def _random_safe_expr(rng: np.random.Generator, names: list[str], depth: int) -> ex.Expr:
    """Random expression whose domain contains [-2, 2]^dim."""
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.6:
            return ex.sym(str(rng.choice(names)))
        return ex.num(float(rng.uniform(-2, 2)))
    op = rng.choice(["add", "sub", "mul", "sin", "cos", "exp_s", "sqrt_s", "log_s", "pow2", "div_s"])
    a = _random_safe_expr(rng, names, depth - 1)
    b = _random_safe_expr(rng, names, depth - 1)
    if op == "add":
        return ex.add(a, b)
    if op == "sub":
        return ex.sub(a, b)
    if op == "mul":
        return ex.mul(a, b)
    if op == "sin":
        return ex.call("sin", a)
    if op == "cos":
        return ex.call("cos", a)
    if op == "exp_s":
        return ex.call("exp", ex.mul(ex.num(0.3), a))
    if op == "sqrt_s":
        return ex.call("sqrt", ex.add(ex.num(1.0), ex.pow_(a, 2.0)))
    if op == "log_s":
        return ex.call("log", ex.add(ex.num(2.0), ex.call("sin", a)))
    if op == "pow2":
        return ex.pow_(a, 2.0)
    return ex.div(a, ex.add(ex.num(5.0), ex.pow_(b, 2.0)))


def test_diff_matches_central_differences_at_random_points():
    rng = np.random.default_rng(42)
    names = ["x", "y", "z"]
    for _ in range(100):
        e = _random_safe_expr(rng, names, 4)
        used = sorted(ex.free_vars(e))
        if not used:
            continue
        v = str(rng.choice(used))
        d = ex.diff(e, v)
        pt = {n: float(rng.uniform(-2, 2)) for n in names}
        fd = _fd(e, v, pt)
        sym = ex.evaluate(d, pt)
        assert abs(sym - fd) <= 1e-6 * max(1.0, abs(fd)), ex.serialize(e)


def test_diff_linearity():
    rng = np.random.default_rng(1)
    e1 = ex.parse("sin(x)*y + x^3")
    e2 = ex.parse("exp(0.5*x) - y^2")
    a = 2.75
    lhs = ex.diff(ex.add(ex.mul(ex.num(a), e1), e2), "x")
    rhs = ex.add(ex.mul(ex.num(a), ex.diff(e1, "x")), ex.diff(e2, "x"))
    for _ in range(100):
        pt = {"x": float(rng.uniform(-2, 2)), "y": float(rng.uniform(-2, 2))}
        assert ex.evaluate(lhs, pt) == pytest.approx(ex.evaluate(rhs, pt), abs=1e-12)


def test_subst():
    e = ex.parse("y_1^2 + x")
    s = ex.subst(e, {"y_1": ex.parse("q_1/2")})
    assert ex.evaluate(s, {"q_1": 4.0, "x": 1.0}) == 5.0


# ---------------------------------------------------------------------------
# charts and the total derivative


def test_total_derivative_defining_rule():
    ch = ex.qjet_chart(1, 3)
    assert ex.total_derivative(ex.parse("q_1"), ch, 1) == ex.sym("q_2")


def test_total_derivative_chain_rule():
    ch = ex.qjet_chart(1, 3)
    d = ex.total_derivative(ex.parse("q_0^2"), ch, 1)
    pt = {"q_0": 1.3, "q_1": -0.7}
    assert ex.evaluate(d, pt) == pytest.approx(2 * 1.3 * -0.7, rel=1e-12)


def test_total_derivative_shallow_chart():
    ch = ex.qjet_chart(1, 2)
    with pytest.raises(ex.ChartError, match="too shallow"):
        ex.total_derivative(ex.parse("q_2"), ch, 1)


def test_total_derivative_commutation_identity():
    """D(d e/dx) = d(D e)/dx - sum_v (d e/dv) (d tderiv_v/dx) on a chart with
    an x-dependent time derivative."""
    variables = [
        ex.JetVar("x", "x", 0, 0, 0),
        ex.JetVar("y_1", "y", 0, 1, 1),
        ex.JetVar("y_2", "y", 0, 2, 2),
    ]
    tderiv = {"x": ex.parse("x*y_1"), "y_1": ex.parse("2*y_2")}
    ch = ex.Chart(variables, ex.YGRADED, tderiv)
    e = ex.parse("sin(x)*y_1^2 + x^2*y_1")
    lhs = ex.total_derivative(ex.diff(e, "x"), ch, 1)
    correction = ex.add_all(
        ex.mul(ex.diff(e, v), ex.diff(ch.tderiv(v), "x")) for v in sorted(ex.free_vars(e)))
    rhs = ex.sub(ex.diff(ex.total_derivative(e, ch, 1), "x"), correction)
    rng = np.random.default_rng(5)
    for _ in range(100):
        pt = {n: float(rng.uniform(-1, 1)) for n in ("x", "y_1", "y_2")}
        assert ex.evaluate(lhs, pt) == pytest.approx(ex.evaluate(rhs, pt), abs=1e-9)


def test_chart_duplicate_names_rejected():
    v = ex.JetVar("x", "x", 0, 0, 0)
    with pytest.raises(ex.ChartError, match="duplicate"):
        ex.Chart([v, v], ex.QJET, {})


# ---------------------------------------------------------------------------
# homogeneity


def _weight_chart(weights: dict[str, int]) -> ex.Chart:
    return ex.Chart(
        [ex.JetVar(n, n, 0, 0, w) for n, w in sorted(weights.items())], "weights", {})


def test_homogeneity_quadratic_degree_two():
    e = ex.parse("xd12^2 + xd13^2 + xd23^2")
    ch = _weight_chart({"xd12": 1, "xd13": 1, "xd23": 1})
    assert ex.check_homogeneity(e, ch, 2)
    assert not ex.check_homogeneity(e, ch, 1)


def test_homogeneity_area_lagrangian_degree_one():
    e = ex.parse("sqrt(xd12^2 + xd13^2 + xd23^2)")
    ch = _weight_chart({"xd12": 1, "xd13": 1, "xd23": 1})
    assert ex.check_homogeneity(e, ch, 1)


def test_homogeneity_mixed_weights():
    e = ex.parse("y_1^2 + y_2")
    ch = _weight_chart({"y_1": 1, "y_2": 2})
    assert ex.check_homogeneity(e, ch, 2)


def test_homogeneity_counterexample():
    e = ex.parse("y_1^2 + y_1")
    ch = _weight_chart({"y_1": 1})
    assert not ex.check_homogeneity(e, ch, 2)


# ---------------------------------------------------------------------------
# rendering


def test_latex_basic():
    e = ex.parse("y_1^2/2 - sin(x)")
    s = ex.to_latex(e, {"y_1": "y_{1}"})
    assert r"\frac" in s and r"\sin" in s and "y_{1}" in s


def test_serialize_integers_compactly():
    assert ex.serialize(ex.parse("2.0*x")) == "2*x"
