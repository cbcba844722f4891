"""
Tests for the expression grammar: tokenizer, parser, printer and the exact derivatives.
"""

import numpy as np
import pytest

from hopflax.exceptions import ExpressionSyntaxError, UnsupportedInputError
from hopflax.expression import (
    BinaryOp,
    NAry,
    Number,
    UnaryOp,
    Variable,
    directional_derivative,
    evaluate,
    free_variables,
    kink_candidates,
    parse_expression,
    print_expression,
    split_separable,
    tokenize,
)
from hopflax.ScalarFunction import ScalarFunction


def value(source, x=0.0):
    return float(evaluate(parse_expression(source), {"x": np.float64(x)}))


# =================================================================================================
# Tokenizer and parser
# =================================================================================================

def test_tokenize_ends_with_marker():
    tokens = tokenize("abs(x) + 1.5e-1")
    assert [t.kind for t in tokens] == ["NAME", "OP", "NAME", "OP", "OP", "NUMBER", "END"]
    assert tokens[-1].position == len("abs(x) + 1.5e-1")


def test_tokenize_inf_is_a_number():
    assert tokenize("inf")[0].kind == "NUMBER"


def test_precedence():
    assert value("1 + 2 * 3") == 7
    assert value("2 * 3^2") == 18
    assert value("1 - 2 - 3") == -4
    assert value("8 / 4 / 2") == 1
    assert value("-2^2") == -4
    assert value("(1 + 2) * 3") == 9
    assert value("-x^2", 3.0) == -9


def test_negative_and_rational_exponents():
    assert value("x^-1", 4.0) == pytest.approx(0.25)
    assert value("x^(1/2)", 9.0) == pytest.approx(3.0)
    assert value("x^(1/3)", -8.0) == pytest.approx(-2.0)


def test_functions():
    assert value("abs(x)", -3.0) == 3
    assert value("max(x, 1, -x)", -4.0) == 4
    assert value("min(x, 1)", 4.0) == 1
    assert value("sqrt(x)", 16.0) == 4
    assert value("cos(x)", 0.0) == 1


def test_parse_tree():
    ast = parse_expression("0.5 * x - 1")
    assert ast == BinaryOp("-", BinaryOp("*", Number(0.5), Variable("x")), Number(1.0))
    expected = NAry("max", (Variable("x"), UnaryOp("neg", Variable("x"))))
    assert parse_expression("max(x, -x)") == expected


def test_piecewise():
    source = "piecewise([-inf, 0] -> -x, [0, inf] -> x)"
    assert value(source, -2.0) == 2
    assert value(source, 3.0) == 3


def test_max_of_branches_equals_abs():
    x = np.linspace(-3, 3, 1001)
    left = evaluate(parse_expression("max(x, -x) + 0.5"), {"x": x})
    right = evaluate(parse_expression("abs(x) + 0.5"), {"x": x})
    np.testing.assert_array_equal(left, right)


# =================================================================================================
# Syntax errors
# =================================================================================================

@pytest.mark.parametrize(
    "source,column,message",
    [
        ("x + $", 5, "unknown token"),
        ("x + foo", 5, "unknown token"),
        ("abs(x, 1)", 1, "arity mismatch"),
        ("max(x)", 1, "arity mismatch"),
        ("x ^ x", 5, "non-constant exponent"),
        ("(x + 1", 7, "unbalanced parentheses"),
        ("x + 1)", 6, "unbalanced parentheses"),
    ],
)
def test_syntax_errors(source, column, message):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(source)
    assert info.value.line == 1
    assert info.value.column == column
    assert message in str(info.value)
    assert str(info.value).startswith(f"1:{column}:")


def test_syntax_error_line_and_column():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("x +\n  $")
    assert (info.value.line, info.value.column) == (2, 3)
    assert info.value.position == 6


def test_depth_limit():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("(" * 200 + "x" + ")" * 200)
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("-" * 300 + "x")


def test_fuzzed_input_parses_or_fails_with_position():
    rng = np.random.default_rng(0)
    alphabet = list("x p 0123456789.+-*/^(),[]e") + ["abs", "max(", "min(", "sin", "->", "$"]
    for _ in range(300):
        size = int(rng.integers(1, 4096 // 8))
        source = "".join(rng.choice(alphabet, size=size))[:4096]
        try:
            ast = parse_expression(source)
        except ExpressionSyntaxError as error:
            assert 0 <= error.position <= len(source)
            continue
        assert parse_expression(print_expression(ast)) == ast
        env = {name: np.float64(0.5) for name in free_variables(ast)}
        if len(env) <= 1:
            evaluate(ast, env)
    printable = "".join(chr(c) for c in rng.integers(32, 127, size=4096))
    with pytest.raises(ExpressionSyntaxError):
        parse_expression(printable + "$")


@pytest.mark.parametrize("op", ["+", "-", "*", "/"])
def test_long_operator_chain_fails_with_position(op):
    source = "x" + f"{op}x" * 2047
    assert len(source) == 4095
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(source)
    assert "nested too deeply" in str(info.value)
    assert 0 < info.value.position < len(source)


def test_power_chain_fails_with_position():
    source = "x" + "^1" * 2047
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(source)
    assert 0 < info.value.position < len(source)


def test_operator_chain_below_the_height_limit():
    source = "x" + "+x" * 150
    ast = parse_expression(source)
    assert value(source, 1.0) == 151
    assert parse_expression(print_expression(ast)) == ast
    assert ScalarFunction.from_expression(source, 1)(np.array([2.0]))[0] == 302


def test_nested_constant_powers_are_bounded():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("x^((((9^64)^64)^64)^64)")


def test_piecewise_guards():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("piecewise([0, 1] -> x, [2, 3] -> x)")
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("piecewise([1, 0] -> x)")


# =================================================================================================
# Printer
# =================================================================================================

def test_print_expression():
    assert print_expression(parse_expression("0.5*p^2")) == "0.5 * p^2"
    assert print_expression(parse_expression("-abs(x)")) == "-abs(x)"
    assert print_expression(parse_expression("(-x)^(1/3) - (x - 1)")) == "(-x)^(1/3) - (x - 1.0)"
    assert print_expression(parse_expression("x^-0.5 / (2 * x)")) == "x^-0.5 / (2.0 * x)"
    assert print_expression(parse_expression("-(x * x) + -x")) == "-(x * x) + -x"


def _random_source(rng, depth=0):
    if depth > 3 or rng.random() < 0.3:
        return rng.choice(["x", "1.5", "2", "0.25", "x"])
    kind = rng.integers(0, 6)
    a = _random_source(rng, depth + 1)
    b = _random_source(rng, depth + 1)
    if kind == 0:
        return f"{a} {rng.choice(['+', '-', '*'])} {b}"
    if kind == 1:
        return f"-({a})"
    if kind == 2:
        return f"({a})^{rng.choice(['2', '3', '(1/3)'])}"
    if kind == 3:
        return f"{rng.choice(['abs', 'sin', 'cos'])}({a})"
    if kind == 4:
        return f"{rng.choice(['min', 'max'])}({a}, {b})"
    return f"({a}) / ({b} + 10)"


def test_print_parse_fixed_point():
    rng = np.random.default_rng(42)
    x = np.linspace(-2, 2, 17)
    for _ in range(200):
        source = _random_source(rng)
        ast = parse_expression(source)
        printed = print_expression(ast)
        assert parse_expression(printed) == ast, source
        np.testing.assert_array_equal(
            evaluate(parse_expression(printed), {"x": x}), evaluate(ast, {"x": x})
        )


# =================================================================================================
# Structure
# =================================================================================================

def test_free_variables():
    assert free_variables(parse_expression("p1^2 + abs(p2) - 3")) == {"p1", "p2"}
    assert free_variables(parse_expression("2 + 3")) == frozenset()


def test_split_separable():
    parts = split_separable(parse_expression("p1^2 + abs(p2) - 3"), ("p1", "p2"))
    assert len(parts) == 2
    assert float(evaluate(parts[0], {"p1": 2.0})) == 1.0
    assert float(evaluate(parts[1], {"p2": -2.0})) == 2.0
    assert split_separable(parse_expression("p1 * p2"), ("p1", "p2")) is None


def test_piecewise_is_one_dimensional():
    ast = parse_expression("piecewise([-inf, inf] -> x)")
    with pytest.raises(UnsupportedInputError):
        evaluate(ast, {"x": 1.0, "y": 2.0})


# =================================================================================================
# Derivatives and kinks
# =================================================================================================

def test_directional_derivative_at_kinks():
    env = {"x": np.float64(0.0)}
    _, slope = directional_derivative(parse_expression("abs(x)"), env, {"x": -1.0})
    assert float(slope) == 1.0
    _, slope = directional_derivative(parse_expression("min(x, -x)"), env, {"x": 1.0})
    assert float(slope) == -1.0
    _, slope = directional_derivative(parse_expression("sqrt(abs(x))"), env, {"x": 1.0})
    assert np.isinf(slope)


def test_directional_derivative_smooth():
    v, slope = directional_derivative(parse_expression("x^3 + sin(x)"), {"x": 1.0}, {"x": 1.0})
    assert float(v) == pytest.approx(1.0 + np.sin(1.0))
    assert float(slope) == pytest.approx(3.0 + np.cos(1.0))


def test_kink_candidates():
    np.testing.assert_allclose(
        kink_candidates(parse_expression("abs(x - 1) + max(x, 0)"), "x", (-4, 4)), [0.0, 1.0]
    )
    assert len(kink_candidates(parse_expression("sqrt(x^2 + 1)"), "x", (-4, 4))) == 0
    np.testing.assert_allclose(
        kink_candidates(parse_expression("abs(sin(x))"), "x", (-4, 4)),
        [-np.pi, 0.0, np.pi],
        atol=1e-10,
    )
