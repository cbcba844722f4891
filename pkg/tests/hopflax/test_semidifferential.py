import numpy as np
import pytest

from hopflax.exceptions import InputError, OutOfRangeError, UnsupportedInputError
from hopflax.ScalarFunction import ScalarFunction
from hopflax.semidifferential import (
    DSharpSet,
    SemidiffSet,
    d_sharp,
    numeric_semidiff,
    one_dimensional_rule,
    semidiff_at,
)


def f(source):
    return ScalarFunction.from_expression(source)


# =================================================================================================
# Tests for `one_dimensional_rule`
# =================================================================================================

def test_rule_concave_kink():
    superdiff, subdiff = one_dimensional_rule(1.0, -1.0)
    assert (superdiff.lower, superdiff.upper) == (-1.0, 1.0)
    assert subdiff.empty


def test_rule_convex_kink():
    superdiff, subdiff = one_dimensional_rule(-1.0, 1.0)
    assert superdiff.empty
    assert (subdiff.lower, subdiff.upper) == (-1.0, 1.0)


def test_rule_differentiable():
    superdiff, subdiff = one_dimensional_rule(0.5, 0.5)
    assert superdiff.is_singleton and subdiff.is_singleton
    assert superdiff.lower == subdiff.lower == 0.5


def test_rule_undefined_derivative():
    superdiff, subdiff = one_dimensional_rule(np.nan, 1.0)
    assert superdiff.empty and subdiff.empty


# =================================================================================================
# Tests for `semidiff_at` and `d_sharp`
# =================================================================================================

def test_semidiff_of_negative_abs():
    superdiff, subdiff = semidiff_at(f("-abs(x)"), 0.0)
    assert superdiff.bounds == ((-1.0, 1.0),)
    assert subdiff.empty
    assert repr(superdiff) == "D+=[-1.0, 1.0]"
    assert repr(subdiff) == "D-=empty"


def test_semidiff_of_abs():
    superdiff, subdiff = semidiff_at(f("abs(x)"), 0.0)
    assert superdiff.empty
    assert subdiff.bounds == ((-1.0, 1.0),)


def test_semidiff_smooth_point():
    superdiff, subdiff = semidiff_at(f("x^2"), 1.0)
    assert superdiff.bounds == subdiff.bounds == ((2.0, 2.0),)
    assert repr(subdiff) == "D-={2.0}"


def test_semidiff_piecewise():
    g = ScalarFunction.from_pieces([1.0], ["0*x", "x - 1"])
    superdiff, subdiff = semidiff_at(g, 1.0)
    assert superdiff.empty
    assert subdiff.bounds == ((0.0, 1.0),)


def test_semidiff_two_variables():
    superdiff, subdiff = semidiff_at(f("abs(x1) + abs(x2)"), np.array([0.0, 0.0]))
    assert superdiff.empty
    assert subdiff.bounds == ((-1.0, 1.0), (-1.0, 1.0))
    assert len(subdiff.vertices) == 4


def test_semidiff_two_variables_not_separable():
    with pytest.raises(UnsupportedInputError):
        semidiff_at(f("abs(x1*x2)"), np.array([0.0, 0.0]))


def test_d_sharp_branches():
    sharp = d_sharp(f("-abs(x)"), 0.0)
    assert not sharp.fallback
    assert sharp.branch_of(0.5) == "super"
    assert sharp.branch_of(1.5) is None
    assert repr(sharp) == "D#=[-1.0, 1.0]"
    assert d_sharp(f("x^2"), 1.0).branch_of(2.0) == "sub"


def test_d_sharp_fallback():
    sharp = d_sharp(f("abs(x1) - abs(x2)"), np.array([0.0, 0.0]))
    assert sharp.fallback
    assert sharp.branch_of([0.0, 0.0]) == "fallback"
    assert sharp.branch_of([0.1, 0.0]) is None
    assert sharp.hull == ((0.0, 0.0), (0.0, 0.0))
    assert repr(sharp) == "D#={0}"


def test_d_sharp_fallback_from_sets():
    sharp = DSharpSet(SemidiffSet.empty_set("super"), SemidiffSet.empty_set("sub"))
    assert sharp.fallback
    assert sharp.contains(0.0)
    assert not sharp.contains(0.1)


def test_sum_rule_containment():
    # D+f(y) + D+g(y) is contained in D+(f + g)(y)
    rng = np.random.default_rng(7)
    for _ in range(200):
        a1, b1, a2, b2 = rng.uniform(-2, 2, size=4).tolist()
        fa = f(f"{a1!r}*abs(x) + {b1!r}*x")
        fb = f(f"{a2!r}*abs(x) + {b2!r}*x")
        total = f(f"{a1!r}*abs(x) + {b1!r}*x + {a2!r}*abs(x) + {b2!r}*x")
        sum_super = semidiff_at(fa, 0.0)[0] + semidiff_at(fb, 0.0)[0]
        total_super = semidiff_at(total, 0.0)[0]
        if sum_super.empty:
            continue
        assert not total_super.empty
        assert total_super.contains(sum_super.lower, 1e-9)
        assert total_super.contains(sum_super.upper, 1e-9)


# =================================================================================================
# Tests for `numeric_semidiff`
# =================================================================================================

def test_numeric_semidiff_kink():
    x = np.linspace(-1, 1, 201)
    grid = ScalarFunction.from_grid(x, -np.abs(x))
    superdiff, subdiff = numeric_semidiff(grid, 0.0, [0.04, 0.02, 0.01])
    assert superdiff.lower == pytest.approx(-1.0)
    assert superdiff.upper == pytest.approx(1.0)
    assert subdiff.empty
    assert superdiff.step == 0.01


def test_numeric_semidiff_smooth():
    x = np.linspace(-1, 1, 201)
    grid = ScalarFunction.from_grid(x, x**2)
    superdiff, subdiff = numeric_semidiff(grid, 0.3, [0.04, 0.02, 0.01])
    assert superdiff.is_singleton and subdiff.is_singleton
    assert subdiff.lower == pytest.approx(0.6, abs=1e-8)


def test_semidiff_at_grid_uses_quotients():
    x = np.linspace(-1, 1, 201)
    superdiff, subdiff = semidiff_at(ScalarFunction.from_grid(x, np.abs(x)), 0.0)
    assert superdiff.empty
    assert subdiff.lower == pytest.approx(-1.0)
    assert subdiff.upper == pytest.approx(1.0)


def test_numeric_semidiff_errors():
    x = np.linspace(-1, 1, 201)
    grid = ScalarFunction.from_grid(x, x**2)
    with pytest.raises(InputError):
        numeric_semidiff(grid, 0.0, [0.01, 0.02])
    with pytest.raises(InputError):
        numeric_semidiff(grid, 0.0, [])
    with pytest.raises(OutOfRangeError):
        numeric_semidiff(grid, 0.99, [0.04, 0.02])


def test_sum_rule_equality_with_smooth_term():
    # v smooth at y: D(u + v)(y) = Du(y) + {v'(y)}
    rng = np.random.default_rng(11)
    for _ in range(200):
        y0, left, right, c, d = rng.uniform(-2, 2, size=5).tolist()
        u = ScalarFunction.from_pieces(
            [y0], [f"{left!r}*(x - ({y0!r}))", f"{right!r}*(x - ({y0!r}))"]
        )
        smooth = f"{c!r}*x + {d!r}*x^2"
        total = ScalarFunction.from_pieces(
            [y0], [f"{left!r}*(x - ({y0!r})) + {smooth}", f"{right!r}*(x - ({y0!r})) + {smooth}"]
        )
        slope = c + 2 * d * y0
        for position, kind in ((0, "super"), (1, "sub")):
            expected = semidiff_at(u, y0)[position] + SemidiffSet.interval(kind, slope, slope)
            found = semidiff_at(total, y0)[position]
            assert found.empty == expected.empty
            if not found.empty:
                assert found.lower == pytest.approx(expected.lower, abs=1e-12)
                assert found.upper == pytest.approx(expected.upper, abs=1e-12)


def _random_polyline(rng, breakpoints):
    count = len(breakpoints) + 1
    slopes = (rng.uniform(0.1, 2.0, size=count) * rng.choice([-1.0, 1.0], size=count)).tolist()
    pieces = [f"{slopes[0]!r}*(x - ({breakpoints[0]!r}))"]
    level = 0.0
    for k in range(1, len(slopes)):
        start = breakpoints[k - 1]
        pieces.append(f"{level!r} + {slopes[k]!r}*(x - ({start!r}))")
        if k < len(breakpoints):
            level = level + slopes[k] * (breakpoints[k] - start)
    return ScalarFunction.from_pieces(breakpoints, pieces)


def test_minimum_rule():
    # 0 is in D- at every local minimizer
    rng = np.random.default_rng(5)
    x = np.arange(-300, 301) / 100.0
    found = 0
    for _ in range(50):
        g = _random_polyline(rng, [-2.0, -1.0, 0.0, 1.0, 2.0])
        values = g(x)
        minima = np.flatnonzero((values[1:-1] <= values[:-2]) & (values[1:-1] <= values[2:])) + 1
        for i in minima:
            subdiff = semidiff_at(g, x[i])[1]
            assert subdiff.contains(0.0), (x[i], subdiff)
            found += 1
    assert found > 0


def test_numeric_semidiff_oscillation():
    # quotients of x sin(1/x) at 0 alternate between 1 and -1
    x = np.arange(-10000, 10001) / 10000.0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(x == 0, 0.0, x * np.sin(1.0 / x))
    grid = ScalarFunction.from_grid(x, values)
    steps = [1.0 / (np.pi / 2 + np.pi * k) for k in (1, 2, 3)]
    superdiff, subdiff = numeric_semidiff(grid, 0.0, steps)
    assert superdiff.empty
    assert subdiff.empty
    assert DSharpSet(superdiff, subdiff).fallback
