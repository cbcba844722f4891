import numpy as np
import pandas as pd
import pytest

from hopflax.exceptions import (
    InputError,
    NotDifferentiableError,
    OutOfRangeError,
    UnsupportedInputError,
)
from hopflax.hopflax_core import Problem
from hopflax.ScalarFunction import ScalarFunction
from hopflax.viscosity_verify import (
    GridCandidate,
    check_viscosity_at,
    initial_trace,
    residual_at,
    verify_region,
)

T_NODES = np.linspace(0.5, 1.5, 21)
X_NODES = np.linspace(-1.0, 1.0, 41)


def f(source):
    return ScalarFunction.from_expression(source)


def candidate(function):
    return GridCandidate.from_function(function, T_NODES, X_NODES)


@pytest.fixture(scope="module")
def concave_data():
    return Problem(f("0.5*p^2"), f("-abs(x)"), 2.0)


# =================================================================================================
# Tests for the Hopf-Lax solution
# =================================================================================================

def test_residual_at(concave_data):
    assert residual_at(concave_data, 1.0, 0.5) <= 1e-7
    with pytest.raises(NotDifferentiableError):
        residual_at(concave_data, 1.0, 0.0)


def test_check_viscosity_at_kink(concave_data):
    verdict = check_viscosity_at(concave_data, 1.0, 0.0)
    assert verdict.passed
    assert verdict.sub_margin == pytest.approx(0.0, abs=1e-7)
    assert np.isinf(verdict.super_margin)
    assert verdict.witnesses == []


def test_check_viscosity_at_smooth_point(concave_data):
    verdict = check_viscosity_at(concave_data, 1.0, -0.7)
    assert verdict.passed
    assert verdict.residual_max <= 1e-7


def test_check_viscosity_rejects_concave_problem():
    prob = Problem(f("-0.5*p^2"), f("-abs(x)"), 1.0, concave=True)
    with pytest.raises(UnsupportedInputError):
        check_viscosity_at(prob, 1.0, 0.0)


def test_initial_trace(concave_data):
    trace = initial_trace(concave_data, np.linspace(-1, 1, 9))
    assert trace["times"] == [0.1, 0.01, 0.001]
    np.testing.assert_allclose(trace["sup_errors"], [0.05, 0.005, 0.0005], atol=1e-9)
    assert trace["monotone"]


@pytest.mark.parametrize("sigma", ["abs(x)", "cos(x)", "-abs(x)", "x"])
def test_initial_trace_decreases(sigma):
    prob = Problem(f("0.5*p^2"), f(sigma), 1.0)
    trace = initial_trace(prob, np.linspace(-2, 2, 17))
    errors = trace["sup_errors"]
    assert trace["monotone"]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    # |u(t, x) - sigma(x)| <= t * sup H(Dsigma) with |Dsigma| <= 1
    for t, error in zip(trace["times"], errors):
        assert error <= 0.5 * t + 1e-8


def test_verify_region(concave_data):
    verdict = verify_region(concave_data, (0.5, 1.0), (-1.0, 1.0), samples=(3, 9))
    assert verdict.passed
    assert verdict.residual_max <= 1e-6
    assert verdict.initial_trace["monotone"]
    assert verdict.to_dict()["witnesses"] == []


def test_verify_region_checks_bounds(concave_data):
    with pytest.raises(InputError):
        verify_region(concave_data, (0.0, 1.0), (-1.0, 1.0))
    with pytest.raises(InputError):
        verify_region(concave_data, (0.5, 3.0), (-1.0, 1.0))


# =================================================================================================
# Tests for grid candidates
# =================================================================================================

def test_grid_candidate_checks():
    with pytest.raises(InputError):
        GridCandidate(T_NODES, X_NODES, np.zeros((3, 3)))
    with pytest.raises(InputError):
        GridCandidate([0.5, 1.0, 2.0], [0.0, 1.0, 2.0], np.zeros((3, 3)))
    with pytest.raises(InputError):
        GridCandidate.from_frame(pd.DataFrame({"t": [1.0], "x": [0.0]}))


def test_grid_candidate_from_frame():
    t, x = np.meshgrid([0.5, 1.0, 1.5], [-1.0, 0.0, 1.0], indexing="ij")
    frame = pd.DataFrame({"t": t.ravel(), "x": x.ravel(), "value": (x - t).ravel()})
    grid = GridCandidate.from_frame(frame.sample(frac=1.0, random_state=3))
    np.testing.assert_allclose(grid.values, x - t)
    assert float(grid(0.75, 0.5)) == pytest.approx(-0.25)
    with pytest.raises(InputError):
        GridCandidate.from_frame(frame.iloc[1:])


def test_convex_kink_is_not_a_supersolution(concave_data):
    grid = candidate(lambda t, x: np.abs(x) - t / 2)
    verdict = check_viscosity_at(concave_data, 1.0, 0.0, candidate=grid)
    assert verdict.subsolution
    assert not verdict.supersolution
    assert verdict.super_margin == pytest.approx(-0.5, abs=1e-6)
    assert verdict.witnesses[0][-1] == "supersolution"


def test_concave_kink_passes(concave_data):
    grid = candidate(lambda t, x: -np.abs(x) - t / 2)
    verdict = check_viscosity_at(concave_data, 1.0, 0.0, candidate=grid)
    assert verdict.passed
    assert verdict.sub_margin == pytest.approx(0.0, abs=1e-6)
    assert np.isinf(verdict.super_margin)


def test_smooth_candidates(concave_data):
    exact = candidate(lambda t, x: x - t / 2)
    assert check_viscosity_at(concave_data, 1.0, 0.2, candidate=exact).passed
    wrong = candidate(lambda t, x: x - t)
    verdict = check_viscosity_at(concave_data, 1.0, 0.2, candidate=wrong)
    assert not verdict.passed
    assert verdict.witnesses[0][-1] == "residual"
    assert verdict.residual_max == pytest.approx(0.5, abs=1e-9)


def test_non_lipschitz_candidate_is_flagged(concave_data):
    grid = candidate(lambda t, x: np.sqrt(np.abs(x)))
    assert check_viscosity_at(concave_data, 1.0, 0.0, candidate=grid).unreliable


def test_candidate_near_edge(concave_data):
    grid = candidate(lambda t, x: x - t / 2)
    with pytest.raises(OutOfRangeError):
        check_viscosity_at(concave_data, 0.55, 0.0, candidate=grid)


def test_verify_region_candidate(concave_data):
    grid = candidate(lambda t, x: np.abs(x) - t / 2)
    verdict = verify_region(concave_data, (0.7, 1.3), (-0.5, 0.5), samples=(5, 33),
                            candidate=grid)
    assert verdict.subsolution
    assert not verdict.supersolution
    assert {w[-1] for w in verdict.witnesses} == {"supersolution"}
    assert verdict.initial_trace["times"] == pytest.approx([0.5, 0.55, 0.6])
