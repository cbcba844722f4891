import numpy as np
import pytest

from hopflax.convex_calculus import estimate_semiconcavity
from hopflax.exceptions import HypothesisError, InputError
from hopflax.hopflax_core import Problem, value_batch
from hopflax.regularity import (
    RegularityParams,
    differentiability_strip,
    estimate_params,
    injectivity_time,
    is_differentiable_at,
    semiconvexity_bound,
    semiconvexity_observed,
    strip_hypotheses,
)
from hopflax.ScalarFunction import ScalarFunction


def f(source):
    return ScalarFunction.from_expression(source)


@pytest.fixture(scope="module")
def cosine_data():
    return Problem(f("0.5*p^2"), f("cos(x)"), 2.0)


@pytest.fixture(scope="module")
def concave_data():
    return Problem(f("0.5*p^2"), f("-abs(x)"), 1.0)


@pytest.fixture(scope="module")
def convex_data():
    # u(t, x) = x^2 / 2t inside |x| <= t, |x| - t/2 outside
    return Problem(f("0.5*p^2"), f("abs(x)"), 1.0)


# =================================================================================================
# Tests for `semiconvexity_bound`
# =================================================================================================

def test_semiconvexity_bound():
    assert semiconvexity_bound(RegularityParams(1.0, 1.0, 2.0)).t_star == 1.0
    assert semiconvexity_bound(RegularityParams(0.5, 2.0, 3.0)).t_star == 0.25
    assert semiconvexity_bound(RegularityParams(1.0, 0.0, 2.0)).t_star == 2.0
    assert semiconvexity_bound(RegularityParams(4.0, 1.0, 2.0)).t_star == 2.0
    assert semiconvexity_bound(RegularityParams(1.0, np.inf, 2.0)).t_star == 0.0


def test_semiconvexity_bound_constant():
    bound = semiconvexity_bound(RegularityParams(1.0, 1.0, 2.0), t0=0.5)
    assert bound.constant == pytest.approx(2.0)
    assert bound.gamma == pytest.approx(2.0)
    assert semiconvexity_bound(RegularityParams(1.0, 0.0, 2.0), t0=0.5).constant == 0.0
    assert np.isinf(semiconvexity_bound(RegularityParams(1.0, 1.0, 2.0), t0=1.5).constant)


def test_semiconvexity_bound_errors():
    with pytest.raises(HypothesisError):
        semiconvexity_bound(RegularityParams(0.0, 1.0, 2.0))
    with pytest.raises(InputError):
        RegularityParams(1.0, -1.0, 2.0)
    with pytest.raises(InputError):
        RegularityParams(1.0, 1.0, 0.0)
    with pytest.raises(InputError):
        semiconvexity_bound(RegularityParams(1.0, 1.0, 2.0), t0=3.0)


def test_estimate_params(cosine_data):
    params = estimate_params(cosine_data, (-2, 2))
    assert params.theta == pytest.approx(1.0, abs=1e-3)
    assert params.B == pytest.approx(1.0, abs=1e-3)
    assert params.T == 2.0


def test_semiconvexity_observed(cosine_data):
    observed = semiconvexity_observed(cosine_data, 0.5, (-2, 2))
    assert 1.5 <= observed <= 2.02


# =================================================================================================
# Tests for differentiability
# =================================================================================================

def test_is_differentiable_at(concave_data):
    verdict, minimizers = is_differentiable_at(concave_data, 1.0, 0.0)
    assert not verdict
    assert len(minimizers) == 2
    verdict, _ = is_differentiable_at(concave_data, 1.0, 0.5)
    assert verdict


def test_differentiability_strip(cosine_data):
    report = differentiability_strip(cosine_data, np.linspace(0.25, 2.0, 8), (-2, 2), 65)
    np.testing.assert_array_equal(report.verdicts, [True] * 4 + [False] * 4)
    assert report.t_star_numeric == 1.0
    assert report.t_star_bound == pytest.approx(1.0, abs=1e-3)
    t, x, minimizers = report.first_failure
    assert t == 1.25
    np.testing.assert_allclose(x, [0.0], atol=1e-12)
    assert len(minimizers) == 2
    assert report.hypotheses.corollary
    data = report.to_dict()
    assert data["witnesses"][0]["t"] == 1.25


def test_differentiability_strip_no_strip(concave_data):
    report = differentiability_strip(concave_data, [0.5, 1.0], (-1, 1), 9)
    assert report.t_star_numeric == 0.0
    assert report.t_star_bound == 0.0
    assert not report.hypotheses.sigma_c1


def test_injectivity_time(cosine_data, concave_data):
    assert injectivity_time(cosine_data, (-2, 2), np.linspace(0.25, 2.0, 8)) == 1.0
    assert injectivity_time(concave_data, (-2, 2)) is None


def test_strip_hypotheses(cosine_data, concave_data):
    hypotheses = strip_hypotheses(cosine_data, (-2, 2))
    assert hypotheses.sigma_c1
    assert hypotheses.sigma_lipschitz
    assert hypotheses.h_uniformly_convex
    assert hypotheses.h_semiconcave
    assert hypotheses.sigma_semiconvex
    assert hypotheses.corollary
    assert hypotheses.to_dict()["plane_theorem"] is True

    kinked = strip_hypotheses(concave_data, (-2, 2))
    assert not kinked.sigma_c1
    assert not kinked.sigma_semiconvex
    assert not kinked.corollary


def test_strip_window_check(cosine_data):
    with pytest.raises(InputError):
        differentiability_strip(cosine_data, [1.0], (1, -1))


def test_differentiability_strip_full_horizon(convex_data):
    times = np.linspace(1.0 / 33, 1.0, 33)
    report = differentiability_strip(convex_data, times, (-2, 2), 256)
    assert report.verdicts.shape == (33,)
    assert report.verdicts.all()
    assert report.t_star_numeric == 1.0
    assert report.witnesses == []
    rng = np.random.default_rng(8)
    for t, x in zip(rng.choice(times, size=10), rng.choice(np.linspace(-2, 2, 256), size=10)):
        assert is_differentiable_at(convex_data, t, x)[0]


# =================================================================================================
# Tests for semiconcavity of the solution
# =================================================================================================

@pytest.mark.parametrize("t", [0.5, 1.0])
def test_solution_is_semiconcave_in_space(convex_data, t):
    # sigma = |x| is not semiconcave, u(t, .) is with constant 1/t
    x = np.linspace(-2.0, 2.0, 257)
    snapshot = ScalarFunction.from_grid(x, value_batch(convex_data, t, x))
    assert np.isinf(estimate_semiconcavity(convex_data.initial_data, (-2, 2)))
    assert estimate_semiconcavity(snapshot, (-2, 2)) == pytest.approx(1.0 / t, rel=1e-3)
