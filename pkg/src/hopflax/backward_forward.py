"""Backward solutions, the min-max reachability condition and the backward/forward round-trip.

For terminal data g at time T the backward solution is ``w(t, x) = max_y {g(y) - (T - t)
H*((y - x) / (T - t))}``, the max-form Hopf-Lax value of the concave Hamiltonian ``-H``. The
reachability condition

    g(x) = min_z max_y { g(y) - T H*((y - z) / T) + T H*((x - z) / T) }

is evaluated as two sweeps: the inner table ``w(0, .)`` on a lattice, then a forward Hopf-Lax
solve whose initial data is that table.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hopflax import hopflax_core as core
from hopflax.convex_calculus import estimate_semiconcavity, estimate_uniform_convexity
from hopflax.exceptions import OutOfRangeError, UnsupportedInputError
from hopflax.regularity import strip_hypotheses
from hopflax.ScalarFunction import ScalarFunction

logger = logging.getLogger(__name__)

SWEEP_TOLERANCE = 1e-6
BF_TOLERANCE = 10 * SWEEP_TOLERANCE
TABLE_STEP = 0.0025
ROUNDTRIP_TIMES = 8
ROUNDTRIP_NODES = 65
WITHIN = "within theorem hypotheses"
OUTSIDE = "outside theorem hypotheses"


@dataclass(eq=False)
class BFReport:
    """Verdict of the reachability condition on ``x_samples``.

    ``deviation`` is the signed profile ``outer(x) - g(x)``; a positive bump is a reachability
    failure, noise sits on both sides of zero.
    """

    holds: bool
    max_deviation: float
    tolerance: float
    x_samples: np.ndarray
    outer: np.ndarray
    deviation: np.ndarray
    inner_nodes: np.ndarray
    inner_values: np.ndarray
    hypotheses: str
    obstruction: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "x": self.x_samples,
            "g": self.outer - self.deviation,
            "outer": self.outer,
            "deviation": self.deviation,
        })

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "hypotheses": self.hypotheses,
            "semiconcavity_obstruction": self.obstruction,
            "x": self.x_samples.tolist(),
            "deviation": self.deviation.tolist(),
        }


@dataclass(eq=False)
class RoundtripReport:
    """Forward solution u from ``sigma = w(0, .)`` compared with g at T and with w on the grid."""

    bf_holds: bool
    max_deviation: float
    sup_error: float
    equality_error: float
    strip_verdict: bool
    tolerance: float
    hypotheses: str
    t_nodes: np.ndarray
    x_nodes: np.ndarray
    forward: np.ndarray = field(repr=False, default=None)
    backward: np.ndarray = field(repr=False, default=None)

    def to_frame(self) -> pd.DataFrame:
        nt, nx = self.forward.shape
        return pd.DataFrame({
            "t": np.repeat(self.t_nodes, nx),
            "x": np.tile(self.x_nodes, nt),
            "u": self.forward.ravel(),
            "w": self.backward.ravel(),
            "difference": (self.forward - self.backward).ravel(),
        })

    def to_dict(self) -> dict:
        return {
            "bf_holds": self.bf_holds,
            "max_deviation": self.max_deviation,
            "sup_error": self.sup_error,
            "equality_error": self.equality_error,
            "strip_verdict": self.strip_verdict,
            "tolerance": self.tolerance,
            "hypotheses": self.hypotheses,
        }


def _one_variable(prob):
    if prob.dimension != 1:
        raise UnsupportedInputError("Backward/forward tables handle one variable data")
    if prob.concave:
        raise UnsupportedInputError("Terminal problems take the convex H of the forward equation")


def backward_problem(prob) -> core.Problem:
    """The time-reversed problem ``v_t - H(Dv) = 0``, ``v(0, .) = g``, as a concave problem."""
    return core.Problem(prob.hamiltonian.negated(), prob.initial_data, prob.horizon, prob.window,
                        prob.h_window, prob.resolution, prob.epsilon, concave=True,
                        validate=False)


def _backward_values(prob, backward, t: float, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if t >= prob.horizon:
        return prob.initial_at(xs[..., None])
    return core.value_batch(backward, prob.horizon - t, xs)


def backward_solve(prob, t: float, x) -> float:
    """``w(t, x)`` for the terminal data ``g = prob.initial_data`` at ``T = prob.horizon``.

    Raises
    ------
    OutOfRangeError
        t is not in ``[0, T)``.
    """
    if prob.concave:
        raise UnsupportedInputError("Terminal problems take the convex H of the forward equation")
    t = float(t)
    if not 0 <= t < prob.horizon:
        raise OutOfRangeError(f"Backward time must be in [0, {prob.horizon}), got {t}")
    return core.evaluate_concave(backward_problem(prob), prob.horizon - t, x)


def _table(prob, x_samples: np.ndarray):
    """Lattice of step TABLE_STEP holding 0, wide enough for every outer minimizer."""
    reach = prob.horizon * 2.0 * prob.search.scale(prob.resolution + 1) + 4 * TABLE_STEP
    lower = np.floor((np.min(x_samples) - reach) / TABLE_STEP)
    upper = np.ceil((np.max(x_samples) + reach) / TABLE_STEP)
    return TABLE_STEP * np.arange(lower, upper + 1)


def _hypotheses(prob, x_samples) -> str:
    window = (float(min(np.min(x_samples), prob.window[0])),
              float(max(np.max(x_samples), prob.window[1])))
    report = strip_hypotheses(prob, window)
    return WITHIN if report.sigma_c1 and report.sigma_lipschitz else OUTSIDE


def _forward_from_table(prob, nodes, values) -> core.Problem:
    sigma = ScalarFunction.from_grid(nodes, values)
    return core.Problem(prob.hamiltonian, sigma, prob.horizon, (float(nodes[0]), float(nodes[-1])),
                        prob.h_window, prob.resolution, prob.epsilon, validate=False)


def bf_condition(prob, x_samples=None, tolerance: float = BF_TOLERANCE) -> BFReport:
    """Min-max reachability of the terminal data ``g = prob.initial_data`` at ``T``.

    Holds iff ``max |outer(x) - g(x)| <= tolerance`` over ``x_samples``.
    """
    _one_variable(prob)
    x_samples = (np.linspace(prob.window[0], prob.window[1], ROUNDTRIP_NODES)
                 if x_samples is None else np.asarray(x_samples, dtype=float).ravel())
    T = prob.horizon
    logger.info("Start - bf_condition")
    nodes = _table(prob, x_samples)
    inner = core.value_batch(backward_problem(prob), T, nodes)
    outer = core.value_batch(_forward_from_table(prob, nodes, inner), T, x_samples)
    deviation = outer - prob.initial_at(x_samples[:, None])
    max_deviation = float(np.max(np.abs(deviation), initial=0.0))
    holds = max_deviation <= tolerance
    hypotheses = _hypotheses(prob, x_samples)
    window = (float(np.min(x_samples)), float(np.max(x_samples))) if len(x_samples) else prob.window
    obstruction = bool(
        window[0] < window[1]
        and np.isinf(estimate_semiconcavity(prob.initial_data, window))
        and estimate_uniform_convexity(prob.hamiltonian, prob.h_window) > 0
    )
    if obstruction and holds:
        logger.error("Reachability holds for terminal data that is not semiconcave")
    if hypotheses == OUTSIDE:
        logger.warning(
            "Terminal data is not C1 and Lipschitz: verdict is outside theorem hypotheses"
        )
    logger.info("End - bf_condition")
    return BFReport(holds, max_deviation, tolerance, x_samples, outer, deviation, nodes, inner,
                    hypotheses, obstruction)


def roundtrip(prob, t_nodes=None, x_nodes=None, tolerance: float = BF_TOLERANCE,
              jobs: int = 1) -> RoundtripReport:
    """Backward solve ``sigma = w(0, .)``, forward solve u from sigma, compare on the grid.

    ``strip_verdict`` is True when l(t, x) is a singleton at every sampled ``(t, x)``.
    """
    _one_variable(prob)
    T = prob.horizon
    t_nodes = (np.linspace(T / ROUNDTRIP_TIMES, T, ROUNDTRIP_TIMES)
               if t_nodes is None else np.asarray(t_nodes, dtype=float).ravel())
    x_nodes = (np.linspace(prob.window[0], prob.window[1], ROUNDTRIP_NODES)
               if x_nodes is None else np.asarray(x_nodes, dtype=float).ravel())
    logger.info("Start - roundtrip")
    report = bf_condition(prob, x_nodes, tolerance)
    forward = _forward_from_table(prob, report.inner_nodes, report.inner_values)
    solution = core.solve_grid(forward, t_nodes, x_nodes, jobs=jobs)
    backward = backward_problem(prob)
    w = np.stack([_backward_values(prob, backward, t, x_nodes) for t in t_nodes])
    g = prob.initial_at(x_nodes[:, None])
    if len(t_nodes) and t_nodes[-1] == T:
        at_horizon = solution.values[-1]
    else:
        at_horizon = core.solve_grid(forward, [T], x_nodes, jobs=jobs).values[0]
    # cells where the search escaped count as unbounded error
    error = np.abs(at_horizon - g)
    sup_error = float(np.max(np.where(np.isnan(error), np.inf, error), initial=0.0))
    difference = np.abs(solution.values - w)
    equality_error = float(np.max(difference, initial=0.0)) if difference.size else 0.0
    strip_verdict = bool(np.all(solution.singleton & ~solution.failed))
    if report.holds != (sup_error <= tolerance):
        logger.error(f"Reachability verdict {report.holds} disagrees with sup error {sup_error}")
    logger.info("End - roundtrip")
    return RoundtripReport(report.holds, report.max_deviation, sup_error, equality_error,
                           strip_verdict, tolerance, report.hypotheses, t_nodes, x_nodes,
                           solution.values, w)
