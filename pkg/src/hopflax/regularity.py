"""Differentiability of the Hopf-Lax solution and strips ``(0, t*) x R^n`` where it is C1."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from hopflax import hopflax_core as core
from hopflax.convex_calculus import (
    CONSTANT_NODES,
    estimate_semiconcavity,
    estimate_uniform_convexity,
)
from hopflax.exceptions import HypothesisError, InputError
from hopflax.ScalarFunction import ScalarFunction

logger = logging.getLogger(__name__)

STRIP_TIMES = 32
STRIP_NODES = 513


@dataclass(frozen=True)
class RegularityParams:
    """Constants of the semiconvexity preservation bound.

    Parameters
    ----------
    theta : float
        H is semiconcave with constant ``1 / theta``.
    B : float
        Semiconvexity constant of sigma (``inf`` when sigma is not semiconvex).
    T : float
        Horizon.
    """

    theta: float
    B: float
    T: float

    def __post_init__(self):
        if self.B < 0 or np.isnan(self.B):
            raise InputError(f"Semiconvexity constant must be nonnegative, got {self.B}")
        if not self.T > 0:
            raise InputError(f"Horizon must be positive, got {self.T}")


@dataclass(frozen=True)
class SemiconvexityBound:
    """``t_star`` and, at ``t0``, the bound on the semiconvexity constant of u(t0, .)."""

    t_star: float
    t0: float = None
    constant: float = None
    gamma: float = None


@dataclass
class StripHypotheses:
    """Which hypotheses of the strip theorems hold, separately from the observed strip."""

    sigma_c1: bool
    sigma_lipschitz: bool
    h_uniformly_convex: bool
    h_semiconcave: bool
    sigma_semiconvex: bool

    @property
    def injectivity_theorem(self) -> bool:
        return self.sigma_c1

    @property
    def plane_theorem(self) -> bool:
        return self.sigma_c1 and self.sigma_lipschitz

    @property
    def type_one_theorem(self) -> bool:
        return True

    @property
    def corollary(self) -> bool:
        return self.h_uniformly_convex and self.h_semiconcave and self.sigma_semiconvex

    def to_dict(self) -> dict:
        data = asdict(self)
        data.update(
            injectivity_theorem=self.injectivity_theorem,
            plane_theorem=self.plane_theorem,
            type_one_theorem=self.type_one_theorem,
            corollary=self.corollary,
        )
        return data


@dataclass(eq=False)
class StripReport:
    """Observed and guaranteed differentiability strips.

    ``t_star_numeric`` is the largest scanned time such that u(t', .) is differentiable at every
    scanned x for every scanned ``t' <= t`` (0 if the first time fails). ``witnesses`` holds the
    first failure of each failing time as ``(t, x, minimizer set)``.
    """

    times: np.ndarray
    verdicts: np.ndarray
    t_star_numeric: float
    t_star_bound: float
    scan_step: float
    witnesses: list = field(default_factory=list)
    hypotheses: StripHypotheses = None

    @property
    def first_failure(self):
        return self.witnesses[0] if self.witnesses else None

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "verdicts": self.verdicts.tolist(),
            "t_star_numeric": self.t_star_numeric,
            "t_star_bound": self.t_star_bound,
            "scan_step": self.scan_step,
            "witnesses": [
                {"t": t, "x": x.tolist(), "minimizers": s.to_dict()} for t, x, s in self.witnesses
            ],
            "hypotheses": None if self.hypotheses is None else self.hypotheses.to_dict(),
        }


def _window(prob, x_window) -> tuple:
    window = prob.window if x_window is None else tuple(float(w) for w in x_window)
    if not window[0] < window[1]:
        raise InputError(f"Empty window {window}")
    return window


def _space_nodes(prob, window: tuple, nodes: int) -> np.ndarray:
    axis = np.linspace(window[0], window[1], nodes)
    if prob.dimension == 1:
        return axis
    return np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)


# =================================================================================================
# Pointwise and scanned differentiability
# =================================================================================================


def is_differentiable_at(prob, t: float, x, epsilon: float = None):
    """u is differentiable at (t, x) iff l(t, x) is one cluster.

    Returns
    -------
    tuple
        ``(verdict, minimizer set)``; the set is the witness when the verdict is False.
    """
    minimizers = core.minimizer_set(prob, t, x, epsilon)
    return minimizers.is_singleton, minimizers


def differentiability_strip(prob, t_scan=None, x_window=None, resolution: int = STRIP_NODES,
                            epsilon: float = None, jobs: int = 1,
                            params: RegularityParams = None) -> StripReport:
    """Scan differentiability on ``t_scan x x_window`` and compare with the analytic bound.

    Every scanned time is tested on the whole space grid, not only the top plane.
    """
    window = _window(prob, x_window)
    times = (np.linspace(prob.horizon / STRIP_TIMES, prob.horizon, STRIP_TIMES)
             if t_scan is None else np.asarray(t_scan, dtype=float))
    nodes = _space_nodes(prob, window, resolution if prob.dimension == 1 else 65)
    logger.info("Start - differentiability_strip")
    solution = core.solve_grid(prob, times, nodes, epsilon, jobs)
    verdicts = np.all(solution.singleton & ~solution.failed, axis=1)
    passing = np.cumprod(verdicts).astype(bool)
    t_star_numeric = float(times[passing][-1]) if passing.any() else 0.0
    witnesses = []
    for i in np.flatnonzero(~verdicts):
        j = int(np.flatnonzero(~solution.singleton[i] | solution.failed[i])[0])
        x = solution.x_nodes[j]
        if solution.failed[i, j]:
            logger.warning(f"Search escaped at t={times[i]}, x={x.tolist()}")
            continue
        witnesses.append((float(times[i]), x, core.minimizer_set(prob, times[i], x, epsilon)))
    try:
        bound = semiconvexity_bound(params or estimate_params(prob, window)).t_star
    except HypothesisError as error:
        logger.warning(f"No analytic strip bound: {error}")
        bound = None
    scan_step = float(np.max(np.diff(times), initial=times[0] if len(times) else 0.0))
    if bound is not None and bound > t_star_numeric + scan_step:
        logger.warning(f"Analytic bound t*={bound} exceeds the observed strip {t_star_numeric}")
    logger.info("End - differentiability_strip")
    return StripReport(times, verdicts, t_star_numeric, bound, scan_step, witnesses,
                       strip_hypotheses(prob, window))


def injectivity_time(prob, x_window=None, t_scan=None, resolution: int = STRIP_NODES):
    """Largest scanned t with ``y -> y + t H_p(sigma'(y))`` strictly increasing on the window.

    Only meaningful for C1 one variable data; returns None when sigma has kinks.
    """
    window = _window(prob, x_window)
    if prob.dimension != 1:
        raise InputError("injectivity_time handles one variable data")
    sigma = prob.initial_data
    if sigma.kind != "grid" and len(sigma.breakpoints(window)):
        logger.warning("Initial data is not C1 on the window, injectivity test not applicable")
        return None
    times = (np.linspace(prob.horizon / STRIP_TIMES, prob.horizon, STRIP_TIMES)
             if t_scan is None else np.asarray(t_scan, dtype=float))
    y = np.linspace(window[0], window[1], resolution)
    velocity = prob.velocity_at(sigma.gradient(y)[:, None])[:, 0]
    injective = np.array([np.all(np.diff(y + t * velocity) > 0) for t in times])
    passing = np.cumprod(injective).astype(bool)
    return float(times[passing][-1]) if passing.any() else 0.0


# =================================================================================================
# Semiconvexity
# =================================================================================================


def estimate_params(prob, window=None) -> RegularityParams:
    """``theta = 1 / C(H)`` on the Hamiltonian window and ``B = C(-sigma)`` on ``window``."""
    window = _window(prob, window)
    curvature = estimate_semiconcavity(prob.convex_hamiltonian, prob.h_window)
    theta = 0.0 if np.isinf(curvature) else (np.inf if curvature == 0 else 1.0 / curvature)
    B = estimate_semiconcavity(prob.initial_data.negated(), window)
    logger.debug(f"Estimated theta={theta}, B={B}")
    return RegularityParams(theta, B, prob.horizon)


def semiconvexity_bound(params: RegularityParams, t0: float = None) -> SemiconvexityBound:
    """Strip guaranteed by semiconvexity preservation.

    ``t_star = min(T, theta / B)`` (``T`` when ``B = 0``). For ``t0 < t_star`` the
    semiconvexity constant of u(t0, .) is at most ``Lambda B / (gamma t0 (Lambda - B))`` with
    ``Lambda = theta gamma``; the bound decreases in ``gamma``, so ``gamma = 1 / t0`` gives
    ``theta B / (theta - B t0)``.

    Raises
    ------
    HypothesisError
        ``theta <= 0``: H is not semiconcave, H* not uniformly convex.
    """
    theta, B, T = params.theta, params.B, params.T
    if not theta > 0:
        raise HypothesisError(f"Bound not applicable: theta={theta} (H* not uniformly convex)")
    if np.isinf(B):
        t_star = 0.0
    elif B == 0:
        t_star = T
    else:
        t_star = min(T, theta / B)
    if t0 is None:
        return SemiconvexityBound(t_star)
    if not 0 < t0 <= T:
        raise InputError(f"t0 must be in (0, T], got {t0}")
    if B == 0:
        return SemiconvexityBound(t_star, t0, 0.0, 1.0 / t0)
    if t0 >= t_star:
        return SemiconvexityBound(t_star, t0, np.inf, None)
    constant = theta * B / (theta - B * t0) if np.isfinite(theta) else B
    return SemiconvexityBound(t_star, t0, float(constant), 1.0 / t0)


def semiconvexity_observed(prob, t0: float, x_window=None) -> float:
    """Semiconvexity constant of ``x -> u(t0, x)`` (``inf`` flag when there is none)."""
    window = _window(prob, x_window)
    t0 = core.check_time(prob, t0)
    if prob.dimension == 1:
        axis = np.linspace(window[0], window[1], CONSTANT_NODES)
        snapshot = ScalarFunction.from_grid(axis, core.value_batch(prob, t0, axis))
    else:
        axis = np.linspace(window[0], window[1], 65)
        points = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
        snapshot = ScalarFunction.from_grid((axis, axis), core.value_batch(prob, t0, points))
    return estimate_semiconcavity(snapshot.negated(), window)


def _is_c1(f: ScalarFunction, window: tuple) -> bool:
    if f.kind != "grid":
        parts = f.separable_components()
        if parts is not None:
            return all(len(part.breakpoints(window)) == 0 for part in parts)
    return bool(np.isfinite(estimate_semiconcavity(f, window))
                and np.isfinite(estimate_semiconcavity(f.negated(), window)))


def _is_lipschitz(f: ScalarFunction, window: tuple) -> bool:
    if f.lipschitz is not None:
        return True
    if f.kind == "grid":
        return True
    wide = (2.0 * window[0], 2.0 * window[1])
    narrow = f.lipschitz_on(window)
    return bool(np.isfinite(narrow) and f.lipschitz_on(wide) <= narrow * (1.0 + 1e-3) + 1e-9)


def strip_hypotheses(prob, window=None) -> StripHypotheses:
    window = _window(prob, window)
    H, sigma = prob.convex_hamiltonian, prob.initial_data
    return StripHypotheses(
        sigma_c1=_is_c1(sigma, window),
        sigma_lipschitz=_is_lipschitz(sigma, window),
        h_uniformly_convex=estimate_uniform_convexity(H, prob.h_window) > 0,
        h_semiconcave=bool(np.isfinite(estimate_semiconcavity(H, prob.h_window))),
        sigma_semiconvex=bool(np.isfinite(estimate_semiconcavity(sigma.negated(), window))),
    )
