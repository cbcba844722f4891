# =================================================================================================
# Viscosity verification
#
# Sub and supersolution inequalities p_t + H(q) <= 0 on D+u and >= 0 on D-u:
#   - for the Hopf-Lax solution, D+u is the convex hull of the reachable gradients and D-u is
#     empty at kinks, so only the subsolution side is checked there;
#   - for a candidate sampled on a (t, x) grid, D-u and D+u are polygons cut by one-sided
#     directional quotients along the 8 index directions.
# =================================================================================================

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from hopflax import hopflax_core as core
from hopflax.characteristics import reachable_gradients
from hopflax.exceptions import InputError, OutOfRangeError, UnsupportedInputError

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
FD_TOLERANCE = 1e-3
FEASIBILITY = 1e-10
INTERIOR_SAMPLES = 8
SLOPE_SAMPLES = 201
STEP_MULTIPLES = (4, 2, 1)
GROWTH = 1.3
TRACE_TIMES = (0.1, 0.01, 0.001)
DIRECTIONS = [(dt, dx) for dt in (-1, 0, 1) for dx in (-1, 0, 1) if (dt, dx) != (0, 0)]


@dataclass(eq=False)
class ViscosityVerdict:
    """Outcome of the viscosity inequalities at one point or over a region.

    ``sub_margin`` is the largest ``p_t + H(q)`` over the sampled D+ (``-inf`` when D+ is
    empty), ``super_margin`` the smallest over the sampled D- (``inf`` when D- is empty).
    ``witnesses`` are ``(t, x, (p_t, q), margin, side)`` records of failures.
    """

    subsolution: bool
    supersolution: bool
    sub_margin: float = -np.inf
    super_margin: float = np.inf
    residual_max: float = 0.0
    witnesses: list = field(default_factory=list)
    unreliable: bool = False
    initial_trace: dict = None

    @property
    def passed(self) -> bool:
        return self.subsolution and self.supersolution

    def to_frame(self) -> pd.DataFrame:
        """One row per witness; a single summary row with empty location when there is none."""
        summary = {
            "subsolution": self.subsolution,
            "supersolution": self.supersolution,
            "sub_margin": self.sub_margin,
            "super_margin": self.super_margin,
            "residual_max": self.residual_max,
            "unreliable": self.unreliable,
        }
        rows = [
            {**summary, "t": t, "x": " ".join(str(c) for c in np.atleast_1d(x)), "p_t": p_t,
             "q": " ".join(str(c) for c in np.atleast_1d(q)), "margin": margin, "side": side}
            for t, x, (p_t, q), margin, side in self.witnesses
        ]
        columns = list(summary) + ["t", "x", "p_t", "q", "margin", "side"]
        if not rows:
            rows = [{**summary, "t": np.nan, "x": "", "p_t": np.nan, "q": "", "margin": np.nan,
                     "side": ""}]
        return pd.DataFrame(rows, columns=columns)

    def to_dict(self) -> dict:
        def finite(value):
            return float(value) if np.isfinite(value) else None

        return {
            "subsolution": self.subsolution,
            "supersolution": self.supersolution,
            "sub_margin": finite(self.sub_margin),
            "super_margin": finite(self.super_margin),
            "residual_max": self.residual_max,
            "unreliable": self.unreliable,
            "initial_trace": self.initial_trace,
            "witnesses": [
                {"t": t, "x": x, "gradient": [p_t, q], "margin": margin, "side": side}
                for t, x, (p_t, q), margin, side in self.witnesses
            ],
        }


@dataclass(eq=False)
class GridCandidate:
    """A candidate solution sampled on a uniform ``t_nodes x x_nodes`` grid (one variable)."""

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        self.x_nodes = np.asarray(self.x_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.t_nodes), len(self.x_nodes)):
            raise InputError("Candidate values do not match the (t, x) nodes")
        for axis in (self.t_nodes, self.x_nodes):
            steps = np.diff(axis)
            if len(axis) < 3 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
                raise InputError("Candidate nodes must be uniform, increasing, at least 3 per axis")
        self._interpolator = RegularGridInterpolator((self.t_nodes, self.x_nodes), self.values)

    @classmethod
    def from_function(cls, function, t_nodes, x_nodes) -> "GridCandidate":
        t_nodes, x_nodes = np.asarray(t_nodes, dtype=float), np.asarray(x_nodes, dtype=float)
        t, x = np.meshgrid(t_nodes, x_nodes, indexing="ij")
        return cls(t_nodes, x_nodes, function(t, x))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "GridCandidate":
        """Long format table with columns ``t``, ``x``, ``value``."""
        missing = {"t", "x", "value"} - set(frame.columns)
        if missing:
            raise InputError(f"Candidate table misses columns {sorted(missing)}")
        table = frame.pivot(index="t", columns="x", values="value").sort_index().sort_index(axis=1)
        if table.isna().to_numpy().any():
            raise InputError("Candidate table is not a full (t, x) grid")
        return cls(table.index.to_numpy(), table.columns.to_numpy(), table.to_numpy())

    @property
    def steps(self) -> tuple:
        return float(self.t_nodes[1] - self.t_nodes[0]), float(self.x_nodes[1] - self.x_nodes[0])

    def __call__(self, t, x) -> np.ndarray:
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return self._interpolator(np.stack([t, x], axis=-1))

    def node(self, t: float, x: float) -> tuple:
        return (int(np.argmin(np.abs(self.t_nodes - t))), int(np.argmin(np.abs(self.x_nodes - x))))


# =================================================================================================
# Hopf-Lax solution
# =================================================================================================


def residual_at(prob, t: float, x) -> float:
    """``|p_t + H(p)|`` at a differentiable point.

    Raises
    ------
    NotDifferentiableError
        l(t, x) is not a singleton; use ``check_viscosity_at``.
    """
    pair = core.gradient_at(prob, t, x)
    return abs(pair.p_t + float(prob.hamiltonian_at(pair.p)))


def _margins(prob, points: np.ndarray) -> np.ndarray:
    return points[:, 0] + prob.hamiltonian_at(points[:, 1:])


def _hull_samples(prob, vertices: np.ndarray) -> np.ndarray:
    """Vertices, interior points and the best point of every edge of a convex hull."""
    center = vertices.mean(axis=0)
    k = len(vertices)
    interior = [
        center + (n + 1) / (INTERIOR_SAMPLES + 1) * (vertices[n % k] - center)
        for n in range(INTERIOR_SAMPLES)
    ]
    edges = []
    for i in range(k):
        for j in range(i + 1, k):
            a, b = vertices[i], vertices[j]
            result = minimize_scalar(
                lambda s, a=a, b=b: -float(_margins(prob, (a + s * (b - a))[None, :])[0]),
                bounds=(0.0, 1.0), method="bounded",
            )
            edges.append(a + result.x * (b - a))
    return np.vstack([vertices] + interior + edges)


def _check_solution(prob, t, x, tolerance):
    x = core.as_points(prob, x)[0]
    minimizers = core.minimizer_set(prob, t, x)
    location = x.tolist()
    if minimizers.is_singleton:
        pair = core.gradient_at(prob, t, x)
        margin = pair.p_t + float(prob.hamiltonian_at(pair.p))
        ok = abs(margin) <= tolerance
        witnesses = [] if ok else [(t, location, (pair.p_t, pair.p.tolist()), margin, "residual")]
        return ViscosityVerdict(ok, ok, margin, margin, abs(margin), witnesses)
    pairs = reachable_gradients(prob, t, x).pairs
    vertices = np.array([[p_t, *q] for p_t, q in pairs])
    samples = _hull_samples(prob, vertices)
    margins = _margins(prob, samples)
    worst = int(np.argmax(margins))
    sub_margin = float(margins[worst])
    ok = sub_margin <= tolerance
    witnesses = []
    if not ok:
        point = samples[worst]
        witnesses.append((t, location, (float(point[0]), point[1:].tolist()), sub_margin,
                          "subsolution"))
    return ViscosityVerdict(ok, True, sub_margin, np.inf, 0.0, witnesses)


# =================================================================================================
# Grid candidates
# =================================================================================================


def _directional_quotients(candidate: GridCandidate, i: int, j: int):
    """Richardson extrapolated one-sided derivatives along the index directions.

    Returns the derivatives per unit step along ``(dt ht, dx hx)`` and the unreliable flag.
    """
    values = candidate.values
    nt, nx = values.shape
    reach = max(STEP_MULTIPLES)
    if not (reach <= i < nt - reach and reach <= j < nx - reach):
        raise OutOfRangeError(f"Node ({i}, {j}) is within {reach} nodes of the candidate edge")
    ht, hx = candidate.steps
    derivatives, unreliable = {}, False
    for dt, dx in DIRECTIONS:
        length = np.hypot(dt * ht, dx * hx)
        quotients = {k: (values[i + k * dt, j + k * dx] - values[i, j]) / k for k in STEP_MULTIPLES}
        # a kink inside the wider stencil breaks the extrapolation, keep the finest quotient
        if abs(quotients[1] - quotients[2]) <= FD_TOLERANCE * length:
            derivatives[(dt, dx)] = 2.0 * quotients[1] - quotients[2]
        else:
            derivatives[(dt, dx)] = quotients[1]
        slopes = [abs(quotients[k]) / length for k in STEP_MULTIPLES]
        if slopes[2] > 1.0 and slopes[2] > GROWTH * slopes[1] and slopes[1] > GROWTH * slopes[0]:
            unreliable = True
    return derivatives, unreliable


def _polygon_extreme(prob, derivatives, ht, hx, kind):
    """Extreme of ``a + H(b)`` over D- (kind "sub", minimum) or D+ (kind "super", maximum).

    Constraints are ``<(a, b), (dt ht, dx hx)> <= D`` for D- and ``>= D`` for D+. Returns
    ``(margin, (a, b))`` or None when the polygon is empty.
    """
    sign = 1.0 if kind == "sub" else -1.0
    slack = {e: FEASIBILITY * (1.0 + abs(d)) for e, d in derivatives.items()}
    right = (derivatives[(0, 1)] + sign * slack[(0, 1)]) / hx
    left = -(derivatives[(0, -1)] + sign * slack[(0, -1)]) / hx
    b_lo, b_hi = (left, right) if kind == "sub" else (right, left)
    if b_lo > b_hi:
        return None

    def a_range(b):
        lower, upper = -np.inf, np.inf
        for (dt, dx), d in derivatives.items():
            if dt == 0:
                continue
            # sign * (dt ht a + dx hx b) <= sign * d + slack
            limit = (d + sign * slack[(dt, dx)] - dx * hx * b) / (dt * ht)
            if sign * dt > 0:
                upper = min(upper, limit)
            else:
                lower = max(lower, limit)
        return lower, upper

    def objective(b):
        lower, upper = a_range(b)
        if lower > upper:
            return None
        a = lower if kind == "sub" else upper
        return a + float(prob.hamiltonian_at(np.array([b]))), a

    best = None
    for b in np.linspace(b_lo, b_hi, SLOPE_SAMPLES):
        value = objective(b)
        if value is not None and (best is None or sign * value[0] < sign * best[0]):
            best = (value[0], (value[1], float(b)))
    if best is None:
        return None
    spacing = (b_hi - b_lo) / (SLOPE_SAMPLES - 1)
    if spacing > 0:
        center = best[1][1]

        def penalized(b):
            value = objective(b)
            return np.inf if value is None else sign * value[0]

        result = minimize_scalar(penalized, bounds=(max(b_lo, center - spacing),
                                                    min(b_hi, center + spacing)), method="bounded")
        value = objective(result.x)
        if value is not None and sign * value[0] < sign * best[0]:
            best = (value[0], (value[1], float(result.x)))
    return best


def _check_candidate(prob, candidate: GridCandidate, t, x, tolerance):
    if prob.dimension != 1:
        raise UnsupportedInputError("Grid candidates are one variable functions")
    i, j = candidate.node(t, x)
    t, x = float(candidate.t_nodes[i]), float(candidate.x_nodes[j])
    ht, hx = candidate.steps
    derivatives, unreliable = _directional_quotients(candidate, i, j)
    smooth = all(
        abs(derivatives[(dt, dx)] + derivatives[(-dt, -dx)])
        <= FD_TOLERANCE * np.hypot(dt * ht, dx * hx)
        for dt, dx in DIRECTIONS
    )
    if unreliable:
        logger.warning(f"Candidate is not Lipschitz at grid scale near t={t}, x={x}")
    if smooth:
        values = candidate.values
        p_t = (values[i + 1, j] - values[i - 1, j]) / (2.0 * ht)
        p = (values[i, j + 1] - values[i, j - 1]) / (2.0 * hx)
        margin = p_t + float(prob.hamiltonian_at(np.array([p])))
        ok = abs(margin) <= FD_TOLERANCE
        witnesses = [] if ok else [(t, [x], (p_t, [p]), margin, "residual")]
        return ViscosityVerdict(ok, ok, margin, margin, abs(margin), witnesses, unreliable)
    witnesses = []
    sub = _polygon_extreme(prob, derivatives, ht, hx, "super")
    sup = _polygon_extreme(prob, derivatives, ht, hx, "sub")
    sub_margin = -np.inf if sub is None else sub[0]
    super_margin = np.inf if sup is None else sup[0]
    sub_ok = sub_margin <= tolerance
    super_ok = super_margin >= -tolerance
    if not sub_ok:
        witnesses.append((t, [x], (sub[1][0], [sub[1][1]]), sub_margin, "subsolution"))
    if not super_ok:
        witnesses.append((t, [x], (sup[1][0], [sup[1][1]]), super_margin, "supersolution"))
    return ViscosityVerdict(sub_ok, super_ok, sub_margin, super_margin, 0.0, witnesses, unreliable)


# =================================================================================================
# Public operations
# =================================================================================================


def check_viscosity_at(prob, t: float, x, candidate: GridCandidate = None,
                       tolerance: float = DEFAULT_TOLERANCE) -> ViscosityVerdict:
    """Viscosity inequalities at (t, x) for the Hopf-Lax solution of ``prob`` or a candidate.

    The Hamiltonian always comes from ``prob``. Candidates are checked at their nearest node.
    """
    t = core.check_time(prob, t)
    if candidate is not None:
        return _check_candidate(prob, candidate, t, x, tolerance)
    if prob.concave:
        raise UnsupportedInputError("Viscosity checks of max-form solutions are not supported")
    return _check_solution(prob, t, x, tolerance)


def initial_trace(prob, x_samples, times=TRACE_TIMES) -> dict:
    """Bounded evidence of ``u(t, .) -> sigma`` as ``t -> 0``: sup errors at a few times."""
    x_samples = np.asarray(x_samples, dtype=float)
    points = core.as_points(prob, x_samples)
    sigma = prob.initial_at(points)
    scanned, errors = [], []
    for t in sorted((t for t in times if t <= prob.horizon), reverse=True):
        values = core.value_batch(prob, t, x_samples).reshape(-1)
        scanned.append(float(t))
        errors.append(float(np.max(np.abs(values - sigma), initial=0.0)))
    monotone = bool(all(b <= a + 1e-12 for a, b in zip(errors, errors[1:])))
    return {"times": scanned, "sup_errors": errors, "monotone": monotone, "bounded_evidence": True}


def _aggregate(verdicts: list, trace=None) -> ViscosityVerdict:
    if not verdicts:
        return ViscosityVerdict(True, True, initial_trace=trace)
    return ViscosityVerdict(
        subsolution=all(v.subsolution for v in verdicts),
        supersolution=all(v.supersolution for v in verdicts),
        sub_margin=max(v.sub_margin for v in verdicts),
        super_margin=min(v.super_margin for v in verdicts),
        residual_max=max(v.residual_max for v in verdicts),
        witnesses=[w for v in verdicts for w in v.witnesses],
        unreliable=any(v.unreliable for v in verdicts),
        initial_trace=trace,
    )


def verify_region(prob, t_window: tuple, x_window: tuple, samples=(9, 65),
                  candidate: GridCandidate = None, tolerance: float = DEFAULT_TOLERANCE,
                  jobs: int = 1) -> ViscosityVerdict:
    """Aggregate viscosity verdict over a sampled region.

    The Hopf-Lax solution is solved on the sample grid; differentiable cells are residual
    checks, the others go through ``check_viscosity_at``. Candidates are checked at their own
    interior nodes inside the region, thinned to at most ``samples`` per axis.
    """
    if not (0 < t_window[0] <= t_window[1] <= prob.horizon and x_window[0] <= x_window[1]):
        raise InputError(f"Region {t_window} x {x_window} is not inside (0, T] x R")
    logger.info("Start - verify_region")
    if candidate is not None:
        reach = max(STEP_MULTIPLES)
        nt, nx = len(candidate.t_nodes), len(candidate.x_nodes)
        t_index = [i for i, t in enumerate(candidate.t_nodes)
                   if t_window[0] <= t <= t_window[1] and reach <= i < nt - reach]
        x_index = [j for j, x in enumerate(candidate.x_nodes)
                   if x_window[0] <= x <= x_window[1] and reach <= j < nx - reach]
        t_index = t_index[::max(1, int(np.ceil(len(t_index) / samples[0])))]
        x_index = x_index[::max(1, int(np.ceil(len(x_index) / samples[1])))]
        verdicts = [
            _check_candidate(prob, candidate, candidate.t_nodes[i], candidate.x_nodes[j], tolerance)
            for i in t_index for j in x_index
        ]
        first = candidate.t_nodes[: min(3, len(candidate.t_nodes))]
        sigma = prob.initial_at(candidate.x_nodes[:, None])
        trace = {
            "times": first.tolist(),
            "sup_errors": [float(np.max(np.abs(candidate.values[i] - sigma)))
                           for i in range(len(first))],
            "bounded_evidence": True,
        }
        logger.info("End - verify_region")
        return _aggregate(verdicts, trace)

    if prob.concave:
        raise UnsupportedInputError("Viscosity checks of max-form solutions are not supported")
    t_nodes = np.linspace(t_window[0], t_window[1], samples[0])
    x_nodes = np.linspace(x_window[0], x_window[1], samples[1])
    if prob.dimension == 2:
        x_nodes = np.stack(np.meshgrid(x_nodes, x_nodes, indexing="ij"), axis=-1).reshape(-1, 2)
    solution = core.solve_grid(prob, t_nodes, x_nodes, jobs=jobs)
    verdicts = []
    for i, t in enumerate(t_nodes):
        for j, x in enumerate(solution.x_nodes):
            if solution.failed[i, j]:
                continue
            if solution.singleton[i, j]:
                p = solution.p[i, j]
                margin = solution.p_t[i, j] + float(prob.hamiltonian_at(p))
                ok = abs(margin) <= tolerance
                witnesses = [] if ok else [(float(t), x.tolist(), (solution.p_t[i, j], p.tolist()),
                                            margin, "residual")]
                verdicts.append(ViscosityVerdict(ok, ok, margin, margin, abs(margin), witnesses))
            else:
                verdicts.append(_check_solution(prob, float(t), x, tolerance))
    trace = initial_trace(prob, x_nodes)
    logger.info("End - verify_region")
    return _aggregate(verdicts, trace)
