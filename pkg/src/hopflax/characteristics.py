"""Generalized characteristics ``x(t) = y + t H_p(q)`` with ``q`` in ``D#sigma(y)``.

Preimage sets, type I/II classification along curves, reachable gradients and curve families
for plotting.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from hopflax import hopflax_core as core
from hopflax.exceptions import InvalidDatumError, UnsupportedInputError
from hopflax.semidifferential import d_sharp

logger = logging.getLogger(__name__)

TYPE_I = "I"
TYPE_II = "II"
NOT_THROUGH = "not-through-point"
MEMBERSHIP_TOLERANCE = 1e-6
SCAN_NODES = 4097
SEGMENT_NODES = 17
SCAN_TIMES = 64
DEDUPE_TOLERANCE = 1e-7


@dataclass(frozen=True, eq=False)
class Characteristic:
    """Straight line through ``(0, origin)`` with spatial velocity ``H_p(slope)``.

    ``branch`` records which set produced the slope datum: "sub" (D-, smooth points included),
    "super" (D+) or "fallback" (the {0} of an empty D#).
    """

    origin: np.ndarray
    slope: np.ndarray
    velocity: np.ndarray
    branch: str

    @property
    def dimension(self) -> int:
        return len(self.origin)

    def position(self, t) -> np.ndarray:
        """Points ``x(t)``, shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.velocity

    def __call__(self, t):
        position = self.position(t)
        return position[..., 0] if self.dimension == 1 else position

    def passes_through(self, t, x, tolerance: float = MEMBERSHIP_TOLERANCE) -> bool:
        gap = self.position(t) - np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.max(np.abs(gap)) <= tolerance)

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "slope": self.slope.tolist(),
            "velocity": self.velocity.tolist(),
            "branch": self.branch,
        }


@dataclass(frozen=True, eq=False)
class PreimageSet:
    """Origins ``y`` in l*(t, x), each with its slope datum and type."""

    t: float
    x: np.ndarray
    points: np.ndarray
    slopes: np.ndarray
    types: tuple
    branches: tuple

    def __len__(self) -> int:
        return len(self.points)

    @property
    def coordinates(self) -> np.ndarray:
        return self.points[:, 0] if self.points.shape[1] == 1 else self.points

    def of_type(self, kind: str) -> np.ndarray:
        mask = np.array([k == kind for k in self.types], dtype=bool)
        return self.coordinates[mask] if len(mask) else self.coordinates

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x.tolist(),
            "points": self.points.tolist(),
            "slopes": self.slopes.tolist(),
            "types": list(self.types),
            "branches": list(self.branches),
        }


@dataclass(frozen=True)
class ReachableGradientSet:
    """Pairs ``(-H(q), q)`` for the slopes ``q`` induced by l(t, x)."""

    pairs: tuple

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def is_singleton(self) -> bool:
        return len(self.pairs) == 1

    def to_dict(self) -> dict:
        return {"pairs": [[p_t, list(q)] for p_t, q in self.pairs]}


@dataclass(eq=False)
class CurveScan:
    """Classification of one curve over increasing times.

    ``theta_hat`` is the largest scanned time at which the curve is type I (None if never);
    ``switch`` brackets the change to type II by consecutive scan times (None if no change);
    ``violations`` lists the times contradicting type I persistence.
    """

    times: np.ndarray
    types: tuple
    singleton: np.ndarray
    theta_hat: float
    switch: tuple
    violations: list

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": self.times, "type": list(self.types), "singleton": self.singleton}
        )


def _convex_only(prob):
    if prob.concave:
        raise UnsupportedInputError("Characteristics are built for convex Hamiltonians")


def _membership(sigma) -> float:
    if sigma.kind != "grid":
        return MEMBERSHIP_TOLERANCE
    return MEMBERSHIP_TOLERANCE + sigma.step * (1.0 + sigma.lipschitz_on(sigma.window))


# =================================================================================================
# Curves
# =================================================================================================


def forward_curve(prob, y, q, tolerance: float = None) -> Characteristic:
    """The characteristic from ``y`` with slope datum ``q``.

    Raises
    ------
    InvalidDatumError
        ``q`` is not in ``D#sigma(y)``.
    """
    _convex_only(prob)
    sigma = prob.initial_data
    tolerance = _membership(sigma) if tolerance is None else tolerance
    y = np.atleast_1d(np.asarray(y, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    sharp = d_sharp(sigma, y[0] if prob.dimension == 1 else y)
    branch = sharp.branch_of(q, tolerance)
    if branch is None:
        raise InvalidDatumError(f"q={q.tolist()} is not in D#sigma({y.tolist()}) = {sharp}")
    return Characteristic(y, q, np.asarray(prob.velocity_at(q), dtype=float), branch)


def bundle(prob, y, count: int = 9) -> list:
    """Characteristics from ``y`` for ``count`` slopes spread over each piece of ``D#sigma(y)``."""
    _convex_only(prob)
    sigma = prob.initial_data
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sharp = d_sharp(sigma, y[0] if prob.dimension == 1 else y)
    if sharp.fallback:
        slopes = [np.zeros(prob.dimension)]
    else:
        slopes = []
        for piece in sharp.pieces:
            if piece.is_singleton:
                slopes.append(np.array([lo for lo, _ in piece.bounds]))
                continue
            axes = [np.linspace(lo, hi, count) for lo, hi in piece.bounds]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, prob.dimension)
            slopes.extend(grid)
    curves, seen = [], set()
    for q in slopes:
        key = tuple(np.round(q, 12))
        if key not in seen:
            seen.add(key)
            curves.append(forward_curve(prob, y, q))
    return curves


def polylines(prob, curves: list, t_nodes) -> pd.DataFrame:
    """Curve family sampled at ``t_nodes``, with u read back from the Hopf-Lax solution."""
    t_nodes = np.asarray(t_nodes, dtype=float).ravel()
    names = ["x"] if prob.dimension == 1 else ["x1", "x2"]
    frames = []
    for index, curve in enumerate(curves):
        positions = curve.position(t_nodes)
        values = np.array([
            float(prob.initial_at(p)) if t == 0 else core.evaluate(prob, t, p)
            for t, p in zip(t_nodes, positions)
        ])
        data = {"curve": index, "branch": curve.branch, "t": t_nodes}
        for i, name in enumerate(names):
            data[name] = positions[:, i]
        data["value"] = values
        frames.append(pd.DataFrame(data))
    if not frames:
        return pd.DataFrame(columns=["curve", "branch", "t"] + names + ["value"])
    return pd.concat(frames, ignore_index=True)


# =================================================================================================
# Preimage sets
# =================================================================================================


def _segments(sigma, window: tuple) -> tuple:
    kinks = np.asarray(sigma.breakpoints(window), dtype=float)
    edges = np.concatenate([[window[0]], kinks, [window[1]]])
    return kinks, list(zip(edges[:-1], edges[1:]))


def _roots_1d(dual, sigma, t: float, x: float, window: tuple, tolerance: float) -> list:
    """Origins ``y`` with ``H*_z((x - y) / t)`` in ``D#sigma(y)``, as ``(y, q, branch)`` triples."""

    def slope(y):
        return dual.argmax((x - np.asarray(y, dtype=float)) / t)

    found = []
    kinks, segments = _segments(sigma, window)
    for y in kinks:
        q = float(slope(y))
        branch = d_sharp(sigma, y).branch_of(q, tolerance)
        if branch is not None:
            found.append((float(y), q, branch))

    width = window[1] - window[0]
    for lo, hi in segments:
        if hi - lo <= 0:
            continue
        nodes = max(SEGMENT_NODES, int(SCAN_NODES * (hi - lo) / width))
        y = np.linspace(lo, hi, nodes)
        d_minus, d_plus = sigma.one_sided_derivatives(y)
        derivative = 0.5 * (d_minus + d_plus)
        derivative[0], derivative[-1] = d_plus[0], d_minus[-1]
        phi = slope(y) - derivative

        def gap(point, lo=lo, hi=hi):
            left, right = sigma.one_sided_derivatives(point)
            local = right if point <= lo else left if point >= hi else 0.5 * (left + right)
            return float(slope(point) - local)

        roots = list(y[phi == 0.0])
        for j in np.flatnonzero(phi[:-1] * phi[1:] < 0):
            root = brentq(gap, y[j], y[j + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
            if abs(gap(root)) <= tolerance:
                roots.append(root)
        for root in roots:
            q = float(slope(root))
            branch = d_sharp(sigma, root).branch_of(q, tolerance)
            if branch is not None:
                found.append((float(root), q, branch))

    found.sort(key=lambda item: item[0])
    unique = []
    for item in found:
        if not unique or item[0] - unique[-1][0] > DEDUPE_TOLERANCE * (1.0 + abs(item[0])):
            unique.append(item)
    return unique


def _search_window(prob, t: float, x: np.ndarray, axis: int = 0) -> tuple:
    reach = t * prob.search.scale(prob.resolution + 1)
    return (float(x[axis] - reach), float(x[axis] + reach))


def _annotate(prob, t, x, candidates) -> PreimageSet:
    minimizers = core.minimizer_set(prob, t, x)
    points, slopes, types, branches = [], [], [], []
    for y, q, branch in candidates:
        points.append(np.atleast_1d(y))
        slopes.append(np.atleast_1d(q))
        types.append(TYPE_I if minimizers.contains(y, MEMBERSHIP_TOLERANCE) else TYPE_II)
        branches.append(branch)
    d = prob.dimension
    return PreimageSet(
        float(t), x, np.array(points).reshape(-1, d), np.array(slopes).reshape(-1, d),
        tuple(types), tuple(branches),
    )


def preimage_set(prob, t: float, x, tolerance: float = None) -> PreimageSet:
    """l*(t, x): origins of the generalized characteristics through ``(t, x)``.

    For each origin the slope datum is forced, ``q = H*_z((x - y) / t)``, so the search is a
    root scan in ``y`` of ``H*_z((x - y) / t) - sigma'(y)`` on the smooth pieces of sigma plus a
    membership test at its kinks. Origins in l(t, x) are type I, the others type II.

    In 2-D both H and sigma must be sums of per-coordinate terms.
    """
    _convex_only(prob)
    t = core.check_time(prob, t)
    x = core.as_points(prob, x)[0]
    sigma = prob.initial_data
    tolerance = _membership(sigma) if tolerance is None else tolerance
    if prob.dimension == 1:
        candidates = _roots_1d(prob.dual, sigma, t, float(x[0]), _search_window(prob, t, x),
                               tolerance)
        return _annotate(prob, t, x, candidates)

    components = sigma.separable_components()
    if components is None:
        raise UnsupportedInputError("2-D preimage sets need initial data f1(x1) + f2(x2)")
    per_axis = []
    for axis, (dual, part) in enumerate(zip(prob.dual.components, components)):
        roots = [y for y, _, _ in _roots_1d(dual, part, t, float(x[axis]),
                                            _search_window(prob, t, x, axis), tolerance)]
        # the {0} fallback of D# in 2-D is not visible axis by axis
        roots.append(float(x[axis] - t * dual.f.gradient(0.0)))
        per_axis.append(sorted(set(roots)))
    candidates = []
    for y1 in per_axis[0]:
        for y2 in per_axis[1]:
            y = np.array([y1, y2])
            q = prob.conjugate((x - y) / t)[1]
            branch = d_sharp(sigma, y).branch_of(q, tolerance)
            if branch is not None:
                candidates.append((y, q, branch))
    return _annotate(prob, t, x, candidates)


def preimage_minimum(prob, t: float, x) -> float:
    """Minimum of the Hopf-Lax objective restricted to l*(t, x); equals u(t, x)."""
    preimages = preimage_set(prob, t, x)
    x = core.as_points(prob, x)[0]
    if prob.dimension == 1:
        values = core.hopf_lax_objective(prob, t, x[0], preimages.coordinates)
    else:
        values = core.hopf_lax_objective(prob, t, x, preimages.points)
    return float(np.min(values))


# =================================================================================================
# Classification
# =================================================================================================


def classify_curve(prob, curve: Characteristic, t0: float, x0,
                   tolerance: float = MEMBERSHIP_TOLERANCE) -> str:
    """Type I if the origin is in l(t0, x0), type II otherwise, or not-through-point."""
    x0 = core.as_points(prob, x0)[0]
    if not curve.passes_through(t0, x0, tolerance):
        return NOT_THROUGH
    minimizers = core.minimizer_set(prob, t0, x0)
    return TYPE_I if minimizers.contains(curve.origin, tolerance) else TYPE_II


def classify_along(prob, curve: Characteristic, t_scan=None,
                   tolerance: float = MEMBERSHIP_TOLERANCE) -> CurveScan:
    """Classify ``curve`` at increasing times and locate the switch from type I to type II.

    Type I at ``t0`` forces a singleton l(t, x(t)) = {y} for every ``t < t0``; scanned times
    contradicting this are reported as violations and logged as errors.
    """
    _convex_only(prob)
    if t_scan is None:
        t_scan = np.geomspace(prob.horizon * 1e-3, prob.horizon, SCAN_TIMES)
    times = np.asarray(t_scan, dtype=float)
    assert np.all(np.diff(times) > 0), "Scan times must be strictly increasing"
    types, singleton = [], []
    for t in times:
        minimizers = core.minimizer_set(prob, t, curve.position(t))
        is_type_one = minimizers.contains(curve.origin, tolerance)
        types.append(TYPE_I if is_type_one else TYPE_II)
        singleton.append(is_type_one and minimizers.is_singleton)
    singleton = np.array(singleton, dtype=bool)
    type_one = np.flatnonzero([kind == TYPE_I for kind in types])
    if len(type_one) == 0:
        return CurveScan(times, tuple(types), singleton, None, None, [])
    last = type_one[-1]
    violations = [float(t) for t, ok in zip(times[:last], singleton[:last]) if not ok]
    for t in violations:
        logger.error(
            f"Type I persistence violated: curve from {curve.origin.tolist()} is type I at "
            f"t={times[last]} but l(t, x(t)) is not the singleton origin at t={t}"
        )
    switch = None if last == len(times) - 1 else (float(times[last]), float(times[last + 1]))
    return CurveScan(times, tuple(types), singleton, float(times[last]), switch, violations)


def reachable_gradients(prob, t0: float, x0) -> ReachableGradientSet:
    """``{(-H(q), q)}`` with ``q = H*_z((x0 - y0) / t0)`` for ``y0`` in l(t0, x0)."""
    _convex_only(prob)
    t0 = core.check_time(prob, t0)
    x0 = core.as_points(prob, x0)[0]
    minimizers = core.minimizer_set(prob, t0, x0)
    origins = list(minimizers.points)
    for extent, (lower, upper) in zip(minimizers.extents, minimizers.spans):
        if extent > minimizers.radius:
            origins.extend([lower, upper])
    pairs = []
    for y0 in origins:
        q = np.atleast_1d(prob.conjugate((x0 - y0) / t0)[1])
        if any(np.max(np.abs(q - np.array(other))) <= 1e-9 for _, other in pairs):
            continue
        pairs.append((-float(prob.hamiltonian_at(q)), tuple(q.tolist())))
    pairs.sort(key=lambda pair: pair[1])
    return ReachableGradientSet(tuple(pairs))
