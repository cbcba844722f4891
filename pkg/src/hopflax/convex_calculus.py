# =================================================================================================
# Convex calculus: Fenchel conjugates, conjugate gradients and convexity constants.
#
# Two conjugate engines live here:
#   - fenchel_conjugate, the windowed transform sampled on a dual grid (monotone argmax sweep),
#   - LegendreDual, the unbounded evaluator used by the Hopf-Lax solver (exact argmax by
#     bisection on one-sided derivatives, values interpolated from an exact Hermite table).
# =================================================================================================

import logging
import threading
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, RegularGridInterpolator

from hopflax.exceptions import (
    ConjugateUndefinedError,
    InputError,
    OutOfRangeError,
    UnsupportedInputError,
)
from hopflax.ScalarFunction import ScalarFunction

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_DUAL_RESOLUTION = 2049
DEFAULT_PRIMAL_RESOLUTION = 4097
MAX_EXPANSIONS = 6
MAX_DOUBLINGS = 64
CONSTANT_NODES = 257
CONSTANT_NODES_2D = 65
MAX_GAP = 8
TABLE_STEP = 1.0 / 1024


# =================================================================================================
# Windowed Fenchel conjugate
# =================================================================================================


class ConjugateFunction(ScalarFunction):
    """Grid sampled conjugate with its argmax map.

    Parameters
    ----------
    nodes : tuple of numpy.ndarray
        Dual grid axes.
    values : numpy.ndarray
        Conjugate values on the dual grid.
    argmax : numpy.ndarray
        Maximizer of ``<z, .> - f`` at each dual node (trailing axis of size 2 in 2-D).
    primal_window : tuple
        Primal window the maximization finally ran on.
    """

    def __init__(self, nodes: tuple, values: np.ndarray, argmax: np.ndarray, primal_window):
        super().__init__("grid", len(nodes), nodes=nodes, values=values)
        self.argmax = argmax
        self.primal_window = primal_window
        self._argmax_interpolators = None
        if len(nodes) == 2:
            self._argmax_interpolators = [
                RegularGridInterpolator(nodes, argmax[..., i], bounds_error=False, fill_value=None)
                for i in range(2)
            ]

    @property
    def dual_window(self) -> tuple:
        return self.window


def _check_window(window, name: str = "window") -> tuple:
    lower, upper = (float(w) for w in window)
    if not lower < upper:
        raise InputError(f"Empty {name}: [{lower}, {upper}]")
    return lower, upper


def _monotone_argmax(p: np.ndarray, fp: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Argmax of ``z*p - f(p)`` over the grid for increasing ``z``.

    For convex ``f`` the argmax is nondecreasing in ``z``, so a single forward sweep over both
    grids finds every maximizer in linear time.
    """
    out = np.empty(len(z), dtype=int)
    k, last = 0, len(p) - 1
    for j, zj in enumerate(z):
        while k < last and zj * p[k + 1] - fp[k + 1] > zj * p[k] - fp[k]:
            k += 1
        out[j] = k
    return out


def _polish_argmax(f: ScalarFunction, z: np.ndarray, lower: np.ndarray, upper: np.ndarray):
    """Bisection on ``f'(p+) < z`` inside per node brackets."""
    lo, hi = lower.copy(), upper.copy()
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        right = f.directional(mid, 1.0) < z
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    return hi


def _conjugate_1d(f, dual_window, dual_resolution, primal_window, primal_resolution,
                  max_expansions):
    z = np.linspace(*dual_window, dual_resolution)
    if f.kind == "grid":
        p, fp = f.nodes, f.values
        index = _monotone_argmax(p, fp, z)
        if np.any((index == 0) | (index == len(p) - 1)):
            raise ConjugateUndefinedError(
                f"conjugate undefined on window: argmax reaches the sample window {f.window}"
            )
        return ConjugateFunction((z,), z * p[index] - fp[index], p[index], f.window)

    if primal_window is None:
        half = max(1.0, abs(dual_window[0]), abs(dual_window[1]))
        primal_window = (-half, half)
    lower, upper = _check_window(primal_window, "primal window")
    for attempt in range(max_expansions + 1):
        p = np.linspace(lower, upper, primal_resolution)
        fp = f(p)
        index = _monotone_argmax(p, fp, z)
        if not np.any((index == 0) | (index == len(p) - 1)):
            break
        center, half = 0.5 * (lower + upper), upper - lower
        lower, upper = center - half, center + half
        logger.debug(f"Argmax on the primal boundary, window expanded to [{lower}, {upper}]")
    else:
        raise ConjugateUndefinedError(
            f"conjugate undefined on window: argmax escapes {max_expansions} expansions"
        )
    grid_values = z * p[index] - fp[index]
    below = p[np.maximum(index - 1, 0)]
    above = p[np.minimum(index + 1, len(p) - 1)]
    polished = _polish_argmax(f, z, below, above)
    polished_values = z * polished - f(polished)
    better = polished_values >= grid_values
    values = np.where(better, polished_values, grid_values)
    argmax = np.where(better, polished, p[index])
    return ConjugateFunction((z,), values, argmax, (lower, upper))


def _conjugate_2d_direct(f, dual_window, dual_resolution, primal_window, primal_resolution,
                         max_expansions):
    axis = np.linspace(*dual_window, dual_resolution)
    duals = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    if primal_window is None:
        half = max(1.0, abs(dual_window[0]), abs(dual_window[1]))
        primal_window = (-half, half)
    lower, upper = _check_window(primal_window, "primal window")
    for attempt in range(max_expansions + 1):
        primal_axis = np.linspace(lower, upper, primal_resolution)
        primals = np.stack(np.meshgrid(primal_axis, primal_axis, indexing="ij"), axis=-1)
        primals = primals.reshape(-1, 2)
        fp = f(primals)
        index = np.empty(len(duals), dtype=int)
        for start in range(0, len(duals), 256):
            chunk = duals[start:start + 256]
            index[start:start + 256] = np.argmax(chunk @ primals.T - fp, axis=1)
        i, j = np.unravel_index(index, (primal_resolution, primal_resolution))
        edge = (i == 0) | (j == 0) | (i == primal_resolution - 1) | (j == primal_resolution - 1)
        if not np.any(edge):
            break
        center, half = 0.5 * (lower + upper), upper - lower
        lower, upper = center - half, center + half
    else:
        raise ConjugateUndefinedError(
            f"conjugate undefined on window: argmax escapes {max_expansions} expansions"
        )
    argmax = primals[index]
    values = np.sum(duals * argmax, axis=1) - fp[index]
    shape = (dual_resolution, dual_resolution)
    return ConjugateFunction((axis, axis), values.reshape(shape), argmax.reshape(shape + (2,)),
                             (lower, upper))


def fenchel_conjugate(
    f: ScalarFunction,
    dual_window: tuple,
    dual_resolution: int = DEFAULT_DUAL_RESOLUTION,
    primal_window: tuple = None,
    primal_resolution: int = None,
    max_expansions: int = MAX_EXPANSIONS,
) -> ConjugateFunction:
    """Fenchel conjugate ``f*(z) = max_p <z, p> - f(p)`` sampled on a dual grid.

    Parameters
    ----------
    f : ScalarFunction
        Convex function (1-D, or 2-D).
    dual_window : tuple of float
        Interval of dual values (per axis in 2-D).
    dual_resolution : int, optional
        Number of dual nodes per axis.
    primal_window : tuple of float, optional
        Starting primal window; expanded by a factor 2 while an argmax lands on its boundary.
    primal_resolution : int, optional
        Number of primal nodes per axis.
    max_expansions : int, optional
        Number of expansions before giving up.

    Returns
    -------
    ConjugateFunction

    Raises
    ------
    InputError
        Empty window or resolution below 2.
    ConjugateUndefinedError
        The argmax escapes every expansion (f is not superlinear on the window).
    """
    dual_window = _check_window(dual_window, "dual window")
    if dual_resolution < 2:
        raise InputError(f"Dual resolution must be at least 2, got {dual_resolution}")
    if f.dimension == 1:
        return _conjugate_1d(f, dual_window, dual_resolution, primal_window,
                             primal_resolution or DEFAULT_PRIMAL_RESOLUTION, max_expansions)
    components = f.separable_components()
    if components is None:
        return _conjugate_2d_direct(f, dual_window, dual_resolution, primal_window,
                                    primal_resolution or 129, max_expansions)
    parts = [
        _conjugate_1d(c, dual_window, dual_resolution, primal_window,
                      primal_resolution or DEFAULT_PRIMAL_RESOLUTION, max_expansions)
        for c in components
    ]
    axis = parts[0].nodes
    values = parts[0].values[:, None] + parts[1].values[None, :]
    first, second = np.meshgrid(parts[0].argmax, parts[1].argmax, indexing="ij")
    return ConjugateFunction((axis, axis), values, np.stack([first, second], axis=-1),
                             parts[0].primal_window)


def conjugate_gradient(f_conj: ConjugateFunction, z) -> np.ndarray:
    """Gradient ``f*_z(z)``, the maximizer of ``<z, .> - f``, read from the argmax map.

    Raises
    ------
    OutOfRangeError
        ``z`` outside the dual window.
    """
    z = np.asarray(z, dtype=float)
    lower, upper = f_conj.dual_window
    slack = 1e-12 * max(1.0, abs(lower), abs(upper))
    if np.any(z < lower - slack) or np.any(z > upper + slack):
        raise OutOfRangeError(f"z={z} outside the dual window [{lower}, {upper}]")
    if f_conj.dimension == 1:
        return np.interp(z, f_conj.nodes, f_conj.argmax)
    return np.stack([interpolate(z) for interpolate in f_conj._argmax_interpolators], axis=-1)


def biconjugate(f: ScalarFunction, window: tuple, resolution: int = DEFAULT_DUAL_RESOLUTION):
    """``f**`` sampled on ``window`` (1-D).

    The dual window spans the slopes of ``f`` on ``window`` with a unit margin so that every
    primal query keeps an interior argmax.
    """
    if f.dimension != 1:
        raise UnsupportedInputError("biconjugate is implemented in 1-D")
    window = _check_window(window)
    samples = np.linspace(*window, CONSTANT_NODES)
    d_minus, d_plus = f.one_sided_derivatives(samples)
    slopes = np.concatenate([d_minus, d_plus])
    dual_window = (float(np.min(slopes)) - 1.0, float(np.max(slopes)) + 1.0)
    f_conj = fenchel_conjugate(f, dual_window, dual_resolution=2 * resolution - 1)
    return fenchel_conjugate(f_conj, window, dual_resolution=resolution)


# =================================================================================================
# Unbounded Legendre dual used by the solver
# =================================================================================================


class LegendreDual:
    """Conjugate of a strictly convex superlinear one variable function.

    ``argmax`` and ``exact`` are exact up to bisection resolution. ``__call__`` interpolates
    an exact table of values and slopes with a cubic Hermite spline on a fixed lattice of
    spacing ``TABLE_STEP``; the table grows by doubling and its content does not depend on the
    order of the queries.
    """

    def __init__(self, f: ScalarFunction):
        if f.dimension != 1:
            raise UnsupportedInputError("LegendreDual handles one variable functions")
        self.f = f
        self._half_nodes = 0
        self._spline = None
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"LegendreDual({self.f.to_string()})"

    def argmax(self, z) -> np.ndarray:
        """Exact conjugate gradient: ``inf {p : f'(p+) >= z}``."""
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        lo = np.full(flat.shape, -1.0)
        hi = np.full(flat.shape, 1.0)
        for _ in range(MAX_DOUBLINGS):
            low_bad = self.f.directional(lo, 1.0) >= flat
            high_bad = self.f.directional(hi, 1.0) < flat
            if not (np.any(low_bad) or np.any(high_bad)):
                break
            lo = np.where(low_bad, 2.0 * lo, lo)
            hi = np.where(high_bad, 2.0 * hi, hi)
        else:
            raise ConjugateUndefinedError(
                f"conjugate undefined: no maximizer of <z,p> - H(p) within |p| <= 2^{MAX_DOUBLINGS}"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            right = self.f.directional(mid, 1.0) < flat
            lo = np.where(right, mid, lo)
            hi = np.where(right, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(lo) + np.abs(hi))):
                break
        return hi.reshape(z.shape)

    def exact(self, z):
        """Exact ``(f*(z), f*_z(z))``."""
        z = np.asarray(z, dtype=float)
        p = self.argmax(z)
        return z * p - self.f(p), p

    def _ensure(self, reach: float):
        needed = int(np.ceil(reach / TABLE_STEP)) + 2
        if needed <= self._half_nodes:
            return
        with self._lock:
            if needed <= self._half_nodes:
                return
            half_nodes = max(1024, self._half_nodes)
            while half_nodes < needed:
                half_nodes *= 2
            nodes = TABLE_STEP * np.arange(-half_nodes, half_nodes + 1)
            values, slopes = self.exact(nodes)
            logger.debug(f"Legendre table rebuilt on [{nodes[0]}, {nodes[-1]}]")
            self._spline = CubicHermiteSpline(nodes, values, slopes)
            self._half_nodes = half_nodes

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        reach = float(np.max(np.abs(z), initial=0.0))
        if not np.isfinite(reach):
            raise OutOfRangeError("Conjugate queried at a non finite point")
        self._ensure(reach)
        return self._spline(z)

    def gradient(self, z) -> np.ndarray:
        return self.argmax(z)


class SeparableLegendreDual:
    """Conjugate of ``f1(p1) + f2(p2)``: the sum of the component conjugates."""

    def __init__(self, components: list):
        self.components = [LegendreDual(c) for c in components]

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return sum(dual(z[..., i]) for i, dual in enumerate(self.components))

    def argmax(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.stack([dual.argmax(z[..., i]) for i, dual in enumerate(self.components)], -1)

    def exact(self, z):
        z = np.asarray(z, dtype=float)
        pairs = [dual.exact(z[..., i]) for i, dual in enumerate(self.components)]
        return sum(value for value, _ in pairs), np.stack([p for _, p in pairs], axis=-1)

    def gradient(self, z) -> np.ndarray:
        return self.argmax(z)


def legendre_transform(f: ScalarFunction):
    """Exact conjugate evaluator of a strictly convex superlinear ``f``.

    Raises
    ------
    UnsupportedInputError
        Two variable ``f`` that is not a sum of per-coordinate terms.
    """
    if f.dimension == 1:
        return LegendreDual(f)
    components = f.separable_components()
    if components is None:
        raise UnsupportedInputError(
            "The 2-D solver needs a separable Hamiltonian H(p1, p2) = H1(p1) + H2(p2)"
        )
    return SeparableLegendreDual(components)


# =================================================================================================
# Convexity constants
# =================================================================================================


@dataclass
class ConvexityWitness:
    """Triple violating midpoint convexity: ``f(mid) > (f(a) + f(b)) / 2``."""

    first: tuple
    middle: tuple
    second: tuple
    defect: float

    def __str__(self) -> str:
        return (
            f"f({self.middle}) exceeds the mean of f({self.first}) and f({self.second}) "
            f"by {self.defect:.6g}"
        )


@dataclass
class ConvexityReport:
    """Convexity constants and verdicts of a function on a window.

    ``semiconcavity`` is ``inf`` when the required constant diverges with the sample gap.
    """

    uniform_convexity: float
    semiconcavity: float
    strictly_convex: bool
    superlinear: bool

    @property
    def semiconcavity_infinite(self) -> bool:
        return bool(np.isinf(self.semiconcavity))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["semiconcavity_infinite"] = self.semiconcavity_infinite
        if self.semiconcavity_infinite:
            data["semiconcavity"] = None
        return data


def _sample_grid(f: ScalarFunction, window: tuple, nodes: int):
    axis = np.linspace(window[0], window[1], nodes)
    if f.dimension == 1:
        return axis, f(axis), axis[1] - axis[0]
    points = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    return points, f(points), axis[1] - axis[0]


def _shifted(array: np.ndarray, offset: tuple):
    """Views ``(a[i - o], a[i], a[i + o])`` over every index where all three exist."""
    minus, center, plus = [], [], []
    for n, o in zip(array.shape, offset):
        o = int(o)
        m = abs(o)
        center.append(slice(m, n - m))
        minus.append(slice(m - o, n - m - o))
        plus.append(slice(m + o, n - m + o))
    return array[tuple(minus)], array[tuple(center)], array[tuple(plus)]


def midpoint_excess(f: ScalarFunction, window: tuple, max_gap: int = MAX_GAP):
    """Midpoint excess ``(f(a) + f(b)) / 2 - f((a + b) / 2)`` over sampled triples.

    Triples run along the axis in 1-D, along both axes and both diagonals in 2-D, for index gaps
    ``1..max_gap``.

    Yields
    ------
    tuple
        ``(gap, squared distance |b - a|^2, excess array, (a, mid, b) point arrays)``.
    """
    window = _check_window(window)
    if f.dimension == 1:
        points, values, h = _sample_grid(f, window, CONSTANT_NODES)
        directions = [(1,)]
    else:
        points, values, h = _sample_grid(f, window, CONSTANT_NODES_2D)
        directions = [(1, 0), (0, 1), (1, 1), (1, -1)]
        max_gap = min(max_gap, 4)
    for direction in directions:
        for gap in range(1, max_gap + 1):
            offset = tuple(gap * d for d in direction)
            v_minus, v_mid, v_plus = _shifted(values, offset)
            if v_mid.size == 0:
                continue
            p_minus, p_mid, p_plus = _shifted(points, offset + (0,) * (points.ndim - values.ndim))
            distance2 = (2 * gap * h) ** 2 * sum(d * d for d in direction)
            yield gap, distance2, 0.5 * (v_minus + v_plus) - v_mid, (p_minus, p_mid, p_plus)


def check_convexity(f: ScalarFunction, window: tuple, tolerance: float = 1e-9):
    """Midpoint convexity scan.

    Returns
    -------
    ConvexityWitness or None
        The worst violating triple, or None when ``f`` passes.
    """
    worst = None
    for gap, distance2, excess, (a, mid, b) in midpoint_excess(f, window):
        index = np.unravel_index(np.argmin(excess), excess.shape)
        defect = -float(excess[index])
        if defect > tolerance and (worst is None or defect > worst.defect):
            worst = ConvexityWitness(
                tuple(np.atleast_1d(a[index]).tolist()),
                tuple(np.atleast_1d(mid[index]).tolist()),
                tuple(np.atleast_1d(b[index]).tolist()),
                defect,
            )
    return worst


def estimate_uniform_convexity(f: ScalarFunction, window: tuple,
                               tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Largest ``L >= 0`` such that ``f - L|y|^2`` is midpoint convex on every sampled triple.

    The inequality for ``f - L|y|^2`` on a triple reads ``excess >= L |b - a|^2 / 4``, so the
    largest admissible constant is the smallest ratio over triples. A ratio that only reaches
    its minimum at the finest gap (curvature vanishing at grid scale, as for ``y^4`` at the
    origin) is reported as 0.
    """
    finest, wider = np.inf, np.inf
    for gap, distance2, excess, _ in midpoint_excess(f, window):
        ratio = float(np.min(4.0 * excess / distance2))
        if gap == 1:
            finest = min(finest, ratio)
        else:
            wider = min(wider, ratio)
    overall = min(finest, wider)
    if overall <= tolerance:
        return 0.0
    if np.isfinite(wider) and wider > 2.0 * overall:
        logger.debug("Uniform convexity constant vanishes at grid scale")
        return 0.0
    return overall


def estimate_semiconcavity(f: ScalarFunction, window: tuple,
                           tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Smallest ``C >= 0`` with ``excess <= C |b - a|^2 / 8`` on every sampled triple.

    Returns ``inf`` (the infinite flag) when the constant needed at the finest gap exceeds three
    times the constant needed at the widest gap and the excess is not at round-off level.
    """
    per_gap = {}
    step = None
    for gap, distance2, excess, _ in midpoint_excess(f, window):
        needed = float(np.max(8.0 * excess / distance2))
        per_gap[gap] = max(per_gap.get(gap, -np.inf), needed)
        if gap == 1:
            step = np.sqrt(distance2) / 2.0 if step is None else min(step, np.sqrt(distance2) / 2)
    finest = max(per_gap[1], 0.0)
    widest = max(per_gap[max(per_gap)], 0.0)
    if finest > 3.0 * widest and finest * step > 10.0 * tolerance:
        return np.inf
    constant = max(per_gap.values())
    return 0.0 if constant <= tolerance else float(constant)


def is_strictly_convex(f: ScalarFunction, window: tuple) -> bool:
    """Strict subgradient inequality ``f(p) - f(q) > <g(q), p - q>`` on all sampled pairs."""
    window = _check_window(window)
    if f.dimension == 1:
        points = np.linspace(window[0], window[1], CONSTANT_NODES)[:, None]
        values = f(points[:, 0])
        grads = f.gradient(points[:, 0])[:, None]
    else:
        axis = np.linspace(window[0], window[1], 33)
        points = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        values = f(points)
        grads = f.gradient(points)
    gap = values[None, :] - values[:, None] - np.einsum("id,ijd->ij", grads,
                                                        points[None, :, :] - points[:, None, :])
    np.fill_diagonal(gap, np.inf)
    threshold = 1e-12 * (1.0 + np.max(np.abs(values)))
    return bool(np.all(gap > threshold))


def is_superlinear(f: ScalarFunction, window: tuple, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    """Windowed growth heuristic.

    With ``r(s) = min_{|u|=1} (f(s u) - f(0) - s <g(0), u>) / s``, ``f`` is declared superlinear
    when ``r`` increases without decelerating over ``s = w/4, w/2, w``.
    """
    window = _check_window(window)
    w = max(abs(window[0]), abs(window[1]))
    if f.dimension == 1:
        units = np.array([[-1.0], [1.0]])
        origin = np.zeros(1)
        f0, g0 = float(f(0.0)), np.atleast_1d(f.gradient(0.0))
    else:
        angles = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        units = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        origin = np.zeros(2)
        f0, g0 = float(f(origin)), np.asarray(f.gradient(origin))
    ratios = []
    for s in (w / 4.0, w / 2.0, w):
        points = origin + s * units
        values = f(points[:, 0]) if f.dimension == 1 else f(points)
        ratios.append(float(np.min((values - f0 - s * units @ g0) / s)))
    first, second = ratios[1] - ratios[0], ratios[2] - ratios[1]
    return bool(first > tolerance and second >= first * (1.0 - 1e-9) - tolerance)


def convexity_report(f: ScalarFunction, window: tuple,
                     tolerance: float = DEFAULT_TOLERANCE) -> ConvexityReport:
    return ConvexityReport(
        uniform_convexity=estimate_uniform_convexity(f, window, tolerance),
        semiconcavity=estimate_semiconcavity(f, window, tolerance),
        strictly_convex=is_strictly_convex(f, window),
        superlinear=is_superlinear(f, window, tolerance),
    )
