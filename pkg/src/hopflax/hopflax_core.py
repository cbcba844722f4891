# =================================================================================================
# Hopf-Lax solution operator
#
#   u(t, x) = min_y { sigma(y) + t H*((x - y) / t) }
#
# Minimizers are searched in velocity space, y = x - t v, on a grid shared by every query of a
# time slice: the H* term does not depend on x, so it is computed once per slice. Candidates
# (discrete local minima near the grid minimum) are grouped, polished with exact conjugate values
# and clustered into the minimizer set l(t, x).
# =================================================================================================

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np
import pandas as pd
from scipy.ndimage import minimum_filter
from scipy.spatial import cKDTree

from hopflax.convex_calculus import (
    check_convexity,
    is_strictly_convex,
    is_superlinear,
    legendre_transform,
)
from hopflax.exceptions import (
    HypothesisError,
    InputError,
    NotDifferentiableError,
    OutOfRangeError,
    WindowEscapeError,
)
from hopflax.ScalarFunction import ScalarFunction

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = (-4.0, 4.0)
DEFAULT_RESOLUTION = 2048
DEFAULT_RESOLUTION_2D = 256
DEFAULT_EPSILON = 1e-6
T_MIN = 1e-4
MAX_EXPANSIONS = 6
CLUSTER_STEPS = 3
MARGIN_STEPS = 4
VELOCITY_SAMPLES = 1025
POLISH_POINTS = (33, 9)
POLISH_ROUNDS = (9, 18)
CHUNK_SIZE = 2**21
SEMIGROUP_RESOLUTION_2D = 32


# =================================================================================================
# Types
# =================================================================================================


@dataclass(frozen=True)
class SearchBall:
    """Region holding every minimizer of the Hopf-Lax objective.

    Minimizers satisfy ``y = x - t H_p(q)`` with ``q`` a subgradient of sigma, so they lie in
    the ball of radius ``N(t, x) = |x| + t V`` plus a margin, where
    ``V = max{|H_p(q)| : |q| <= Lip(sigma) + 1}``.

    Parameters
    ----------
    lipschitz : float
        Lipschitz bound of the initial data on the problem window.
    velocity : float
        The bound ``V``.
    margin_steps : int
        Margin in scan steps.
    """

    lipschitz: float
    velocity: float
    margin_steps: int = MARGIN_STEPS

    def scale(self, nodes: int) -> float:
        """Half width of a velocity scan with ``nodes`` nodes per axis."""
        return self.velocity * (1.0 + 2.0 * self.margin_steps / (nodes - 1))

    def radius(self, t: float, x, nodes: int) -> float:
        step = 2.0 * self.scale(nodes) / (nodes - 1)
        speed = self.velocity + self.margin_steps * step
        return float(np.linalg.norm(np.atleast_1d(x))) + t * speed


@dataclass(frozen=True, eq=False)
class MinimizerSet:
    """The minimizer set l(t, x) as clusters of near-minimizers.

    Parameters
    ----------
    points : numpy.ndarray
        One representative per cluster, shape ``(k, d)``, sorted by coordinate.
    value : float
        Attained minimum u(t, x).
    tolerance : float
        Relative tolerance ``epsilon``: points within ``epsilon (1 + |u|)`` of the minimum count.
    spans : tuple
        ``(lower, upper)`` corners of each cluster.
    radius : float
        Cluster radius (three scan steps).
    boundary : bool
        True when the query was answered by the initial data (``t <= T_MIN``).
    """

    points: np.ndarray
    value: float
    tolerance: float
    spans: tuple = ()
    radius: float = 0.0
    boundary: bool = False

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def coordinates(self) -> np.ndarray:
        """Representatives as floats in 1-D, as rows in 2-D."""
        return self.points[:, 0] if self.dimension == 1 else self.points

    @property
    def extents(self) -> np.ndarray:
        return np.array([float(np.max(hi - lo)) for lo, hi in self.spans])

    @property
    def is_singleton(self) -> bool:
        return len(self.points) == 1 and self.extents[0] <= self.radius * (1.0 + 1e-9)

    def contains(self, y, tolerance: float = 1e-6) -> bool:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return any(
            np.all(y >= lo - tolerance) and np.all(y <= hi + tolerance) for lo, hi in self.spans
        )

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "spans": [[lo.tolist(), hi.tolist()] for lo, hi in self.spans],
            "value": self.value,
            "tolerance": self.tolerance,
            "singleton": self.is_singleton,
            "boundary": self.boundary,
        }


@dataclass(frozen=True, eq=False)
class GradientPair:
    """Space-time gradient ``(p_t, p)`` of u at a differentiable point."""

    p_t: float
    p: np.ndarray


@dataclass(eq=False)
class GridSolution:
    """Values, gradients and singleton flags of u on ``t_nodes x x_nodes``.

    Cells where the search escaped are NaN with ``failed`` set; gradients are NaN where l(t, x)
    is not a singleton.
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray
    p_t: np.ndarray
    p: np.ndarray
    singleton: np.ndarray
    failed: np.ndarray

    @property
    def dimension(self) -> int:
        return self.x_nodes.shape[1]

    def to_frame(self) -> pd.DataFrame:
        """Long format table, one row per (t, x) cell in row-major order."""
        names = ["x"] if self.dimension == 1 else ["x1", "x2"]
        gradient_names = ["p"] if self.dimension == 1 else ["p1", "p2"]
        nt, nx = self.values.shape
        data = {"t": np.repeat(self.t_nodes, nx)}
        for i, name in enumerate(names):
            data[name] = np.tile(self.x_nodes[:, i], nt)
        data["value"] = self.values.ravel()
        data["p_t"] = self.p_t.ravel()
        for i, name in enumerate(gradient_names):
            data[name] = self.p[..., i].ravel()
        data["singleton"] = self.singleton.ravel()
        data["failed"] = self.failed.ravel()
        return pd.DataFrame(data)


# =================================================================================================
# Problem
# =================================================================================================


def validate_hamiltonian(hamiltonian: ScalarFunction, window: tuple):
    """Refuse Hamiltonians failing the convexity, strict convexity or superlinearity verdicts."""
    witness = check_convexity(hamiltonian, window)
    if witness is not None:
        raise HypothesisError(f"Hamiltonian is not convex on {window}: {witness}", witness)
    if not is_strictly_convex(hamiltonian, window):
        raise HypothesisError(f"Hamiltonian is not strictly convex on {window}")
    if not is_superlinear(hamiltonian, window):
        raise HypothesisError(f"Hamiltonian does not grow superlinearly on {window}")


def _search_ball(hamiltonian: ScalarFunction, sigma: ScalarFunction, window: tuple) -> SearchBall:
    lipschitz = sigma.lipschitz_on(window)
    if not np.isfinite(lipschitz):
        raise InputError("Initial data is not Lipschitz on the window, supply a lipschitz bound")
    q = np.linspace(-(lipschitz + 1.0), lipschitz + 1.0, VELOCITY_SAMPLES)
    velocity = max(
        float(np.max(np.abs(component.gradient(q))))
        for component in (hamiltonian.separable_components() or [hamiltonian])
    )
    return SearchBall(lipschitz, velocity)


@dataclass(frozen=True)
class Problem:
    """Cauchy problem ``u_t + H(D_x u) = 0``, ``u(0, .) = sigma`` on ``(0, T]``.

    With ``concave=True`` the Hamiltonian is a concave ``K``; the problem is then solved through
    its convex counterpart ``H(p) = -K(-p)`` with data ``-sigma`` and the max-form value
    ``u = max_y {sigma(y) - t (-K)*((y - x) / t)}`` is reported.

    Parameters
    ----------
    hamiltonian : ScalarFunction
        H (or K when concave).
    initial_data : ScalarFunction
        sigma, continuous.
    horizon : float
        T > 0.
    window : tuple, optional
        Window on which Lip(sigma) is estimated.
    h_window : tuple, optional
        Window of the convexity verdicts on H.
    resolution : int, optional
        Scan intervals per axis (2048 in 1-D, 256 in 2-D).
    epsilon : float, optional
        Relative near-minimizer tolerance.
    concave : bool, optional
        The Hamiltonian is concave.
    validate : bool, optional
        Run the convexity verdicts on H.
    """

    hamiltonian: ScalarFunction
    initial_data: ScalarFunction
    horizon: float
    window: tuple = DEFAULT_WINDOW
    h_window: tuple = DEFAULT_WINDOW
    resolution: int = None
    epsilon: float = DEFAULT_EPSILON
    concave: bool = False
    validate: bool = True
    search: SearchBall = field(init=False, repr=False)
    dual: object = field(init=False, repr=False)
    counterpart: "Problem" = field(init=False, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise InputError(f"Horizon must be finite and positive, got {self.horizon}")
        if self.hamiltonian.dimension != self.initial_data.dimension:
            raise InputError("Hamiltonian and initial data must have the same dimension")
        if self.resolution is None:
            default = DEFAULT_RESOLUTION if self.dimension == 1 else DEFAULT_RESOLUTION_2D
            object.__setattr__(self, "resolution", default)
        if self.resolution < 16:
            raise InputError(f"Resolution must be at least 16, got {self.resolution}")
        if self.epsilon <= 0:
            raise InputError(f"Epsilon must be positive, got {self.epsilon}")
        convex = self.convex_hamiltonian
        if self.validate:
            validate_hamiltonian(convex, self.h_window)
        if self.concave:
            counterpart = Problem(convex, self.initial_data.negated(), self.horizon, self.window,
                                  self.h_window, self.resolution, self.epsilon, validate=False)
            object.__setattr__(self, "counterpart", counterpart)
            object.__setattr__(self, "search", counterpart.search)
            object.__setattr__(self, "dual", counterpart.dual)
        else:
            object.__setattr__(self, "counterpart", None)
            object.__setattr__(self, "dual", legendre_transform(convex))
            object.__setattr__(self, "search", _search_ball(convex, self.initial_data, self.window))

    @property
    def dimension(self) -> int:
        return self.hamiltonian.dimension

    @property
    def convex_hamiltonian(self) -> ScalarFunction:
        if self.concave:
            return self.hamiltonian.negated().reflected()
        return self.hamiltonian

    def hamiltonian_at(self, p) -> np.ndarray:
        """H(p) (or K(p)) for ``p`` of shape ``(..., d)``."""
        p = np.asarray(p, dtype=float)
        return self.hamiltonian(p[..., 0] if self.dimension == 1 else p)

    def initial_at(self, y) -> np.ndarray:
        """sigma(y) for ``y`` of shape ``(..., d)``."""
        return _evaluator(self.initial_data)(np.asarray(y, dtype=float))

    def velocity_at(self, q) -> np.ndarray:
        """H_p(q) of the convex Hamiltonian for ``q`` of shape ``(..., d)``."""
        q = np.asarray(q, dtype=float)
        convex = self.convex_hamiltonian
        if self.dimension == 1:
            return convex.gradient(q[..., 0])[..., None]
        return convex.gradient(q)

    def conjugate(self, z, exact: bool = True):
        """``(H*(z), H*_z(z))`` of the convex Hamiltonian for ``z`` of shape ``(..., d)``."""
        z = np.asarray(z, dtype=float)
        if self.dimension == 1:
            value, p = self.dual.exact(z[..., 0]) if exact else (self.dual(z[..., 0]), None)
            return value, (None if p is None else p[..., None])
        if exact:
            return self.dual.exact(z)
        return self.dual(z), None


# =================================================================================================
# Search engine
# =================================================================================================


def as_points(prob: Problem, x) -> np.ndarray:
    """Queries as rows of shape ``(m, d)``."""
    points = np.asarray(x, dtype=float).reshape(-1, prob.dimension)
    if not np.all(np.isfinite(points)):
        raise InputError("Query points must be finite")
    return points


def check_time(prob: Problem, t) -> float:
    t = float(t)
    if not np.isfinite(t) or t <= 0:
        raise InputError(f"Time must be positive, got {t}")
    if t > prob.horizon * (1.0 + 1e-12):
        raise OutOfRangeError(f"Time {t} beyond the horizon T={prob.horizon}")
    return t


def _unit_grid(dimension: int, nodes: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, nodes)
    if dimension == 1:
        return axis[:, None]
    return np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)


def _evaluator(f: ScalarFunction):
    if f.dimension == 1:
        return lambda y: f(y[..., 0])
    return f


def _objective(prob, t, x, v, sigma, exact=True) -> np.ndarray:
    values = sigma(x - t * v) + t * prob.conjugate(v, exact)[0]
    return np.where(np.isnan(values), np.inf, values)


def cluster_points(points: np.ndarray, radius: float) -> list:
    """Connected components of the graph linking rows of ``points`` within ``radius`` (sup norm).

    Components are lists of row indices, ordered by their smallest index.
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(len(points)))
    if len(points) > 1:
        graph.add_edges_from(cKDTree(points).query_pairs(radius * (1.0 + 1e-9), p=np.inf))
    return sorted((sorted(component) for component in nx.connected_components(graph)),
                  key=lambda component: component[0])


def _scan(prob, t, x, sigma, nodes):
    """Objective on the velocity grid; rows whose argmin sits on the grid boundary are expanded."""
    unit = _unit_grid(prob.dimension, nodes)
    on_boundary = np.any(np.abs(unit) == 1.0, axis=-1)
    values = np.empty((len(x), len(unit)))
    scale = np.full(len(x), prob.search.scale(nodes))
    pending = np.arange(len(x))
    chunk = max(1, CHUNK_SIZE // len(unit))
    for level in range(MAX_EXPANSIONS + 1):
        v = scale[pending[0]] * unit
        dual_term = t * prob.conjugate(v, exact=False)[0]
        for start in range(0, len(pending), chunk):
            rows = pending[start:start + chunk]
            block = sigma(x[rows, None, :] - t * v[None, :, :]) + dual_term[None, :]
            values[rows] = np.where(np.isnan(block), np.inf, block)
        escaped = pending[on_boundary[np.argmin(values[pending], axis=1)]]
        if len(escaped) == 0:
            return values, scale, np.zeros(len(x), dtype=bool)
        if level < MAX_EXPANSIONS:
            logger.debug(f"{len(escaped)} minimizers on the search boundary at t={t}, expanding")
            scale[escaped] *= 2.0
            pending = escaped
    failed = np.zeros(len(x), dtype=bool)
    failed[escaped] = True
    return values, scale, failed


def _local_minima(values: np.ndarray, nodes: int, dimension: int) -> np.ndarray:
    if dimension == 1:
        return values <= minimum_filter(values, size=(1, 3), mode="nearest")
    shaped = values.reshape(len(values), nodes, nodes)
    filtered = minimum_filter(shaped, size=(1, 3, 3), mode="nearest")
    return (shaped <= filtered).reshape(len(values), -1)


def _polish(prob, t, x, centers, widths, sigma):
    """Zoom search around ``centers`` with exact conjugate values; returns velocities and values."""
    d = prob.dimension
    points = POLISH_POINTS[d - 1]
    offsets = _unit_grid(d, points)
    widths = widths.copy()
    for _ in range(POLISH_ROUNDS[d - 1]):
        v = centers[:, None, :] + widths[:, None, None] * offsets[None, :, :]
        values = _objective(prob, t, x[:, None, :], v, sigma)
        centers = v[np.arange(len(v)), np.argmin(values, axis=1)]
        widths = widths * 2.0 / (points - 1)
    return centers, _objective(prob, t, x, centers, sigma)


def _minimizer_sets(prob, t, x, epsilon=None, sigma=None, nodes=None) -> list:
    """Minimizer sets of the rows of ``x`` at time ``t``, None where the search escaped."""
    epsilon = prob.epsilon if epsilon is None else epsilon
    sigma = sigma or _evaluator(prob.initial_data)
    nodes = nodes or prob.resolution + 1
    d = prob.dimension
    if len(x) == 0:
        return []
    if t <= T_MIN:
        logger.warning(f"t={t} is in the boundary regime (t <= {T_MIN}): u(t, x) = sigma(x)")
        values = sigma(x)
        return [
            MinimizerSet(x[i:i + 1].copy(), float(values[i]), epsilon, ((x[i], x[i]),), 0.0, True)
            for i in range(len(x))
        ]

    values, scale, failed = _scan(prob, t, x, sigma, nodes)
    unit = _unit_grid(d, nodes)
    unit_step = 2.0 / (nodes - 1)
    step = scale * unit_step
    minima = _local_minima(values, nodes, d)
    best = np.min(values, axis=1)
    slack = t * step * np.sqrt(d) * (prob.search.lipschitz + prob.search.velocity + 1.0)
    threshold = best + epsilon * (1.0 + np.abs(best)) + slack

    rows, centers, spans = [], [], []
    for i in np.flatnonzero(~failed):
        index = np.flatnonzero(minima[i] & (values[i] <= threshold[i]))
        for component in cluster_points(unit[index], CLUSTER_STEPS * unit_step):
            members = index[component]
            y = x[i] - t * scale[i] * unit[members]
            rows.append(i)
            centers.append(scale[i] * unit[members[np.argmin(values[i, members])]])
            spans.append((y.min(axis=0), y.max(axis=0)))
    rows = np.asarray(rows, dtype=int)
    polished, polished_values = _polish(prob, t, x[rows], np.asarray(centers).reshape(-1, d),
                                        step[rows], sigma)

    sets = []
    for i in range(len(x)):
        if failed[i]:
            sets.append(None)
            continue
        mine = np.flatnonzero(rows == i)
        u = float(np.min(polished_values[mine]))
        keep = mine[polished_values[mine] <= u + epsilon * (1.0 + abs(u))]
        y = x[i] - t * polished[keep]
        radius = CLUSTER_STEPS * t * step[i]
        groups = []
        for component in cluster_points(y, radius):
            members = keep[component]
            lower = np.min([spans[k][0] for k in members] + [y[component].min(axis=0)], axis=0)
            upper = np.max([spans[k][1] for k in members] + [y[component].max(axis=0)], axis=0)
            groups.append((y[component[np.argmin(polished_values[members])]], (lower, upper)))
        groups.sort(key=lambda group: tuple(group[0]))
        points = np.array([group[0] for group in groups])
        sets.append(MinimizerSet(points, u, epsilon, tuple(g[1] for g in groups), radius))
    return sets


def _solve(prob: Problem, t: float, points: np.ndarray, epsilon=None) -> list:
    if prob.concave:
        sets = _solve(prob.counterpart, t, points, epsilon)
        return [None if s is None else replace(s, value=-s.value) for s in sets]
    return _minimizer_sets(prob, t, points, epsilon)


def _escape(t, point) -> WindowEscapeError:
    return WindowEscapeError(
        f"Minimizer at t={t}, x={point.tolist()} left the search ball after {MAX_EXPANSIONS} "
        f"expansions: H and sigma violate the compatibility condition"
    )


# =================================================================================================
# Public operations
# =================================================================================================


def hopf_lax_objective(prob: Problem, t: float, x, y) -> np.ndarray:
    """zeta(t, x, y) = sigma(y) + t H*((x - y) / t) (max-form objective for concave problems)."""
    if prob.concave:
        return -hopf_lax_objective(prob.counterpart, t, x, y)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if prob.dimension == 1:
        x, y = x[..., None], y[..., None]
    value = _evaluator(prob.initial_data)(y) + t * prob.conjugate((x - y) / t)[0]
    return value


def value_batch(prob: Problem, t: float, xs, epsilon: float = None) -> np.ndarray:
    """u(t, x) at every query of ``xs`` (shape ``(...)`` in 1-D, ``(..., 2)`` in 2-D)."""
    t = check_time(prob, t)
    points = as_points(prob, xs)
    sets = _solve(prob, t, points, epsilon)
    for point, minimizers in zip(points, sets):
        if minimizers is None:
            raise _escape(t, point)
    shape = np.shape(xs) if prob.dimension == 1 else np.shape(xs)[:-1]
    return np.array([s.value for s in sets]).reshape(shape)


def evaluate(prob: Problem, t: float, x) -> float:
    """The Hopf-Lax value u(t, x).

    Raises
    ------
    WindowEscapeError
        The minimizer stayed on the search boundary after the last expansion.
    """
    return float(value_batch(prob, t, x))


def minimizer_set(prob: Problem, t: float, x, epsilon: float = None) -> MinimizerSet:
    t = check_time(prob, t)
    points = as_points(prob, x)
    minimizers = _solve(prob, t, points[:1], epsilon)[0]
    if minimizers is None:
        raise _escape(t, points[0])
    return minimizers


def _gradient(prob: Problem, t: float, x: np.ndarray, minimizers: MinimizerSet) -> GradientPair:
    if prob.concave:
        flipped = replace(minimizers, value=-minimizers.value)
        pair = _gradient(prob.counterpart, t, x, flipped)
        return GradientPair(-pair.p_t, -pair.p)
    if minimizers.boundary:
        f = prob.initial_data
        p = np.atleast_1d(f.gradient(x[0] if prob.dimension == 1 else x)).astype(float)
        return GradientPair(-float(prob.hamiltonian_at(p)), p)
    v = (x - minimizers.points[0]) / t
    value, p = prob.conjugate(v)
    return GradientPair(float(value - np.dot(v, p)), np.asarray(p, dtype=float))


def gradient_at(prob: Problem, t: float, x, epsilon: float = None) -> GradientPair:
    """Gradient of u where l(t, x) is a singleton {y0}.

    With ``v = (x - y0) / t``: ``p = H*_z(v)`` and ``p_t = H*(v) - <v, p>``, equivalently
    ``p_t = -H(p)``.

    Raises
    ------
    NotDifferentiableError
        l(t, x) is not a singleton; the exception carries the minimizer set.
    """
    minimizers = minimizer_set(prob, t, x, epsilon)
    if not minimizers.is_singleton:
        raise NotDifferentiableError(
            f"u is not differentiable at t={t}, x={x}: {len(minimizers)} minimizer clusters",
            minimizers,
        )
    return _gradient(prob, float(t), as_points(prob, x)[0], minimizers)


def _solve_slice(prob, t, points, epsilon):
    d = prob.dimension
    n = len(points)
    values = np.full(n, np.nan)
    p_t = np.full(n, np.nan)
    p = np.full((n, d), np.nan)
    singleton = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    for i, minimizers in enumerate(_solve(prob, t, points, epsilon)):
        if minimizers is None:
            logger.warning(f"Search escaped at t={t}, x={points[i].tolist()}, cell flagged")
            failed[i] = True
            continue
        values[i] = minimizers.value
        if minimizers.is_singleton:
            singleton[i] = True
            pair = _gradient(prob, t, points[i], minimizers)
            p_t[i], p[i] = pair.p_t, pair.p
    return values, p_t, p, singleton, failed


def solve_grid(prob: Problem, t_nodes, x_nodes, epsilon: float = None,
               jobs: int = 1) -> GridSolution:
    """u, its gradient and the singleton flag on ``t_nodes x x_nodes``.

    Time slices run on a pool of ``jobs`` threads and are merged in node order, so the result
    does not depend on ``jobs``.
    """
    assert jobs >= 1, f"jobs must be positive, got {jobs}"
    t_nodes = np.asarray(t_nodes, dtype=float).ravel()
    points = as_points(prob, x_nodes)
    for t in t_nodes:
        check_time(prob, t)
    logger.info("Start - solve_grid")
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        slices = list(executor.map(lambda t: _solve_slice(prob, t, points, epsilon), t_nodes))
    logger.info("End - solve_grid")
    d = prob.dimension
    if not slices:
        empty = np.empty((0, len(points)))
        return GridSolution(t_nodes, points, empty, empty.copy(), np.empty((0, len(points), d)),
                            empty.astype(bool), empty.astype(bool))
    values, p_t, p, singleton, failed = (np.stack(part) for part in zip(*slices))
    return GridSolution(t_nodes, points, values, p_t, p, singleton, failed)


def semigroup_check(prob: Problem, s: float, t: float, x) -> float:
    """``|u(t, x) - min_y {u(s, y) + (t - s) H*((x - y) / (t - s))}|`` for ``0 < s < t <= T``."""
    if not 0 < s < t <= prob.horizon:
        raise InputError(f"Need 0 < s < t <= T, got s={s}, t={t}, T={prob.horizon}")
    if prob.concave:
        return semigroup_check(prob.counterpart, s, t, x)
    point = as_points(prob, x)[:1]
    direct = evaluate(prob, t, x)
    d = prob.dimension

    def intermediate(y):
        flat = y.reshape(-1, d)
        return value_batch(prob, s, flat[:, 0] if d == 1 else flat).reshape(y.shape[:-1])

    nodes = prob.resolution + 1 if d == 1 else SEMIGROUP_RESOLUTION_2D + 1
    composed = _minimizer_sets(prob, t - s, point, sigma=intermediate, nodes=nodes)[0]
    if composed is None:
        raise _escape(t - s, point[0])
    return abs(direct - composed.value)


def evaluate_concave(prob: Problem, t: float, x) -> float:
    """Max-form value ``max_y {sigma(y) - t (-K)*((y - x) / t)}`` of a concave problem."""
    if not prob.concave:
        raise InputError("evaluate_concave needs a problem built with concave=True")
    return evaluate(prob, t, x)
