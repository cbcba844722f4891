# =================================================================================================
# Scalar functions of one or two real variables.
#
# Three representations share one interface:
#   - expression: a closed-form AST of the problem-file grammar,
#   - piecewise: an AST whose root is a piecewise node (one variable only),
#   - grid: samples on a uniform grid, linearly interpolated and extrapolated.
# =================================================================================================

import logging

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from hopflax import expression as ex
from hopflax.exceptions import InputError, UnsupportedInputError

logger = logging.getLogger(__name__)

ONE_D_VARIABLES = ("x", "p", "y", "z")
SAMPLE_NODES = 4097
SAMPLE_NODES_2D = 129
KINK_TOLERANCE = 1e-9


class ScalarFunction:
    """A real function of ``dimension`` variables.

    Use the ``from_expression``, ``from_pieces`` and ``from_grid`` constructors.

    Parameters
    ----------
    kind : str
        One of "expression", "piecewise", "grid".
    dimension : int
        1 or 2.
    ast : AST node, optional
        Expression tree (expression and piecewise kinds).
    variables : tuple of str, optional
        Names bound to the coordinates, in order.
    nodes : tuple of numpy.ndarray, optional
        Grid axes (grid kind).
    values : numpy.ndarray, optional
        Grid values (grid kind).
    lipschitz : float, optional
        User supplied Lipschitz bound.
    """

    KINDS = ("expression", "piecewise", "grid")
    SEP = " | "

    def __init__(
        self,
        kind: str,
        dimension: int = 1,
        ast=None,
        variables: tuple = None,
        nodes: tuple = None,
        values: np.ndarray = None,
        lipschitz: float = None,
    ):
        assert kind in self.KINDS, f"Unknown representation: {kind}"
        if dimension not in (1, 2):
            raise UnsupportedInputError(f"Only dimensions 1 and 2 are supported, got {dimension}")
        if lipschitz is not None and lipschitz < 0:
            raise InputError(f"Lipschitz bound must be nonnegative, got {lipschitz}")
        self._kind = kind
        self._dimension = dimension
        self._ast = ast
        self._variables = variables
        self._nodes = nodes
        self._values = values
        self._lipschitz = lipschitz
        self._interpolator = None
        if kind == "grid" and dimension == 2:
            self._interpolator = RegularGridInterpolator(
                nodes, values, method="linear", bounds_error=False, fill_value=None
            )

    # Constructors --------------------------------------------------------------------------------

    @classmethod
    def from_expression(cls, source, dimension: int = None, lipschitz: float = None):
        """Build from expression text (or an already parsed AST)."""
        ast = ex.parse_expression(source) if isinstance(source, str) else source
        names = sorted(ex.free_variables(ast))
        indexed = [name for name in names if name[-1] in "12"]
        if dimension is None:
            dimension = 2 if indexed else 1
        if dimension == 1:
            if indexed or len(names) > 1:
                raise InputError(f"A function of one variable was expected, got {names}")
            variables = (names[0] if names else "x",)
        else:
            prefixes = {name[0] for name in names}
            if len(prefixes) > 1 or (names and not indexed) or len(indexed) != len(names):
                raise InputError(f"Variables of a 2-D function must be x1, x2 or p1, p2: {names}")
            prefix = prefixes.pop() if prefixes else "x"
            variables = (f"{prefix}1", f"{prefix}2")
        if ex.contains_piecewise(ast) and dimension != 1:
            raise UnsupportedInputError("piecewise expressions are one dimensional")
        kind = "piecewise" if isinstance(ast, ex.Piecewise) else "expression"
        return cls(kind, dimension, ast=ast, variables=variables, lipschitz=lipschitz)

    @classmethod
    def from_pieces(cls, breakpoints, pieces, variable: str = "x", lipschitz: float = None):
        """Piecewise function with ``len(pieces) == len(breakpoints) + 1`` smooth pieces.

        The first and last pieces extend to infinity.
        """
        breakpoints = [float(b) for b in breakpoints]
        if len(pieces) != len(breakpoints) + 1:
            raise InputError("A piecewise function needs one piece more than breakpoints")
        if any(b >= c for b, c in zip(breakpoints, breakpoints[1:])):
            raise InputError("Breakpoints must be strictly increasing")
        asts = [ex.parse_expression(p) if isinstance(p, str) else p for p in pieces]
        bounds = [-np.inf] + breakpoints + [np.inf]
        ast = ex.Piecewise(tuple(
            (bounds[i], bounds[i + 1], asts[i]) for i in range(len(asts))
        ))
        for name in ex.free_variables(ast):
            if name != variable:
                raise InputError(f"Piece uses variable {name!r}, expected {variable!r}")
        return cls("piecewise", 1, ast=ast, variables=(variable,), lipschitz=lipschitz)

    @classmethod
    def from_grid(cls, nodes, values, lipschitz: float = None):
        """Samples on a uniform grid.

        Parameters
        ----------
        nodes : array-like or tuple of array-like
            Strictly increasing, uniformly spaced axis (one per dimension).
        values : array-like
            Finite samples, shape matching the axes.
        """
        if isinstance(nodes, tuple):
            axes = tuple(np.asarray(axis, dtype=float) for axis in nodes)
        else:
            axes = (np.asarray(nodes, dtype=float),)
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(len(axis) for axis in axes):
            raise InputError(f"Grid values of shape {values.shape} do not match the axes")
        for axis in axes:
            if len(axis) < 2:
                raise InputError("A grid needs at least two nodes per axis")
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise InputError("Grid nodes must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])):
                raise InputError("Grid nodes must be uniformly spaced")
        if not np.all(np.isfinite(values)):
            raise InputError("Grid values must be finite")
        return cls("grid", len(axes), nodes=axes, values=values, lipschitz=lipschitz)

    # Properties ----------------------------------------------------------------------------------

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def ast(self):
        return self._ast

    @property
    def variables(self) -> tuple:
        return self._variables

    @property
    def nodes(self):
        return self._nodes[0] if self._dimension == 1 and self._nodes else self._nodes

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def lipschitz(self):
        return self._lipschitz

    @property
    def window(self):
        """Sample window of grid functions, None otherwise."""
        if self._kind != "grid":
            return None
        return (float(self._nodes[0][0]), float(self._nodes[0][-1]))

    @property
    def step(self):
        if self._kind != "grid":
            return None
        return float(self._nodes[0][1] - self._nodes[0][0])

    def __repr__(self) -> str:
        return f"ScalarFunction({self.to_string()})"

    def to_string(self) -> str:
        if self._kind == "grid":
            shape = "x".join(str(len(axis)) for axis in self._nodes)
            return f"grid{self.SEP}{shape}{self.SEP}{self.window}"
        return f"{self._kind}{self.SEP}{ex.print_expression(self._ast)}"

    # Evaluation ----------------------------------------------------------------------------------

    def _env(self, points: np.ndarray) -> dict:
        if self._dimension == 1:
            return {self._variables[0]: points}
        return {self._variables[0]: points[..., 0], self._variables[1]: points[..., 1]}

    def __call__(self, points) -> np.ndarray:
        """Evaluate at ``points`` (any shape in 1-D, shape ``(..., 2)`` in 2-D)."""
        points = np.asarray(points, dtype=float)
        if self._kind == "grid":
            if self._dimension == 1:
                return self._interp(points)
            return self._interpolator(points)
        return np.broadcast_to(ex.evaluate(self._ast, self._env(points)),
                               points.shape if self._dimension == 1 else points.shape[:-1])

    def _interp(self, y: np.ndarray) -> np.ndarray:
        x, v = self._nodes[0], self._values
        out = np.interp(y, x, v)
        left_slope = (v[1] - v[0]) / (x[1] - x[0])
        right_slope = (v[-1] - v[-2]) / (x[-1] - x[-2])
        out = np.where(y < x[0], v[0] + left_slope * (y - x[0]), out)
        return np.where(y > x[-1], v[-1] + right_slope * (y - x[-1]), out)

    def directional(self, points, direction) -> np.ndarray:
        """One-sided directional derivative along ``direction`` at ``points``."""
        points = np.asarray(points, dtype=float)
        direction = np.asarray(direction, dtype=float)
        if self._kind == "grid":
            return self._grid_directional(points, direction)
        if self._dimension == 1:
            tangent = {self._variables[0]: np.broadcast_to(direction, points.shape)}
        else:
            tangent = {self._variables[0]: direction[..., 0], self._variables[1]: direction[..., 1]}
        _, slope = ex.directional_derivative(self._ast, self._env(points), tangent)
        shape = points.shape if self._dimension == 1 else points.shape[:-1]
        return np.broadcast_to(slope, np.broadcast_shapes(shape, np.shape(slope)))

    def _grid_directional(self, points, direction):
        if self._dimension == 2:
            step = min(axis[1] - axis[0] for axis in self._nodes) * 1e-3
            return (self(points + step * direction) - self(points)) / step
        x, v = self._nodes[0], self._values
        slopes = np.diff(v) / np.diff(x)
        forward = direction >= 0
        right = np.clip(np.searchsorted(x, points, side="right") - 1, 0, len(slopes) - 1)
        left = np.clip(np.searchsorted(x, points, side="left") - 1, 0, len(slopes) - 1)
        index = np.where(forward, right, left)
        return slopes[index] * direction

    def one_sided_derivatives(self, y):
        """Left and right derivatives ``(f'(y-), f'(y+))`` of a one variable function."""
        if self._dimension != 1:
            raise UnsupportedInputError("One-sided derivatives are defined in 1-D only")
        y = np.asarray(y, dtype=float)
        d_plus = self.directional(y, 1.0)
        d_minus = -self.directional(y, -1.0)
        return np.asarray(d_minus, dtype=float), np.asarray(d_plus, dtype=float)

    def gradient(self, points) -> np.ndarray:
        """Mean of the one-sided derivatives (per axis in 2-D)."""
        points = np.asarray(points, dtype=float)
        if self._dimension == 1:
            d_minus, d_plus = self.one_sided_derivatives(points)
            return 0.5 * (d_minus + d_plus)
        parts = []
        for axis in np.eye(2):
            forward = self.directional(points, axis)
            backward = -self.directional(points, -axis)
            parts.append(0.5 * (forward + backward))
        return np.stack(parts, axis=-1)

    # Structure -----------------------------------------------------------------------------------

    def breakpoints(self, window: tuple) -> np.ndarray:
        """Genuine kinks (left and right derivatives differ) inside ``window``."""
        if self._dimension != 1:
            raise UnsupportedInputError("Breakpoints are defined in 1-D only")
        if self._kind == "grid":
            x = self._nodes[0]
            candidates = x[(x > window[0]) & (x < window[1])]
            tolerance = 1e-6
        else:
            candidates = ex.kink_candidates(self._ast, self._variables[0], window)
            tolerance = KINK_TOLERANCE
        if len(candidates) == 0:
            return candidates
        d_minus, d_plus = self.one_sided_derivatives(candidates)
        jump = np.abs(d_plus - d_minus)
        scale = 1.0 + np.maximum(np.abs(d_minus), np.abs(d_plus))
        keep = ~(jump <= tolerance * scale)  # infinite or nan jumps are kinks too
        return candidates[keep]

    def axis_lipschitz(self, window: tuple) -> np.ndarray:
        """Per-axis Lipschitz bounds on ``window`` (user bound if supplied)."""
        if self._lipschitz is not None:
            return np.full(self._dimension, float(self._lipschitz))
        if self._kind == "grid":
            if self._dimension == 1:
                return np.array([np.max(np.abs(np.diff(self._values) / np.diff(self._nodes[0])))])
            return np.array([
                np.max(np.abs(np.diff(self._values, axis=i))) / (axis[1] - axis[0])
                for i, axis in enumerate(self._nodes)
            ])
        if self._dimension == 1:
            y = np.linspace(window[0], window[1], SAMPLE_NODES)
            d_minus, d_plus = self.one_sided_derivatives(y)
            slopes = np.abs(np.concatenate([d_minus, d_plus]))
            return np.array([np.max(slopes[np.isfinite(slopes)], initial=0.0)])
        axis = np.linspace(window[0], window[1], SAMPLE_NODES_2D)
        points = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
        bounds = []
        for direction in np.eye(2):
            slopes = np.abs(np.concatenate([
                np.ravel(self.directional(points, direction)),
                np.ravel(self.directional(points, -direction)),
            ]))
            bounds.append(np.max(slopes[np.isfinite(slopes)], initial=0.0))
        return np.array(bounds)

    def lipschitz_on(self, window: tuple) -> float:
        return float(np.linalg.norm(self.axis_lipschitz(window)))

    def separable_components(self):
        """Per-coordinate 1-D functions when ``f(v1, v2) = f1(v1) + f2(v2)``, else None."""
        if self._dimension == 1:
            return [self]
        if self._kind == "grid":
            return None
        parts = ex.split_separable(self._ast, self._variables)
        if parts is None:
            return None
        return [
            ScalarFunction.from_expression(
                ex.substitute(part, name, ex.Variable(self._variables[0][0])), 1
            )
            for part, name in zip(parts, self._variables)
        ]

    @property
    def is_separable(self) -> bool:
        return self.separable_components() is not None

    # Transformations -----------------------------------------------------------------------------

    def negated(self) -> "ScalarFunction":
        """The function ``-f``."""
        if self._kind == "grid":
            return ScalarFunction("grid", self._dimension, nodes=self._nodes, values=-self._values,
                                  lipschitz=self._lipschitz)
        return ScalarFunction(self._kind, self._dimension, ast=ex.UnaryOp("neg", self._ast),
                              variables=self._variables, lipschitz=self._lipschitz)

    def reflected(self) -> "ScalarFunction":
        """The function ``v -> f(-v)``."""
        if self._kind == "grid":
            axes = tuple(-axis[::-1] for axis in self._nodes)
            values = self._values[tuple(slice(None, None, -1) for _ in axes)]
            return ScalarFunction("grid", self._dimension, nodes=axes, values=values.copy(),
                                  lipschitz=self._lipschitz)
        ast = self._ast
        for name in self._variables:
            ast = ex.substitute(ast, name, ex.UnaryOp("neg", ex.Variable(name)))
        return ScalarFunction(self._kind, self._dimension, ast=ast, variables=self._variables,
                              lipschitz=self._lipschitz)

    def sampled(self, window: tuple, nodes: int = SAMPLE_NODES) -> "ScalarFunction":
        """Grid representation of a one variable function on ``window``."""
        if self._dimension != 1:
            raise UnsupportedInputError("sampled() is defined in 1-D only")
        x = np.linspace(window[0], window[1], nodes)
        return ScalarFunction.from_grid(x, self(x), lipschitz=self._lipschitz)
