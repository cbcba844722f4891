# =================================================================================================
# Problem files, candidate grids and report emission.
#
# Problem files are INI files:
#
#   [problem]   hamiltonian, sigma (or terminal), horizon, dimension, lipschitz, concave
#   [grid]      x_min, x_max, x_nodes, t_nodes
#   [solver]    resolution, tolerance, epsilon
#   [queries]   points = t x; t x ...    curves = y q; y q ...
# =================================================================================================

import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hopflax import hopflax_core as core
from hopflax.exceptions import InputError
from hopflax.ScalarFunction import ScalarFunction
from hopflax.viscosity_verify import GridCandidate

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MIN_RESOLUTION = 16


def _floats(text: str, key: str) -> list:
    """``"1 0; 1 0.5"`` as ``[(1.0, 0.0), (1.0, 0.5)]``."""
    rows = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append(tuple(float(value) for value in chunk.split()))
        except ValueError as error:
            raise InputError(f"Malformed entry {chunk!r} in {key}: {error}") from error
    return rows


@dataclass
class ProblemSpec:
    """Content of a problem file.

    ``sigma`` holds the initial data, or the terminal data g when the file gives ``terminal``
    (``terminal`` is then True). Grid and solver entries fall back to the solver defaults.
    """

    hamiltonian: str
    sigma: str
    horizon: float
    dimension: int = 1
    terminal: bool = False
    concave: bool = False
    lipschitz: float = None
    x_min: float = -2.0
    x_max: float = 2.0
    x_nodes: int = 65
    t_nodes: int = 9
    resolution: int = None
    tolerance: float = 1e-6
    epsilon: float = core.DEFAULT_EPSILON
    points: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    path: str = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise InputError(f"horizon must be positive, got {self.horizon}")
        if self.dimension not in (1, 2):
            raise InputError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.resolution is not None and self.resolution < MIN_RESOLUTION:
            raise InputError(f"resolution must be at least {MIN_RESOLUTION}, got {self.resolution}")
        if not self.x_min < self.x_max:
            raise InputError(f"Empty grid window [{self.x_min}, {self.x_max}]")
        if self.x_nodes < 1 or self.t_nodes < 1:
            raise InputError("Grid node counts must be positive")
        width = 1 + self.dimension
        for point in self.points:
            if len(point) != width:
                raise InputError(f"Query point {point} needs {width} numbers (t and x)")
        for curve in self.curves:
            if len(curve) != 2 * self.dimension:
                raise InputError(f"Curve {curve} needs {2 * self.dimension} numbers (y and q)")

    @classmethod
    def from_file(cls, path: str) -> "ProblemSpec":
        if not os.path.isfile(path):
            raise InputError(f"Problem file does not exist: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read(path)
        except configparser.Error as error:
            raise InputError(f"Malformed problem file {path}: {error}") from error
        return cls.from_parser(parser, path)

    @classmethod
    def from_string(cls, text: str) -> "ProblemSpec":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read_string(text)
        except configparser.Error as error:
            raise InputError(f"Malformed problem file: {error}") from error
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, path: str = None) -> "ProblemSpec":
        if not parser.has_section("problem"):
            raise InputError("Problem file has no [problem] section")
        problem = parser["problem"]
        for key in ("hamiltonian", "horizon"):
            if key not in problem:
                raise InputError(f"Missing field {key!r} in [problem]")
        if ("sigma" in problem) == ("terminal" in problem):
            raise InputError("[problem] needs exactly one of 'sigma' and 'terminal'")
        grid = parser["grid"] if parser.has_section("grid") else {}
        solver = parser["solver"] if parser.has_section("solver") else {}
        queries = parser["queries"] if parser.has_section("queries") else {}
        try:
            return cls(
                hamiltonian=problem["hamiltonian"],
                sigma=problem.get("sigma", problem.get("terminal")),
                horizon=problem.getfloat("horizon"),
                dimension=problem.getint("dimension", 1),
                terminal="terminal" in problem,
                concave=problem.getboolean("concave", False),
                lipschitz=problem.getfloat("lipschitz", None),
                x_min=float(grid.get("x_min", -2.0)),
                x_max=float(grid.get("x_max", 2.0)),
                x_nodes=int(grid.get("x_nodes", 65)),
                t_nodes=int(grid.get("t_nodes", 9)),
                resolution=int(solver["resolution"]) if "resolution" in solver else None,
                tolerance=float(solver.get("tolerance", 1e-6)),
                epsilon=float(solver.get("epsilon", core.DEFAULT_EPSILON)),
                points=_floats(queries.get("points", ""), "points"),
                curves=_floats(queries.get("curves", ""), "curves"),
                path=path,
            )
        except ValueError as error:
            if isinstance(error, InputError):
                raise
            raise InputError(f"Malformed value in problem file: {error}") from error

    @property
    def window(self) -> tuple:
        return (self.x_min, self.x_max)

    def x_axis(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.x_nodes)

    def x_grid(self) -> np.ndarray:
        """Space nodes as a 1-D axis, or rows ``(x1, x2)`` of the tensor grid in 2-D."""
        axis = self.x_axis()
        if self.dimension == 1:
            return axis
        return np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)

    def t_grid(self) -> np.ndarray:
        return np.linspace(self.horizon / self.t_nodes, self.horizon, self.t_nodes)

    def to_problem(self, validate: bool = True) -> core.Problem:
        logger.debug(f"H = {self.hamiltonian}, sigma = {self.sigma}, T = {self.horizon}")
        hamiltonian = ScalarFunction.from_expression(self.hamiltonian, self.dimension)
        sigma = ScalarFunction.from_expression(self.sigma, self.dimension, lipschitz=self.lipschitz)
        wide = (min(self.x_min, core.DEFAULT_WINDOW[0]), max(self.x_max, core.DEFAULT_WINDOW[1]))
        return core.Problem(
            hamiltonian,
            sigma,
            self.horizon,
            window=wide,
            resolution=self.resolution,
            epsilon=self.epsilon,
            concave=self.concave,
            validate=validate,
        )


def load_problem(path: str) -> core.Problem:
    """Problem of a problem file, with the convexity verdicts run on H.

    Raises
    ------
    InputError
        Missing file, missing field, parse error, ``T <= 0``.
    HypothesisError
        H fails a convexity verdict; carries the violating triple when there is one.
    """
    return ProblemSpec.from_file(path).to_problem()


def read_candidate(path: str) -> GridCandidate:
    """Candidate grid function from a ``t,x,value`` CSV file."""
    if not os.path.isfile(path):
        raise InputError(f"Candidate file does not exist: {path}")
    return GridCandidate.from_frame(pd.read_csv(path))


# =================================================================================================
# Emission
# =================================================================================================


def write_csv(frame: pd.DataFrame, path: str = None):
    """Header row, row-major, 17 significant digits."""
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _write(text, path)


def write_polylines(frame: pd.DataFrame, path: str = None):
    """One CSV block per curve, blocks separated by a blank line."""
    blocks = [
        block.drop(columns="curve").to_csv(index=False, float_format=FLOAT_FORMAT,
                                           lineterminator="\n")
        for _, block in frame.groupby("curve", sort=True)
    ]
    text = "".join(f"# curve {i}\n{block}\n" for i, block in enumerate(blocks))
    _write(text, path)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def write_json(data: dict, path: str = None):
    """Stable key order, non finite numbers as null."""
    text = json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n"
    _write(text, path)


def _write(text: str, path: str = None):
    if path:
        with open(path, "w", newline="") as fd:
            fd.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def emit(report, fmt: str = "json", path: str = None):
    """Write a grid, a table or a report.

    Grids and tables go to CSV (curve families as per-curve blocks), reports to JSON. A report
    asked for as CSV is written through its ``to_frame`` table.
    """
    if fmt not in ("csv", "json"):
        raise InputError(f"Unknown output format: {fmt}")
    if isinstance(report, core.GridSolution):
        report = report.to_frame()
    if isinstance(report, pd.DataFrame):
        if fmt == "json":
            write_json({"rows": report.to_dict(orient="records")}, path)
        elif "curve" in report.columns:
            write_polylines(report, path)
        else:
            write_csv(report, path)
        return
    if fmt == "csv":
        if not hasattr(report, "to_frame"):
            raise InputError(f"{type(report).__name__} has no CSV form, use --format json")
        write_csv(report.to_frame(), path)
        return
    write_json(report.to_dict() if hasattr(report, "to_dict") else report, path)
