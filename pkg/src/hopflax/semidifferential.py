"""Sub and superdifferentials of functions of one variable, lifted to separable 2-D functions.

Expression and piecewise functions get exact sets from their one-sided derivatives; sampled
functions get bracketed estimates from difference quotients over a shrinking step sequence.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from hopflax.exceptions import InputError, OutOfRangeError, UnsupportedInputError
from hopflax.ScalarFunction import ScalarFunction

logger = logging.getLogger(__name__)

EXACT_TOLERANCE = 1e-12
DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SemidiffSet:
    """D- (kind "sub") or D+ (kind "super") at a point.

    The content is empty or a box given by per-axis ``bounds`` (an interval in 1-D). Empty is
    explicit: an empty set is never encoded as a degenerate interval.
    """

    kind: str
    bounds: tuple = ()
    empty: bool = False
    step: float = None
    uncertainty: float = 0.0

    @classmethod
    def empty_set(cls, kind: str, step: float = None) -> "SemidiffSet":
        return cls(kind, (), True, step)

    @classmethod
    def interval(cls, kind: str, lower: float, upper: float, step: float = None,
                 uncertainty: float = 0.0) -> "SemidiffSet":
        assert lower <= upper, f"Interval bounds out of order: [{lower}, {upper}]"
        return cls(kind, ((float(lower), float(upper)),), False, step, uncertainty)

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> float:
        return None if self.empty else self.bounds[0][0]

    @property
    def upper(self) -> float:
        return None if self.empty else self.bounds[0][1]

    @property
    def is_singleton(self) -> bool:
        return not self.empty and all(lo == hi for lo, hi in self.bounds)

    @property
    def vertices(self) -> list:
        if self.empty:
            return []
        corners = itertools.product(*[sorted({lo, hi}) for lo, hi in self.bounds])
        return [np.array(corner) for corner in corners]

    def contains(self, q, tolerance: float = 0.0) -> bool:
        if self.empty:
            return False
        q = np.atleast_1d(np.asarray(q, dtype=float))
        return all(lo - tolerance <= qi <= hi + tolerance for qi, (lo, hi) in zip(q, self.bounds))

    def __add__(self, other: "SemidiffSet") -> "SemidiffSet":
        """Minkowski sum."""
        assert self.kind == other.kind, "Only sets of the same kind can be added"
        if self.empty or other.empty:
            return SemidiffSet.empty_set(self.kind)
        bounds = tuple((a[0] + b[0], a[1] + b[1]) for a, b in zip(self.bounds, other.bounds))
        return SemidiffSet(self.kind, bounds, False, None, self.uncertainty + other.uncertainty)

    def __repr__(self) -> str:
        symbol = "D-" if self.kind == "sub" else "D+"
        if self.empty:
            return f"{symbol}=empty"
        if self.is_singleton:
            return f"{symbol}={{{', '.join(repr(lo) for lo, _ in self.bounds)}}}"
        return f"{symbol}=" + " x ".join(f"[{lo!r}, {hi!r}]" for lo, hi in self.bounds)


@dataclass(frozen=True)
class DSharpSet:
    """``D+ U D-`` when that union is nonempty, else exactly ``{0}``."""

    superdiff: SemidiffSet
    subdiff: SemidiffSet
    dimension: int = 1
    pieces: tuple = field(init=False)

    def __post_init__(self):
        pieces = tuple(s for s in (self.subdiff, self.superdiff) if not s.empty)
        object.__setattr__(self, "pieces", pieces)

    @property
    def fallback(self) -> bool:
        return not self.pieces

    def branch_of(self, q, tolerance: float = 0.0):
        """Which set produced ``q``: "sub", "super", "fallback", or None if ``q`` is not in D#."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if self.fallback:
            return "fallback" if np.all(np.abs(q) <= tolerance) else None
        if self.subdiff.contains(q, tolerance):
            return "sub"
        if self.superdiff.contains(q, tolerance):
            return "super"
        return None

    def contains(self, q, tolerance: float = 0.0) -> bool:
        return self.branch_of(q, tolerance) is not None

    @property
    def hull(self) -> tuple:
        """Per-axis bounds of the union (``(0, 0)`` for the fallback)."""
        if self.fallback:
            return tuple((0.0, 0.0) for _ in range(self.dimension))
        return tuple(
            (min(p.bounds[i][0] for p in self.pieces), max(p.bounds[i][1] for p in self.pieces))
            for i in range(self.dimension)
        )

    def __repr__(self) -> str:
        if self.fallback:
            return "D#={0}"
        return "D#=" + " U ".join(repr(p).split("=", 1)[1] for p in self.pieces)


# =================================================================================================
# One dimensional rule
# =================================================================================================


def one_dimensional_rule(d_minus: float, d_plus: float, tolerance: float = EXACT_TOLERANCE,
                         step: float = None, uncertainty: float = 0.0):
    """Semidifferentials from the left and right derivatives.

    ``f'(y-) >= f'(y+)`` gives ``D+ = [f'(y+), f'(y-)]`` and ``D-`` empty; the symmetric case
    gives ``D-``; equal derivatives give the same singleton for both.

    Returns
    -------
    tuple of SemidiffSet
        ``(D+, D-)``.
    """
    if np.isnan(d_minus) or np.isnan(d_plus):
        return SemidiffSet.empty_set("super", step), SemidiffSet.empty_set("sub", step)
    scale = 1.0 + max(abs(d_minus), abs(d_plus)) if np.isfinite(d_minus + d_plus) else np.inf
    if np.isfinite(scale) and abs(d_minus - d_plus) <= tolerance * scale + uncertainty:
        mean = 0.5 * (d_minus + d_plus)
        return (SemidiffSet.interval("super", mean, mean, step, uncertainty),
                SemidiffSet.interval("sub", mean, mean, step, uncertainty))
    if d_minus > d_plus:
        return (SemidiffSet.interval("super", d_plus, d_minus, step, uncertainty),
                SemidiffSet.empty_set("sub", step))
    return (SemidiffSet.empty_set("super", step),
            SemidiffSet.interval("sub", d_minus, d_plus, step, uncertainty))


def _converging(quotients: np.ndarray, tolerance: float) -> bool:
    differences = np.diff(quotients)
    if np.all(np.abs(differences) <= tolerance) or len(differences) < 2:
        return True
    signs = np.sign(differences)
    if np.any(signs != signs[0]):
        return False
    magnitudes = np.abs(differences)
    return bool(np.all(magnitudes[1:] <= 0.75 * magnitudes[:-1] + tolerance))


def _extrapolate(quotients: np.ndarray, steps: np.ndarray) -> float:
    if len(quotients) < 2:
        return float(quotients[-1])
    slope = (quotients[-2] - quotients[-1]) / (steps[-2] - steps[-1])
    return float(quotients[-1] - steps[-1] * slope)


def numeric_semidiff(f: ScalarFunction, y: float, shrink_sequence,
                     tolerance: float = DEFAULT_TOLERANCE):
    """Semidifferentials estimated from one-sided difference quotients.

    Parameters
    ----------
    f : ScalarFunction
        Any one variable function, typically a grid.
    y : float
        Query point.
    shrink_sequence : sequence of float
        Strictly decreasing positive steps.
    tolerance : float, optional
        Consistency tolerance of the quotient sequences.

    Returns
    -------
    tuple of SemidiffSet
        ``(D+, D-)`` tagged with the smallest step.

    Notes
    -----
    When the right and left quotient sequences both converge, their linear extrapolation to a
    zero step feeds the one dimensional rule. Otherwise the sets are the brackets
    ``D- = [max l, min r]`` and ``D+ = [max r, min l]``, declared empty when inconsistent.
    """
    if f.dimension != 1:
        raise UnsupportedInputError("numeric_semidiff handles one variable functions")
    steps = np.asarray(shrink_sequence, dtype=float)
    if len(steps) < 1 or np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
        raise InputError("The shrink sequence must be strictly decreasing and positive")
    y = float(y)
    if f.window is not None:
        lower, upper = f.window
        slack = 1e-12 * max(1.0, abs(lower), abs(upper))
        if y - steps[0] < lower - slack or y + steps[0] > upper + slack:
            raise OutOfRangeError(f"y={y} within one step of the sample window [{lower}, {upper}]")
    center = float(f(y))
    right = (f(y + steps) - center) / steps
    left = (center - f(y - steps)) / steps
    smallest = float(steps[-1])
    if _converging(right, tolerance) and _converging(left, tolerance):
        d_plus, d_minus = _extrapolate(right, steps), _extrapolate(left, steps)
        uncertainty = abs(right[-1] - d_plus) + abs(left[-1] - d_minus)
        return one_dimensional_rule(d_minus, d_plus, tolerance, smallest, uncertainty)
    logger.debug(f"Difference quotients at y={y} do not converge, using brackets")
    sub_lo, sub_hi = float(np.max(left)), float(np.min(right))
    super_lo, super_hi = float(np.max(right)), float(np.min(left))
    subdiff = (SemidiffSet.interval("sub", sub_lo, max(sub_lo, sub_hi), smallest)
               if sub_lo <= sub_hi + tolerance else SemidiffSet.empty_set("sub", smallest))
    superdiff = (SemidiffSet.interval("super", super_lo, max(super_lo, super_hi), smallest)
                 if super_lo <= super_hi + tolerance else SemidiffSet.empty_set("super", smallest))
    return superdiff, subdiff


def default_steps(f: ScalarFunction) -> list:
    h = f.step if f.step is not None else 1e-3
    return [4.0 * h, 2.0 * h, h]


# =================================================================================================
# Public operations
# =================================================================================================


def semidiff_at(f: ScalarFunction, y, tolerance: float = EXACT_TOLERANCE):
    """Superdifferential and subdifferential of ``f`` at ``y``.

    Exact for expression and piecewise functions. Sampled functions are delegated to
    ``numeric_semidiff`` with steps of 4, 2 and 1 grid spacings. Two variable functions must be
    sums of per-coordinate terms; the sets are then the products of the per-axis sets.

    Returns
    -------
    tuple of SemidiffSet
        ``(D+, D-)``.
    """
    if f.dimension == 1:
        if f.kind == "grid":
            return numeric_semidiff(f, float(np.asarray(y).ravel()[0]), default_steps(f))
        d_minus, d_plus = f.one_sided_derivatives(float(np.asarray(y).ravel()[0]))
        return one_dimensional_rule(float(d_minus), float(d_plus), tolerance)
    components = f.separable_components()
    if components is None:
        raise UnsupportedInputError(
            "2-D semidifferentials need a sum of per-coordinate terms f1(y1) + f2(y2)"
        )
    y = np.asarray(y, dtype=float)
    per_axis = [semidiff_at(c, y[i], tolerance) for i, c in enumerate(components)]
    result = []
    for position, kind in ((0, "super"), (1, "sub")):
        sets = [pair[position] for pair in per_axis]
        if any(s.empty for s in sets):
            result.append(SemidiffSet.empty_set(kind))
        else:
            result.append(SemidiffSet(kind, tuple(s.bounds[0] for s in sets)))
    return tuple(result)


def d_sharp(f: ScalarFunction, y, tolerance: float = EXACT_TOLERANCE) -> DSharpSet:
    """``D#f(y)``: the union of D+ and D-, or ``{0}`` when both are empty."""
    superdiff, subdiff = semidiff_at(f, y, tolerance)
    return DSharpSet(superdiff, subdiff, f.dimension)
