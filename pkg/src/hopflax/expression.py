# =================================================================================================
# Closed expression grammar used in problem files.
#
# Grammar (lowest to highest precedence):
#
#   expr     := term (('+' | '-') term)*
#   term     := unary (('*' | '/') unary)*
#   unary    := '-' unary | power
#   power    := primary ('^' exponent)*
#   exponent := '-'? primary                      (must fold to a rational constant)
#   primary  := NUMBER | 'inf' | VARIABLE | '(' expr ')'
#             | ('abs' | 'sin' | 'cos' | 'sqrt') '(' expr ')'
#             | ('min' | 'max') '(' expr (',' expr)+ ')'
#             | 'piecewise' '(' guard '->' expr (',' guard '->' expr)* ')'
#   guard    := '[' bound ',' bound ']'           with bound := '-'? (NUMBER | 'inf')
#
# The module also provides the vectorized evaluator, exact one-sided directional derivatives
# and the kink extraction used by the semidifferential calculus.
# =================================================================================================

import logging
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy
from scipy.optimize import brentq

from hopflax.exceptions import ExpressionSyntaxError, UnsupportedInputError

logger = logging.getLogger(__name__)

VARIABLES = ("x", "p", "y", "z", "x1", "x2", "p1", "p2")
UNARY_FUNCTIONS = ("abs", "sin", "cos", "sqrt")
NARY_FUNCTIONS = ("min", "max")
MAX_DEPTH = 100
MAX_HEIGHT = 200
MAX_FOLD_BITS = 4096
MAX_EXPONENT_PART = 2**53
KINK_SCAN_NODES = 4097

TOKEN_SPECIFICATION = [
    ("NUMBER", r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"),
    ("NAME", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("ARROW", r"->"),
    ("OP", r"[-+*/^(),\[\]]"),
    ("SKIP", r"[ \t\r\n]+"),
    ("MISMATCH", r"."),
]
TOKEN_REGEX = re.compile("|".join(f"(?P<{name}>{regex})" for name, regex in TOKEN_SPECIFICATION))


# =================================================================================================
# AST nodes
# =================================================================================================


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class UnaryOp:
    op: str  # neg, abs, sin, cos, sqrt
    arg: object


@dataclass(frozen=True)
class BinaryOp:
    op: str  # + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Power:
    base: object
    exponent: Fraction


@dataclass(frozen=True)
class NAry:
    op: str  # min, max
    args: tuple


@dataclass(frozen=True)
class Piecewise:
    """Pieces are ``(lower, upper, expression)`` triples over contiguous guards."""

    pieces: tuple

    @property
    def breaks(self) -> np.ndarray:
        return np.array([piece[0] for piece in self.pieces], dtype=float)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


# =================================================================================================
# Tokenizer and parser
# =================================================================================================


def tokenize(source: str) -> list:
    """Single pass tokenizer. The last token is an ``END`` marker."""
    tokens = []
    for match in TOKEN_REGEX.finditer(source):
        kind = match.lastgroup
        text = match.group()
        if kind == "SKIP":
            continue
        if kind == "MISMATCH":
            raise ExpressionSyntaxError(f"unknown token {text!r}", source, match.start())
        if kind == "NAME" and text == "inf":
            kind = "NUMBER"
        tokens.append(Token(kind, text, match.start()))
    tokens.append(Token("END", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.index = 0
        self.depth = 0
        # id -> (node, height); holding the node keeps ids unique while parsing
        self.heights = {}

    # Helpers -------------------------------------------------------------------------------------

    @property
    def token(self) -> Token:
        return self.tokens[self.index]

    def error(self, message: str, token: Token = None):
        token = self.token if token is None else token
        raise ExpressionSyntaxError(message, self.source, token.position)

    def advance(self) -> Token:
        token = self.token
        if token.kind != "END":
            self.index += 1
        return token

    def accept(self, text: str) -> bool:
        if self.token.kind in ("OP", "ARROW") and self.token.text == text:
            self.advance()
            return True
        return False

    def expect(self, text: str, message: str = None):
        if not self.accept(text):
            found = self.token.text or "end of input"
            self.error(message or f"expected {text!r}, found {found!r}")

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("expression nested too deeply")

    def leave(self):
        self.depth -= 1

    def build(self, node, token: Token):
        """Register a new node, rejecting trees taller than MAX_HEIGHT at ``token``."""
        height = 1
        for child in children(node):
            entry = self.heights.get(id(child))
            if entry is not None and entry[0] is child:
                height = max(height, entry[1] + 1)
            else:
                height = max(height, 2)
        if height > MAX_HEIGHT:
            self.error("expression nested too deeply", token)
        self.heights[id(node)] = (node, height)
        return node

    # Rules ---------------------------------------------------------------------------------------

    def parse(self):
        node = self.expression()
        if self.token.kind != "END":
            if self.token.text == ")":
                self.error("unbalanced parentheses")
            self.error(f"unexpected token {self.token.text!r}")
        return node

    def expression(self):
        self.enter()
        node = self.term()
        while self.token.kind == "OP" and self.token.text in "+-":
            token = self.advance()
            node = self.build(BinaryOp(token.text, node, self.term()), token)
        self.leave()
        return node

    def term(self):
        node = self.unary()
        while self.token.kind == "OP" and self.token.text in "*/":
            token = self.advance()
            node = self.build(BinaryOp(token.text, node, self.unary()), token)
        return node

    def unary(self):
        token = self.token
        if self.accept("-"):
            self.enter()
            node = self.build(UnaryOp("neg", self.unary()), token)
            self.leave()
            return node
        return self.power()

    def power(self):
        node = self.primary()
        while self.token.kind == "OP" and self.token.text == "^":
            token = self.advance()
            node = self.build(Power(node, self.exponent()), token)
        return node

    def exponent(self) -> Fraction:
        start = self.token
        negative = self.accept("-")
        node = self.primary()
        try:
            value = constant_value(node)
        except (ValueError, ZeroDivisionError, OverflowError):
            self.error("non-constant exponent", start)
        if max(abs(value.numerator), value.denominator) > MAX_EXPONENT_PART:
            self.error("exponent out of range", start)
        return -value if negative else value

    def primary(self):
        token = self.token
        if token.kind == "NUMBER":
            self.advance()
            return Number(float(token.text))
        if token.kind == "NAME":
            self.advance()
            if token.text in VARIABLES:
                return Variable(token.text)
            if token.text in UNARY_FUNCTIONS:
                args = self.arguments(token)
                if len(args) != 1:
                    self.error(f"arity mismatch: {token.text} expects 1 argument", token)
                return self.build(UnaryOp(token.text, args[0]), token)
            if token.text in NARY_FUNCTIONS:
                args = self.arguments(token)
                if len(args) < 2:
                    self.error(f"arity mismatch: {token.text} expects at least 2 arguments", token)
                return self.build(NAry(token.text, tuple(args)), token)
            if token.text == "piecewise":
                return self.piecewise(token)
            self.error(f"unknown token {token.text!r}", token)
        if token.kind == "OP" and token.text == "(":
            self.advance()
            node = self.expression()
            self.expect(")", "unbalanced parentheses")
            return node
        if token.kind == "END":
            self.error("unexpected end of input")
        self.error(f"unexpected token {token.text!r}")

    def arguments(self, name: Token) -> list:
        if not self.accept("("):
            self.error(f"expected '(' after {name.text}")
        args = [self.expression()]
        while self.accept(","):
            args.append(self.expression())
        self.expect(")", "unbalanced parentheses")
        return args

    def bound(self) -> float:
        negative = self.accept("-")
        token = self.token
        if token.kind != "NUMBER":
            self.error("guard bounds must be numbers")
        self.advance()
        value = float(token.text)
        return -value if negative else value

    def piecewise(self, name: Token):
        if not self.accept("("):
            self.error("expected '(' after piecewise")
        pieces = []
        while True:
            guard = self.token
            self.expect("[")
            lower = self.bound()
            self.expect(",")
            upper = self.bound()
            self.expect("]")
            self.expect("->")
            if not lower < upper:
                self.error("empty guard interval", guard)
            if pieces and pieces[-1][1] != lower:
                self.error("piecewise guards must be contiguous", guard)
            pieces.append((lower, upper, self.expression()))
            if not self.accept(","):
                break
        self.expect(")", "unbalanced parentheses")
        return self.build(Piecewise(tuple(pieces)), name)


def parse_expression(source: str):
    """Parse an expression of the problem-file grammar into an AST.

    Parameters
    ----------
    source : str
        Expression text.

    Returns
    -------
    AST node

    Raises
    ------
    ExpressionSyntaxError
        With the byte offset, line and column of the offending token.
    """
    return _Parser(source).parse()


def constant_value(node) -> Fraction:
    """Fold a constant subtree into an exact rational, ValueError if it is not constant."""
    match node:
        case Number(value):
            return Fraction(repr(value))
        case UnaryOp("neg", arg):
            return -constant_value(arg)
        case BinaryOp("+", left, right):
            return constant_value(left) + constant_value(right)
        case BinaryOp("-", left, right):
            return constant_value(left) - constant_value(right)
        case BinaryOp("*", left, right):
            return constant_value(left) * constant_value(right)
        case BinaryOp("/", left, right):
            return constant_value(left) / constant_value(right)
        case Power(base, exponent) if exponent.denominator == 1 and abs(exponent) <= 64:
            value = constant_value(base)
            bits = max(value.numerator.bit_length(), value.denominator.bit_length())
            if bits * abs(exponent) > MAX_FOLD_BITS:
                raise OverflowError("constant exponent too large")
            return value ** exponent.numerator
    raise ValueError("not a rational constant")


# =================================================================================================
# Printer and structural helpers
# =================================================================================================


# Binding levels of the grammar rules: expr < term < unary < power < primary
_SUM, _PRODUCT, _UNARY, _POWER, _PRIMARY = range(1, 6)


def _print_exponent(exponent: Fraction) -> str:
    sign = "-" if exponent < 0 else ""
    magnitude = abs(exponent)
    if magnitude.denominator == 1:
        return f"{sign}{magnitude.numerator}"
    if Fraction(repr(float(magnitude))) == magnitude:
        return f"{sign}{float(magnitude)!r}"
    return f"{sign}({magnitude.numerator}/{magnitude.denominator})"


def _print(node, level: int) -> str:
    match node:
        case Number(value):
            text, own = repr(value), _PRIMARY
        case Variable(name):
            text, own = name, _PRIMARY
        case UnaryOp("neg", arg):
            text, own = f"-{_print(arg, _UNARY)}", _UNARY
        case UnaryOp(op, arg):
            text, own = f"{op}({_print(arg, _SUM)})", _PRIMARY
        case BinaryOp(op, left, right):
            own = _SUM if op in "+-" else _PRODUCT
            text = f"{_print(left, own)} {op} {_print(right, own + 1)}"
        case Power(base, exponent):
            text, own = f"{_print(base, _POWER)}^{_print_exponent(exponent)}", _POWER
        case NAry(op, args):
            text, own = f"{op}({', '.join(_print(arg, _SUM) for arg in args)})", _PRIMARY
        case Piecewise(pieces):
            body = ", ".join(
                f"[{lower!r}, {upper!r}] -> {_print(expr, _SUM)}" for lower, upper, expr in pieces
            )
            text, own = f"piecewise({body})", _PRIMARY
        case _:
            raise TypeError(f"Not an expression node: {node!r}")
    return text if own >= level else f"({text})"


def print_expression(node) -> str:
    """Text with the fewest parentheses that parses back to the same AST."""
    return _print(node, _SUM)


def children(node) -> tuple:
    match node:
        case UnaryOp(_, arg):
            return (arg,)
        case BinaryOp(_, left, right):
            return (left, right)
        case Power(base, _):
            return (base,)
        case NAry(_, args):
            return args
        case Piecewise(pieces):
            return tuple(piece[2] for piece in pieces)
    return ()


def free_variables(node) -> frozenset:
    if isinstance(node, Variable):
        return frozenset([node.name])
    names = frozenset()
    for child in children(node):
        names |= free_variables(child)
    return names


def contains_piecewise(node) -> bool:
    return isinstance(node, Piecewise) or any(contains_piecewise(c) for c in children(node))


def substitute(node, name: str, replacement):
    """Replace every occurrence of variable ``name`` by ``replacement``."""
    match node:
        case Variable(var) if var == name:
            return replacement
        case UnaryOp(op, arg):
            return UnaryOp(op, substitute(arg, name, replacement))
        case BinaryOp(op, left, right):
            return BinaryOp(op, substitute(left, name, replacement),
                            substitute(right, name, replacement))
        case Power(base, exponent):
            return Power(substitute(base, name, replacement), exponent)
        case NAry(op, args):
            return NAry(op, tuple(substitute(arg, name, replacement) for arg in args))
        case Piecewise(pieces):
            if isinstance(replacement, Variable):
                return Piecewise(tuple(
                    (lower, upper, substitute(expr, name, replacement))
                    for lower, upper, expr in pieces
                ))
            if replacement == UnaryOp("neg", Variable(name)):
                # reflection p -> -p mirrors the guards
                return Piecewise(tuple(
                    (-upper, -lower, substitute(expr, name, replacement))
                    for lower, upper, expr in reversed(pieces)
                ))
            raise UnsupportedInputError("piecewise guards only support reflection")
    return node


def split_separable(node, variables: tuple):
    """Split ``f(v1, v2) = f1(v1) + f2(v2)``.

    Returns
    -------
    list or None
        One AST per variable, each written in its own variable, or None when the expression is
        not a sum of per-coordinate terms.
    """
    terms = []

    def collect(current, sign):
        match current:
            case BinaryOp("+", left, right):
                collect(left, sign)
                collect(right, sign)
            case BinaryOp("-", left, right):
                collect(left, sign)
                collect(right, -sign)
            case UnaryOp("neg", arg):
                collect(arg, -sign)
            case _:
                terms.append((sign, current))

    collect(node, 1)
    components = [[] for _ in variables]
    for sign, term in terms:
        names = free_variables(term)
        if len(names) > 1 or (names and next(iter(names)) not in variables):
            return None
        index = variables.index(next(iter(names))) if names else 0
        components[index].append(term if sign > 0 else UnaryOp("neg", term))
    result = []
    for parts in components:
        if not parts:
            result.append(Number(0.0))
            continue
        total = parts[0]
        for part in parts[1:]:
            total = BinaryOp("+", total, part)
        result.append(total)
    return result


# =================================================================================================
# Evaluation
# =================================================================================================


def _guard_value(env: dict) -> np.ndarray:
    if len(env) != 1:
        raise UnsupportedInputError("piecewise expressions are one dimensional")
    return next(iter(env.values()))


def _select(index, arrays: list) -> np.ndarray:
    stacked = np.stack(np.broadcast_arrays(*arrays))
    index = np.broadcast_to(index, stacked.shape[1:])
    return np.take_along_axis(stacked, index[np.newaxis], axis=0)[0]


def _rational_power(u: np.ndarray, r: Fraction) -> np.ndarray:
    if r.denominator == 1:
        return np.power(u, float(r.numerator))
    magnitude = np.power(np.abs(u), float(r))
    if r.denominator % 2 == 0:
        return np.where(u >= 0, magnitude, np.nan)
    if r.numerator % 2:
        return np.sign(u) * magnitude
    return magnitude


def evaluate(node, env: dict) -> np.ndarray:
    """Vectorized evaluation.

    Parameters
    ----------
    node : AST node
    env : dict
        Variable name -> array; arrays are broadcast together.
    """
    with np.errstate(all="ignore"):
        return np.asarray(_evaluate(node, env), dtype=float)


def _evaluate(node, env):
    match node:
        case Number(value):
            return np.float64(value)
        case Variable(name):
            if name not in env:
                raise UnsupportedInputError(f"Variable {name!r} is not bound")
            return np.asarray(env[name], dtype=float)
        case UnaryOp(op, arg):
            u = _evaluate(arg, env)
            return {"neg": np.negative, "abs": np.abs, "sin": np.sin, "cos": np.cos,
                    "sqrt": np.sqrt}[op](u)
        case BinaryOp(op, left, right):
            a, b = _evaluate(left, env), _evaluate(right, env)
            return {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}[op](a, b)
        case Power(base, exponent):
            return _rational_power(_evaluate(base, env), exponent)
        case NAry(op, args):
            values = [_evaluate(arg, env) for arg in args]
            reduce = np.maximum if op == "max" else np.minimum
            result = values[0]
            for value in values[1:]:
                result = reduce(result, value)
            return result
        case Piecewise(pieces):
            y = _guard_value(env)
            index = np.clip(np.searchsorted(node.breaks, y, side="right") - 1, 0, len(pieces) - 1)
            values = [np.broadcast_to(_evaluate(expr, env), np.shape(y)) for _, _, expr in pieces]
            return _select(index, values)
    raise TypeError(f"Not an expression node: {node!r}")


def directional_derivative(node, env: dict, tangent: dict):
    """Value and exact one-sided directional derivative.

    Computes ``lim_{s->0+} (f(v + s*d) - f(v)) / s`` by forward propagation of the rules of
    each node; kinks of abs, min, max and piecewise are resolved on the side of ``d``.

    Returns
    -------
    tuple of numpy.ndarray
        ``(value, derivative)``.
    """
    with np.errstate(all="ignore"):
        value, slope = _directional(node, env, tangent)
        return np.asarray(value, dtype=float), np.asarray(slope, dtype=float)


def _power_slope(u, du, r: Fraction):
    if r == 1:
        return du
    slope = float(r) * _rational_power(u, r - 1) * du
    if r > 1:
        return np.where(u == 0, 0.0, slope)
    # infinite slope at the origin for 0 < r < 1, oriented by the side of approach
    if r.denominator % 2 == 0:
        at_zero = np.where(du > 0, np.inf, np.where(du == 0, 0.0, np.nan))
    elif r.numerator % 2:
        at_zero = np.where(du == 0, 0.0, np.copysign(np.inf, du))
    else:
        at_zero = np.where(du == 0, 0.0, np.inf)
    return np.where(u == 0, at_zero, slope)


def _directional(node, env, tangent):
    match node:
        case Number(value):
            return np.float64(value), np.float64(0.0)
        case Variable(name):
            if name not in env:
                raise UnsupportedInputError(f"Variable {name!r} is not bound")
            return np.asarray(env[name], dtype=float), np.asarray(tangent.get(name, 0.0), float)
        case UnaryOp(op, arg):
            u, du = _directional(arg, env, tangent)
            match op:
                case "neg":
                    return -u, -du
                case "abs":
                    return np.abs(u), np.where(u > 0, du, np.where(u < 0, -du, np.abs(du)))
                case "sin":
                    return np.sin(u), np.cos(u) * du
                case "cos":
                    return np.cos(u), -np.sin(u) * du
                case "sqrt":
                    root = np.sqrt(u)
                    at_zero = np.where(du > 0, np.inf, np.where(du == 0, 0.0, np.nan))
                    return root, np.where(
                        u > 0, du / (2.0 * root), np.where(u == 0, at_zero, np.nan)
                    )
        case BinaryOp(op, left, right):
            a, da = _directional(left, env, tangent)
            b, db = _directional(right, env, tangent)
            match op:
                case "+":
                    return a + b, da + db
                case "-":
                    return a - b, da - db
                case "*":
                    return a * b, da * b + a * db
                case "/":
                    return a / b, (da * b - a * db) / (b * b)
        case Power(base, exponent):
            u, du = _directional(base, env, tangent)
            return _rational_power(u, exponent), _power_slope(u, du, exponent)
        case NAry(op, args):
            pairs = [_directional(arg, env, tangent) for arg in args]
            reduce = np.maximum if op == "max" else np.minimum
            fill = -np.inf if op == "max" else np.inf
            value = pairs[0][0]
            for other, _ in pairs[1:]:
                value = reduce(value, other)
            slope = np.full(np.shape(value), fill)
            for other, d_other in pairs:
                slope = reduce(slope, np.where(other == value, d_other, fill))
            return value, slope
        case Piecewise(pieces):
            y = _guard_value(env)
            d = np.asarray(next(iter(tangent.values())) if tangent else 0.0, dtype=float)
            breaks = node.breaks
            right = np.searchsorted(breaks, y, side="right") - 1
            left = np.searchsorted(breaks, y, side="left") - 1
            index = np.clip(np.where(d < 0, left, right), 0, len(pieces) - 1)
            value_index = np.clip(right, 0, len(pieces) - 1)
            shape = np.broadcast(y, d).shape
            pairs = [_directional(expr, env, tangent) for _, _, expr in pieces]
            values = [np.broadcast_to(v, shape) for v, _ in pairs]
            slopes = [np.broadcast_to(s, shape) for _, s in pairs]
            return _select(value_index, values), _select(index, slopes)
    raise TypeError(f"Not an expression node: {node!r}")


# =================================================================================================
# Kink extraction
# =================================================================================================


def to_sympy(node):
    """Convert to a sympy expression (real symbols). Piecewise nodes are not converted."""
    match node:
        case Number(value):
            return sympy.oo if value == np.inf else sympy.Rational(repr(value))
        case Variable(name):
            return sympy.Symbol(name, real=True)
        case UnaryOp(op, arg):
            inner = to_sympy(arg)
            return {"neg": lambda e: -e, "abs": sympy.Abs, "sin": sympy.sin, "cos": sympy.cos,
                    "sqrt": sympy.sqrt}[op](inner)
        case BinaryOp(op, left, right):
            a, b = to_sympy(left), to_sympy(right)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
            return a / b
        case Power(base, exponent):
            return to_sympy(base) ** sympy.Rational(exponent.numerator, exponent.denominator)
        case NAry(op, args):
            return (sympy.Max if op == "max" else sympy.Min)(*[to_sympy(arg) for arg in args])
    raise UnsupportedInputError("piecewise nodes have no symbolic form")


def switch_functions(node) -> tuple:
    """Sub-expressions whose zeros are candidate kinks, plus explicit breakpoints."""
    switches, breaks = [], []

    def visit(current):
        match current:
            case UnaryOp("abs" | "sqrt", arg):
                switches.append(arg)
            case Power(base, exponent) if exponent.denominator != 1 or exponent < 0:
                switches.append(base)
            case NAry(_, args):
                for i, first in enumerate(args):
                    for second in args[i + 1:]:
                        switches.append(BinaryOp("-", first, second))
            case Piecewise(pieces):
                breaks.extend(lower for lower, _, _ in pieces[1:])
        for child in children(current):
            visit(child)

    visit(node)
    return switches, breaks


def _symbolic_roots(node, variable: str, window: tuple):
    expr = to_sympy(node)
    symbol = sympy.Symbol(variable, real=True)
    if not expr.is_polynomial(symbol):
        return None
    roots = sympy.solveset(expr, symbol, sympy.Interval(*window))
    if not isinstance(roots, sympy.FiniteSet):
        return None
    return [float(root) for root in roots if root.is_real]


def _numeric_roots(node, variable: str, window: tuple) -> list:
    grid = np.linspace(window[0], window[1], KINK_SCAN_NODES)
    values = evaluate(node, {variable: grid})
    roots = list(grid[values == 0.0])
    crossing = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    for i in crossing:
        roots.append(brentq(lambda s: float(evaluate(node, {variable: s})), grid[i], grid[i + 1],
                            xtol=1e-14))
    return roots


def kink_candidates(node, variable: str, window: tuple) -> np.ndarray:
    """Sorted candidate kink locations of a one variable expression inside ``window``.

    Zeros of the switch functions are found with sympy when they are polynomial and by a sign
    change scan refined with ``brentq`` otherwise.
    """
    switches, breaks = switch_functions(node)
    candidates = [b for b in breaks if window[0] <= b <= window[1]]
    for switch in switches:
        if not free_variables(switch):
            continue
        roots = None
        if not contains_piecewise(switch):
            try:
                roots = _symbolic_roots(switch, variable, window)
            except (TypeError, ValueError, NotImplementedError) as err:
                logger.debug(f"Symbolic kink extraction failed, falling back to scan: {err}")
        if roots is None:
            roots = _numeric_roots(switch, variable, window)
        candidates.extend(roots)
    return np.unique(np.round(np.asarray(candidates, dtype=float), 14))
