"""Time-dependent rate functions.

A rate is an immutable expression tree over the constant, the time variable
``t``, the four arithmetic operators, ``sin``/``cos``/``exp`` and
piecewise-constant segment lists.  Trees are built by :func:`parse_rate`,
evaluated by :func:`eval_rate` and integrated by :func:`integrate_rate`
(adaptive Simpson, panels split at every piecewise breakpoint).

Grammar::

    expr      := term (('+'|'-') term)*
    term      := factor (('*'|'/') factor)*
    factor    := number | 't' | func '(' expr ')' | '(' expr ')'
               | piecewise | '-' factor
    func      := 'sin' | 'cos' | 'exp'
    piecewise := 'piecewise' '[' '(' number ',' number ')' (',' '(' number ',' number ')')* ']'
"""

from __future__ import annotations

import bisect
import math
import re
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "RateExpr",
    "Const",
    "Var",
    "BinOp",
    "Func",
    "Piecewise",
    "RateSyntaxError",
    "RateEvaluationError",
    "QuadratureError",
    "parse_rate",
    "eval_rate",
    "integrate_rate",
    "adaptive_simpson",
    "as_rate",
]

DEFAULT_TOL = 1e-10
DEFAULT_DEPTH = 40


class RateSyntaxError(ValueError):
    """Raised when a rate string does not conform to the grammar."""

    def __init__(self, message: str, text: str = "", position: int = 0):
        self.text = text
        self.position = position
        where = f" at position {position}" if text else ""
        super().__init__(f"{message}{where}")


class RateEvaluationError(ArithmeticError):
    pass


class QuadratureError(ArithmeticError):
    pass


def _checked(value: float) -> float:
    if not math.isfinite(value):
        raise RateEvaluationError(f"non-finite rate value {value!r}")
    return value


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise RateEvaluationError("division by zero in rate expression")
    return a / b


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise RateEvaluationError(f"exp({x!r}) overflows") from None


_OPS: dict[str, Callable[[float, float], float]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
}
_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
}


def _fmt(x: float) -> str:
    s = repr(float(x))
    return s if x >= 0 else f"(0 - {repr(-float(x))})"


class RateExpr:
    """Base class for rate expression nodes.

    Nodes are frozen dataclasses; :attr:`fn` is a closure compiled once per
    node and is what the hot paths (matrix assembly, quadrature) call.
    """

    def __call__(self, t: float) -> float:
        return _checked(self.fn(t))

    @cached_property
    def fn(self) -> Callable[[float], float]:
        return self._compile()

    def _compile(self) -> Callable[[float], float]:  # pragma: no cover - abstract
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Sorted interior breakpoints (> 0) of all piecewise sub-expressions."""
        return ()

    def is_constant(self) -> bool:
        return False

    # arithmetic sugar, handy when assembling models in code
    def __add__(self, other):
        return BinOp("+", self, as_rate(other))

    def __radd__(self, other):
        return BinOp("+", as_rate(other), self)

    def __sub__(self, other):
        return BinOp("-", self, as_rate(other))

    def __rsub__(self, other):
        return BinOp("-", as_rate(other), self)

    def __mul__(self, other):
        return BinOp("*", self, as_rate(other))

    def __rmul__(self, other):
        return BinOp("*", as_rate(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, as_rate(other))

    def __rtruediv__(self, other):
        return BinOp("/", as_rate(other), self)


@dataclass(frozen=True, eq=True)
class Const(RateExpr):
    value: float

    def _compile(self):
        v = float(self.value)
        return lambda t: v

    def is_constant(self) -> bool:
        return True

    def __str__(self) -> str:
        return _fmt(self.value)


@dataclass(frozen=True, eq=True)
class Var(RateExpr):
    def _compile(self):
        return lambda t: t

    def __str__(self) -> str:
        return "t"


@dataclass(frozen=True, eq=True)
class BinOp(RateExpr):
    op: str
    left: RateExpr
    right: RateExpr

    def _compile(self):
        op = _OPS[self.op]
        left, right = self.left, self.right
        if left.is_constant() and right.is_constant():
            try:
                v = op(left.fn(0.0), right.fn(0.0))
            except RateEvaluationError:
                pass  # keep the failure at evaluation time
            else:
                return lambda t: v
        f, g = left.fn, right.fn
        # constants and t are common leaves; skipping their closures saves calls
        if isinstance(right, Const):
            c = float(right.value)
            if self.op == "*":
                return lambda t: f(t) * c
            return lambda t: op(f(t), c)
        if isinstance(left, Const):
            c = float(left.value)
            if isinstance(right, Var) and self.op == "*":
                return lambda t: c * t
            if self.op == "*":
                return lambda t: c * g(t)
            return lambda t: op(c, g(t))
        return lambda t: op(f(t), g(t))

    def breakpoints(self):
        return tuple(sorted(set(self.left.breakpoints()) | set(self.right.breakpoints())))

    def is_constant(self) -> bool:
        return self.left.is_constant() and self.right.is_constant()

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True, eq=True)
class Func(RateExpr):
    name: str
    arg: RateExpr

    def _compile(self):
        f, g = _FUNCS[self.name], self.arg.fn
        return lambda t: f(g(t))

    def breakpoints(self):
        return self.arg.breakpoints()

    def is_constant(self) -> bool:
        return self.arg.is_constant()

    def __str__(self) -> str:
        return f"{self.name}({self.arg})"


@dataclass(frozen=True, eq=True)
class Piecewise(RateExpr):
    """Piecewise-constant function; segment ``k`` covers ``[starts[k], starts[k+1])``."""

    starts: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if not self.starts or len(self.starts) != len(self.values):
            raise ValueError("piecewise needs at least one (start, value) pair")
        if self.starts[0] != 0.0:
            raise ValueError("first piecewise segment must start at 0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("piecewise breakpoints must be strictly increasing")

    def _compile(self):
        starts, values = self.starts, self.values
        if len(starts) == 1:
            v = values[0]
            return lambda t: v

        def f(t: float) -> float:
            k = bisect.bisect_right(starts, t) - 1
            return values[k if k >= 0 else 0]

        return f

    def breakpoints(self):
        return tuple(self.starts[1:])

    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def __str__(self) -> str:
        segs = ",".join(f"({float(a)!r},{float(v)!r})" for a, v in zip(self.starts, self.values))
        return f"piecewise[{segs}]"


def as_rate(x) -> RateExpr:
    """Coerce a number, rate string or :class:`RateExpr` to a :class:`RateExpr`."""
    if isinstance(x, RateExpr):
        return x
    if isinstance(x, str):
        return parse_rate(x)
    return Const(float(x))


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/()\[\],]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise RateSyntaxError(f"unexpected character {text[start]!r}", text, start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return RateSyntaxError(msg, self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            got = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, got {got!r}", tok)
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def number(self) -> float:
        sign = 1.0
        if self.peek()[1] == "-":
            self.take()
            sign = -1.0
        tok = self.take()
        if tok[0] != "num":
            raise self.error("expected a number", tok)
        return sign * float(tok[1])

    def factor(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Const(float(val))
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and val == "-":
            self.take()
            return BinOp("-", Const(0.0), self.factor())
        if kind == "name":
            self.take()
            if val == "t":
                return Var()
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            if val == "piecewise":
                return self.piecewise(pos)
            raise RateSyntaxError(f"unknown identifier {val!r}", self.text, pos)
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {val!r}")

    def piecewise(self, pos):
        self.expect("[")
        starts, values = [], []
        while True:
            self.expect("(")
            at = self.peek()[2]
            start = self.number()
            if not starts and start != 0.0:
                raise RateSyntaxError("first piecewise segment must start at 0", self.text, at)
            if starts and start <= starts[-1]:
                raise RateSyntaxError("piecewise breakpoints must be strictly increasing", self.text, at)
            starts.append(start)
            self.expect(",")
            values.append(self.number())
            self.expect(")")
            if self.peek()[1] == ",":
                self.take()
                continue
            self.expect("]")
            break
        try:
            return Piecewise(tuple(starts), tuple(values))
        except ValueError as exc:
            raise RateSyntaxError(str(exc), self.text, pos) from None


def parse_rate(text: str) -> RateExpr:
    """Parse a rate string into an expression tree.

    >>> eval_rate(parse_rate("2 + sin(6.2831853*t)"), 0.0)
    2.0
    """
    if not isinstance(text, str) or not text.strip():
        raise RateSyntaxError("empty rate expression")
    p = _Parser(text)
    node = p.expr()
    if p.peek()[0] != "end":
        raise p.error(f"unexpected token {p.peek()[1]!r}")
    return node


def eval_rate(f: RateExpr, t: float) -> float:
    if t < 0:
        raise ValueError(f"rates are defined for t >= 0, got {t}")
    return f(t)


# ---------------------------------------------------------------------------
# quadrature


def _max_abs(x) -> float:
    return float(np.max(np.abs(x)))


def _simpson_panel(f, a, b, fa, fb, tol, max_depth, norm=abs):
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    # explicit stack instead of recursion: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if norm(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
            continue
        if depth + 1 >= max_depth or not (a < lm < m < rm < b):
            raise QuadratureError(
                f"tolerance {tol:.3g} not met on [{a!r}, {b!r}] within depth {max_depth}"
            )
        stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
        stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
    return total


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = DEFAULT_DEPTH,
    breakpoints: Sequence[float] = (),
) -> float:
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson bisection.

    The interval is first cut at every breakpoint inside ``(a, b)``; on each
    piece the right endpoint is sampled one ulp to its left, so a
    left-closed discontinuity at a breakpoint never leaks into the panel
    that ends there.  The absolute tolerance is shared across pieces in
    proportion to their length.

    ``f`` may return a numpy array; all components are then integrated
    together and the error test uses the largest component.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if b < a:
        raise ValueError("integration bounds must satisfy a <= b")
    if a == b:
        return 0.0
    cuts = [a] + [x for x in sorted(set(breakpoints)) if a < x < b] + [b]
    length = b - a
    total = 0.0
    try:
        for lo, hi in zip(cuts, cuts[1:]):
            flo, fhi = f(lo), f(math.nextafter(hi, -math.inf))
            if not (np.all(np.isfinite(flo)) and np.all(np.isfinite(fhi))):
                raise QuadratureError("non-finite integrand")
            norm = _max_abs if isinstance(flo, np.ndarray) else abs
            total = total + _simpson_panel(f, lo, hi, flo, fhi, tol * (hi - lo) / length, max_depth, norm)
    except RateEvaluationError as exc:
        raise QuadratureError(f"integrand failed: {exc}") from exc
    return total


def integrate_rate(
    f: RateExpr,
    t0: float,
    t1: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = DEFAULT_DEPTH,
) -> float:
    """Integral of a rate over ``[t0, t1]`` to absolute tolerance ``tol``."""
    if not 0 <= t0 <= t1:
        raise ValueError("need 0 <= t0 <= t1")
    fn = f.fn

    def g(t):
        try:
            y = fn(t)
        except RateEvaluationError as exc:
            raise QuadratureError(str(exc)) from exc
        if not math.isfinite(y):
            raise QuadratureError(f"non-finite integrand at t={t!r}")
        return y

    return adaptive_simpson(g, t0, t1, tol, max_depth, f.breakpoints())
