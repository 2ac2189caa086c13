# Closed-form scalar expressions in one variable (t or x): parser,
# evaluator, grid suprema and Lipschitz estimates.

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScalarExpr", "parse", "sup_abs", "lipschitz_estimate", "constant_value",
    "ExprError", "ParseError", "EvalError", "DivisionByZero", "WrongVariable",
    "Const", "Var", "Unary", "Binary",
]

UNARY_FUNCS = ("neg", "abs", "sin", "cos", "tanh", "arctan", "exp", "satlin")
BINARY_OPS = ("+", "-", "*", "/", "pow")
VARIABLES = ("t", "x")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalError(ExprError):
    pass


class DivisionByZero(EvalError):
    pass


class WrongVariable(EvalError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


def _find_vars(node, acc):
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Unary):
        _find_vars(node.arg, acc)
    elif isinstance(node, Binary):
        _find_vars(node.left, acc)
        _find_vars(node.right, acc)
    return acc


def _compile(node):
    """Compile a tree into a closure accepting a float or ndarray."""
    if isinstance(node, Const):
        c = node.value
        return lambda v: c if np.isscalar(v) else np.full(np.shape(v), c)
    if isinstance(node, Var):
        return lambda v: v
    if isinstance(node, Unary):
        f = _compile(node.arg)
        op = node.op
        if op == "neg":
            return lambda v: -f(v)
        if op == "abs":
            return lambda v: np.abs(f(v))
        if op == "satlin":
            return lambda v: (np.abs(f(v) + 1.0) - np.abs(f(v) - 1.0)) / 2.0
        fn = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh,
              "arctan": np.arctan, "exp": np.exp}[op]
        return lambda v: fn(f(v))
    if isinstance(node, Binary):
        fl = _compile(node.left)
        op = node.op
        if op == "pow":
            k = int(node.right.value)
            if k >= 0:
                return lambda v: fl(v) ** k
            def powneg(v):
                base = fl(v)
                if np.any(np.asarray(base) == 0.0):
                    raise DivisionByZero(
                        "zero raised to a negative power")
                return base ** float(k)
            return powneg
        fr = _compile(node.right)
        if op == "+":
            return lambda v: fl(v) + fr(v)
        if op == "-":
            return lambda v: fl(v) - fr(v)
        if op == "*":
            return lambda v: fl(v) * fr(v)
        if op == "/":
            def div(v):
                den = fr(v)
                if np.any(np.asarray(den) == 0.0):
                    raise DivisionByZero("division by zero")
                return fl(v) / den
            return div
    raise ExprError(f"unknown node {node!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "pow": 4}


def _fmt(node, parent_prec=0, right=False):
    if isinstance(node, Const):
        v = node.value
        if v == math.pi:
            return "pi"
        if float(v).is_integer() and abs(v) < 1e16:
            s = str(int(v))
        else:
            s = repr(v)
        if v < 0 and parent_prec > 0:
            return f"({s})"
        return s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = _fmt(node.arg, 3)
            s = f"-{inner}"
            if parent_prec >= 2 or (parent_prec == 1 and right):
                return f"({s})"
            return s
        return f"{node.op}({_fmt(node.arg)})"
    if isinstance(node, Binary):
        prec = _PREC[node.op]
        if node.op == "pow":
            base = _fmt(node.left, 5)
            k = int(node.right.value)
            exp = str(k) if k >= 0 else f"({k})"
            s = f"{base}^{exp}"
        else:
            left = _fmt(node.left, prec)
            rght = _fmt(node.right, prec, right=True)
            s = f"{left}{node.op}{rght}"
        need = prec < parent_prec or (right and prec == parent_prec)
        return f"({s})" if need else s
    raise ExprError(f"unknown node {node!r}")


class ScalarExpr:
    """Immutable parsed expression over at most one variable."""

    def __init__(self, root):
        names = _find_vars(root, set())
        if len(names) > 1:
            raise ExprError(f"expression mixes variables {sorted(names)}")
        self.root = root
        self.variable = names.pop() if names else None
        self._fn = _compile(root)

    def evaluate(self, value, var=None):
        """Evaluate at a float or ndarray; `var` names the binding."""
        if var is not None:
            if var not in VARIABLES:
                raise WrongVariable(f"unknown variable {var!r}")
            if self.variable is not None and self.variable != var:
                raise WrongVariable(
                    f"expression over {self.variable!r} given an "
                    f"{var!r} binding")
        out = self._fn(value)
        if np.isscalar(value) or np.ndim(value) == 0:
            return float(out)
        return np.asarray(out, dtype=float)

    def __call__(self, value):
        return self.evaluate(value)

    def __eq__(self, other):
        return isinstance(other, ScalarExpr) and self.root == other.root

    def __hash__(self):
        return hash(str(self))

    def __str__(self):
        return _fmt(self.root)

    def __repr__(self):
        return f"ScalarExpr({str(self)!r})"


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[+\-*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    data = text.encode("utf-8").decode("utf-8")  # reject invalid early
    while pos < len(data):
        m = _TOKEN_RE.match(data, pos)
        if not m or m.end() == m.start():
            if data[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {data[pos]!r}",
                             len(data[:pos].encode("utf-8")))
        off = len(data[:m.start(m.lastgroup)].encode("utf-8"))
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        tokens.append((kind, val, off))
        pos = m.end()
    tokens.append(("eof", "", len(data.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}, found {val or 'end of input'!r}",
                             off)

    def expression(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                node = Binary(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                node = Binary(val, node, self.factor())
            else:
                return node

    def factor(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Unary("neg", self.factor())
        if kind == "op" and val == "+":
            self.next()
            return self.factor()
        return self.power()

    def power(self):
        node = self.atom()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.next()
            node = Binary("pow", node, Const(float(self.int_exponent())))
        return node

    def int_exponent(self):
        kind, val, off = self.peek()
        wrapped = kind == "op" and val == "("
        if wrapped:
            self.next()
        sign = 1
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.next()
            sign = -1
        kind, val, off = self.next()
        if kind != "num" or not float(val).is_integer():
            raise ParseError("exponent must be an integer literal", off)
        if wrapped:
            self.expect_op(")")
        return sign * int(float(val))

    def atom(self):
        kind, val, off = self.next()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if val == "pi":
                return Const(math.pi)
            if val in VARIABLES:
                return Var(val)
            if val in UNARY_FUNCS and val != "neg":
                self.expect_op("(")
                arg = self.expression()
                self.expect_op(")")
                return Unary(val, arg)
            raise ParseError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected {val or 'end of input'!r}", off)


def parse(text):
    """Parse infix text into a ScalarExpr; raise ParseError with offset."""
    p = _Parser(_tokenize(text))
    root = p.expression()
    kind, val, off = p.peek()
    if kind != "eof":
        raise ParseError(f"trailing input {val!r}", off)
    return ScalarExpr(root)


def constant_value(e):
    """Return the float value of a variable-free expression, else None."""
    if e.variable is None:
        return e.evaluate(0.0)
    return None


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fn, a, b, iters=90):
    """Golden-section maximization of fn on [a, b]."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if b - a < 1e-15:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return max(fc, fd)


def _grid(lo, hi, step):
    npts = int(math.floor((hi - lo) / step + 0.5)) + 1
    xs = lo + step * np.arange(npts)
    if xs[-1] < hi - 1e-12 * max(1.0, abs(hi)):
        xs = np.append(xs, hi)
    else:
        xs[-1] = hi
    return xs


def sup_abs(e, lo, hi, grid_step):
    """Grid maximum of |e| on [lo, hi] with one golden-section refinement
    around the best cell.  Lower bound of the true sup, error O(step^2)
    for smooth e."""
    if not lo < hi:
        raise ValueError("sup_abs requires lo < hi")
    if grid_step <= 0:
        raise ValueError("sup_abs requires grid_step > 0")
    xs = _grid(lo, hi, grid_step)
    vals = np.abs(e.evaluate(xs))
    i = int(np.argmax(vals))
    best = float(vals[i])
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]
    if b > a:
        best = max(best, _golden_max(lambda v: abs(e.evaluate(float(v))), a, b))
    return best


def lipschitz_estimate(e, lo, hi, grid_step):
    """Largest |slope| between adjacent grid points; non-rigorous."""
    if not lo < hi:
        raise ValueError("lipschitz_estimate requires lo < hi")
    xs = _grid(lo, hi, grid_step)
    vals = e.evaluate(xs)
    slopes = np.abs(np.diff(vals) / np.diff(xs))
    return float(np.max(slopes))
