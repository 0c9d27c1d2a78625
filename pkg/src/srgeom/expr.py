"""Scalar coefficient expressions over chart variables.

Expressions define vector-field coefficients, contact-form components and
hypersurface level functions.  They are parsed once into an immutable AST
and evaluated on plain floats, on numpy arrays (elementwise), or on
:class:`Dual` numbers for exact forward-mode derivatives.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , { "^" , exponent } ;
    exponent= [ "-" ] , ( NUMBER | "(" expr ")" ) ;   (* must fold to a constant *)
    atom    = NUMBER | VAR | FUNC , "(" , expr , ")" | "(" , expr , ")" ;
    FUNC    = "sin" | "cos" | "exp" | "sqrt" | "log" ;

Binary operators of equal precedence associate to the left; ``^`` binds
tighter than unary minus, so ``-x^2`` is ``-(x^2)``.  Exponents must fold
to a constant at parse time; a non-integer exponent requires a positive
base at evaluation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownVariable

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary", "Dual",
    "parse", "evaluate", "directional_derivative", "gradient", "to_source",
    "differentiate", "compiled", "compile_many",
    "const", "var", "add", "sub", "mul", "div", "neg", "pow_const",
]


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: float
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var(Expr):
    index: int
    name: str
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str          # 'neg', 'sin', 'cos', 'exp', 'sqrt', 'log'
    arg: Expr
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Binary(Expr):
    op: str          # '+', '-', '*', '/', '^'  (rhs of '^' is a Const)
    lhs: Expr
    rhs: Expr
    offset: int = field(default=-1, compare=False)


FUNCTIONS = ("sin", "cos", "exp", "sqrt", "log")

# Convenience constructors for building ASTs programmatically (used by the
# Carnot constructor and by tests).  They fold the trivial algebra so that
# machine-generated coefficient polynomials stay small.


def const(v):
    return Const(float(v))


def var(index, name):
    return Var(index, name)


def add(a, b):
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def sub(a, b):
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def mul(a, b):
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(0.0)
        if b.value == 1.0:
            return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def div(a, b):
    return Binary("/", a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Unary("neg", a)


def pow_const(a, exponent):
    return Binary("^", a, Const(float(exponent)))


# ---------------------------------------------------------------------------
# Tokenizer / parser


_TOKEN_OPS = "+-*/^()"


def _tokenize(source):
    tokens = []  # (kind, text, offset); kind in {num, name, op}
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c in _TOKEN_OPS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                if source[j] == ".":
                    seen_dot = True
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    while k < n and source[k].isdigit():
                        k += 1
                    j = k
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError("bad number literal", i, "number")
            tokens.append(("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("name", source[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i, "operator or operand")
    return tokens


class _Parser:
    def __init__(self, source, variables):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.var_index = {name: i for i, name in enumerate(variables)}

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is not None:
            self.pos += 1
        return tok

    def _end_offset(self):
        return len(self.source)

    def _expect_op(self, op):
        tok = self._peek()
        if tok is None or tok[0] != "op" or tok[1] != op:
            off = tok[2] if tok else self._end_offset()
            raise ExprSyntaxError("unexpected token", off, repr(op))
        return self._next()

    def parse(self):
        e = self.expr()
        tok = self._peek()
        if tok is not None:
            raise ExprSyntaxError(f"trailing input {tok[1]!r}", tok[2], "end of input")
        return e

    def expr(self):
        node = self.term()
        while True:
            tok = self._peek()
            if tok and tok[0] == "op" and tok[1] in "+-":
                self._next()
                rhs = self.term()
                node = Binary(tok[1], node, rhs, offset=tok[2])
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            tok = self._peek()
            if tok and tok[0] == "op" and tok[1] in "*/":
                self._next()
                rhs = self.unary()
                node = Binary(tok[1], node, rhs, offset=tok[2])
            else:
                return node

    def unary(self):
        tok = self._peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self._next()
            return Unary("neg", self.unary(), offset=tok[2])
        return self.power()

    def power(self):
        node = self.atom()
        while True:
            tok = self._peek()
            if tok and tok[0] == "op" and tok[1] == "^":
                self._next()
                exp_node = self.exponent()
                node = Binary("^", node, exp_node, offset=tok[2])
            else:
                return node

    def exponent(self):
        tok = self._peek()
        if tok is None:
            raise ExprSyntaxError("missing exponent", self._end_offset(), "constant exponent")
        sign = 1.0
        if tok[0] == "op" and tok[1] == "-":
            self._next()
            sign = -1.0
            tok = self._peek()
            if tok is None:
                raise ExprSyntaxError("missing exponent", self._end_offset(), "constant exponent")
        if tok[0] == "num":
            self._next()
            return Const(sign * float(tok[1]), offset=tok[2])
        if tok[0] == "op" and tok[1] == "(":
            self._next()
            inner = self.expr()
            self._expect_op(")")
            folded = _fold_constant(inner)
            if folded is None:
                raise ExprSyntaxError("exponent must be constant", tok[2], "constant exponent")
            return Const(sign * folded, offset=tok[2])
        raise ExprSyntaxError("exponent must be constant", tok[2], "constant exponent")

    def atom(self):
        tok = self._peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", self._end_offset(), "operand")
        kind, text, off = tok
        if kind == "num":
            self._next()
            return Const(float(text), offset=off)
        if kind == "name":
            self._next()
            if text in FUNCTIONS:
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return Unary(text, arg, offset=off)
            if text not in self.var_index:
                raise UnknownVariable(text, off)
            return Var(self.var_index[text], text, offset=off)
        if kind == "op" and text == "(":
            self._next()
            node = self.expr()
            self._expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token {text!r}", off, "operand")


def _fold_constant(node):
    """Return the float value of a variable-free AST, or None."""
    try:
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            return None
        if isinstance(node, Unary):
            v = _fold_constant(node.arg)
            if v is None:
                return None
            return _apply_unary_float(node.op, v)
        if isinstance(node, Binary):
            a = _fold_constant(node.lhs)
            b = _fold_constant(node.rhs)
            if a is None or b is None:
                return None
            return _apply_binary_float(node.op, a, b)
    except (DomainError, OverflowError, ValueError):
        return None
    return None


def _apply_unary_float(op, v):
    if op == "neg":
        return -v
    return getattr(math, op)(v)


def _apply_binary_float(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return a ** b


def parse(source, variables):
    """Parse *source* into an :class:`Expr` over the ordered *variables*.

    Raises :class:`ExprSyntaxError` (with byte offset and expected-token
    hint) or :class:`UnknownVariable`.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, "operand")
    names = list(variables)
    if len(set(names)) != len(names):
        raise ValueError("variable names must be distinct")
    return _Parser(source, names).parse()


# ---------------------------------------------------------------------------
# Printing


_PRECEDENCE = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_NEG_PRECEDENCE = 30


def _node_precedence(node):
    if isinstance(node, Binary):
        return _PRECEDENCE[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _NEG_PRECEDENCE
    return 100


def to_source(node):
    """Render an AST to source that reparses to a structurally equal AST."""
    if isinstance(node, Const):
        if node.value < 0:
            return f"-{_format_number(-node.value)}"
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = to_source(node.arg)
            if _node_precedence(node.arg) <= _NEG_PRECEDENCE and not isinstance(node.arg, (Var, Const)):
                inner = f"({inner})"
            elif isinstance(node.arg, Const) and node.arg.value < 0:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{node.op}({to_source(node.arg)})"
    if isinstance(node, Binary):
        p = _PRECEDENCE[node.op]
        lhs = to_source(node.lhs)
        rhs = to_source(node.rhs)
        # left-associative chains: parenthesize rhs at equal precedence
        if _node_precedence(node.lhs) < p:
            lhs = f"({lhs})"
        if _node_precedence(node.rhs) <= p:
            rhs = f"({rhs})"
        return f"{lhs}{node.op}{rhs}"
    raise TypeError(f"not an Expr node: {node!r}")


def _format_number(v):
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


# A negative Const prints with a leading '-', which reparses as Unary neg of
# a positive Const.  to_source therefore never emits a bare negative literal
# except through the Unary path above; parse(to_source(e)) is structurally
# stable for every printable AST (round-trip tested).


# ---------------------------------------------------------------------------
# Dual numbers


def _is_zero_scalar(x):
    if isinstance(x, Dual):
        return False
    if isinstance(x, np.ndarray):
        return bool(np.all(x == 0.0))
    return x == 0.0


class Dual:
    """Forward-mode dual number ``value + eps * deriv``.

    ``value`` and ``deriv`` may be floats, numpy arrays (elementwise
    evaluation over a batch of points) or further ``Dual`` instances;
    nesting two layers yields exact second directional derivatives.
    """

    __slots__ = ("value", "deriv")

    # make numpy defer mixed ndarray (op) Dual to the reflected operators
    # instead of broadcasting Dual into an object array
    __array_ufunc__ = None

    def __init__(self, value, deriv):
        self.value = value
        self.deriv = deriv

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value,
                        self.deriv * other.value + self.value * other.deriv)
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return d_div(self, other)

    def __rtruediv__(self, other):
        return d_div(other, self)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)


def base_value(x):
    """Strip all Dual layers, returning the underlying float/array value."""
    while isinstance(x, Dual):
        x = x.value
    return x


def deriv_part(x):
    """Derivative part of x; plain numbers have derivative zero."""
    if isinstance(x, Dual):
        return x.deriv
    return 0.0


def _domain_check(cond_bad, message, offset):
    # cond_bad is a bool or a boolean array
    if isinstance(cond_bad, np.ndarray):
        if np.any(cond_bad):
            raise DomainError(message, offset)
    elif cond_bad:
        raise DomainError(message, offset)


def d_div(a, b, offset=-1):
    bb = base_value(b)
    _domain_check(np.asarray(bb) == 0.0 if isinstance(bb, np.ndarray) else bb == 0.0,
                  "division by zero", offset)
    if isinstance(a, Dual) or isinstance(b, Dual):
        if not isinstance(a, Dual):
            a = Dual(a, 0.0)
        if not isinstance(b, Dual):
            b = Dual(b, 0.0)
        q = d_div(a.value, b.value, offset)
        dq = d_div(a.deriv * b.value - a.value * b.deriv, b.value * b.value, offset)
        return Dual(q, dq)
    return a / b


def d_sin(x):
    if isinstance(x, Dual):
        return Dual(d_sin(x.value), d_cos(x.value) * x.deriv)
    return np.sin(x) if isinstance(x, np.ndarray) else math.sin(x)


def d_cos(x):
    if isinstance(x, Dual):
        return Dual(d_cos(x.value), -(d_sin(x.value)) * x.deriv)
    return np.cos(x) if isinstance(x, np.ndarray) else math.cos(x)


def d_exp(x):
    if isinstance(x, Dual):
        e = d_exp(x.value)
        return Dual(e, e * x.deriv)
    return np.exp(x) if isinstance(x, np.ndarray) else math.exp(x)


def d_sqrt(x, offset=-1):
    b = base_value(x)
    _domain_check(np.asarray(b) < 0.0 if isinstance(b, np.ndarray) else b < 0.0,
                  "sqrt of negative", offset)
    if isinstance(x, Dual):
        r = d_sqrt(x.value, offset)
        return Dual(r, d_div(x.deriv, 2.0 * r, offset))
    return np.sqrt(x) if isinstance(x, np.ndarray) else math.sqrt(x)


def d_log(x, offset=-1):
    b = base_value(x)
    _domain_check(np.asarray(b) <= 0.0 if isinstance(b, np.ndarray) else b <= 0.0,
                  "log of non-positive", offset)
    if isinstance(x, Dual):
        return Dual(d_log(x.value, offset), d_div(x.deriv, x.value, offset))
    return np.log(x) if isinstance(x, np.ndarray) else math.log(x)


def d_pow(x, c, offset=-1):
    """x ** c for constant real c (integer c admits negative bases)."""
    if c == 0.0:
        return _ones_like(x)
    if c == 1.0:
        return x
    is_int = float(c).is_integer()
    b = base_value(x)
    if not is_int:
        _domain_check(np.asarray(b) < 0.0 if isinstance(b, np.ndarray) else b < 0.0,
                      "non-integer power of negative base", offset)
        _domain_check(np.asarray(b) == 0.0 if isinstance(b, np.ndarray) else b == 0.0,
                      "non-integer power of zero base", offset)
    elif c < 0:
        _domain_check(np.asarray(b) == 0.0 if isinstance(b, np.ndarray) else b == 0.0,
                      "zero base with negative exponent", offset)
    if isinstance(x, Dual):
        v = d_pow(x.value, c, offset)
        dv = c * d_pow(x.value, c - 1.0, offset) * x.deriv
        return Dual(v, dv)
    if isinstance(x, np.ndarray):
        return x ** c
    if is_int:
        return float(x ** int(c))
    return math.pow(x, c)


def _ones_like(x):
    b = base_value(x)
    if isinstance(b, np.ndarray):
        return np.ones_like(b)
    return 1.0


_UNARY_DISPATCH = {
    "sin": lambda x, off: d_sin(x),
    "cos": lambda x, off: d_cos(x),
    "exp": lambda x, off: d_exp(x),
    "sqrt": d_sqrt,
    "log": d_log,
}


# ---------------------------------------------------------------------------
# Compilation: each AST is lowered once to a plain Python function of the
# coordinate list.  Arithmetic uses native operators (which the Dual class
# overloads), domain-sensitive operations go through the d_* helpers so
# DomainError offsets survive.  The compiled function is cached on the node.


def _lower(node, lines, names):
    key = id(node)
    if key in names:
        return names[key]
    if isinstance(node, Const):
        name = repr(node.value)
    elif isinstance(node, Var):
        name = f"values[{node.index}]"
    elif isinstance(node, Unary):
        arg = _lower(node.arg, lines, names)
        name = f"t{len(lines)}"
        if node.op == "neg":
            lines.append(f"{name} = -{arg}")
        elif node.op in ("sqrt", "log"):
            lines.append(f"{name} = d_{node.op}({arg}, {node.offset})")
        else:
            lines.append(f"{name} = d_{node.op}({arg})")
    elif isinstance(node, Binary):
        lhs = _lower(node.lhs, lines, names)
        if node.op == "^":
            name = f"t{len(lines)}"
            if node.rhs.value == 2.0:
                lines.append(f"{name} = {lhs} * {lhs}")
            elif node.rhs.value == 3.0:
                lines.append(f"{name} = {lhs} * {lhs} * {lhs}")
            elif node.rhs.value == 4.0:
                lines.append(f"{name} = ({lhs} * {lhs}) * ({lhs} * {lhs})")
            else:
                lines.append(
                    f"{name} = d_pow({lhs}, {node.rhs.value!r}, {node.offset})")
        elif node.op == "/":
            rhs = _lower(node.rhs, lines, names)
            name = f"t{len(lines)}"
            lines.append(f"{name} = d_div({lhs}, {rhs}, {node.offset})")
        else:
            rhs = _lower(node.rhs, lines, names)
            name = f"t{len(lines)}"
            lines.append(f"{name} = {lhs} {node.op} {rhs}")
    else:
        raise TypeError(f"not an Expr node: {node!r}")
    names[key] = name
    return name


_COMPILE_GLOBALS = None


def _compile(node):
    global _COMPILE_GLOBALS
    if _COMPILE_GLOBALS is None:
        _COMPILE_GLOBALS = {
            "d_div": d_div, "d_pow": d_pow, "d_sin": d_sin, "d_cos": d_cos,
            "d_exp": d_exp, "d_sqrt": d_sqrt, "d_log": d_log,
        }
    lines = []
    names = {}
    result = _lower(node, lines, names)
    body = "\n    ".join(lines + [f"return {result}"])
    src = f"def _compiled(values):\n    {body}\n"
    namespace = dict(_COMPILE_GLOBALS)
    exec(src, namespace)
    return namespace["_compiled"]


def compiled(node):
    """Compiled evaluator for an AST (cached on the node)."""
    fn = node.__dict__.get("_compiled_fn")
    if fn is None:
        fn = _compile(node)
        object.__setattr__(node, "_compiled_fn", fn)
    return fn


def compile_many(nodes):
    """One function evaluating several ASTs at once (shared subtrees are
    lowered a single time; identity-based, so programmatically built
    coefficient families benefit)."""
    global _COMPILE_GLOBALS
    if _COMPILE_GLOBALS is None:
        compiled(Const(0.0))
    lines = []
    names = {}
    results = [_lower(node, lines, names) for node in nodes]
    body = "\n    ".join(lines + ["return (" + ", ".join(results) + ",)"])
    src = f"def _compiled(values):\n    {body}\n"
    namespace = dict(_COMPILE_GLOBALS)
    exec(src, namespace)
    return namespace["_compiled"]


def differentiate(e, index):
    """Symbolic partial derivative with respect to variable *index*.

    Exact (no truncation): used to build compiled gradient kernels for
    the integrator hot paths.  Dual numbers remain the mechanism for
    directional derivatives of arbitrary (non-AST) pipelines.
    """
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.index == index else 0.0)
    if isinstance(e, Unary):
        da = differentiate(e.arg, index)
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(Unary("cos", e.arg), da)
        if e.op == "cos":
            return neg(mul(Unary("sin", e.arg), da))
        if e.op == "exp":
            return mul(e, da)
        if e.op == "sqrt":
            return div(da, mul(Const(2.0), e))
        if e.op == "log":
            return div(da, e.arg)
        raise TypeError(f"unknown unary op {e.op!r}")
    if isinstance(e, Binary):
        if e.op == "^":
            c = e.rhs.value
            da = differentiate(e.lhs, index)
            if c == 0.0:
                return Const(0.0)
            return mul(Const(c), mul(pow_const(e.lhs, c - 1.0), da))
        da = differentiate(e.lhs, index)
        db = differentiate(e.rhs, index)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.rhs), mul(e.lhs, db))
        if e.op == "/":
            return div(sub(mul(da, e.rhs), mul(e.lhs, db)),
                       mul(e.rhs, e.rhs))
        raise TypeError(f"unknown binary op {e.op!r}")
    raise TypeError(f"not an Expr node: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation


def _eval(node, values):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return values[node.index]
    if isinstance(node, Unary):
        x = _eval(node.arg, values)
        if node.op == "neg":
            return -x
        return _UNARY_DISPATCH[node.op](x, node.offset)
    if isinstance(node, Binary):
        if node.op == "^":
            base = _eval(node.lhs, values)
            return d_pow(base, node.rhs.value, node.offset)
        a = _eval(node.lhs, values)
        b = _eval(node.rhs, values)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return d_div(a, b, node.offset)
    raise TypeError(f"not an Expr node: {node!r}")


def evaluate(e, point):
    """Evaluate *e* at *point* (sequence of floats, arrays or Duals)."""
    if isinstance(e, Expr):
        return compiled(e)(list(point))
    # callable coefficient (internal constructions)
    return e(list(point))


def directional_derivative(e, point, direction):
    """Exact forward-mode derivative of *e* at *point* along *direction*."""
    pt = list(point)
    dr = list(direction)
    if len(pt) != len(dr):
        raise ValueError("point/direction length mismatch")
    seeded = [Dual(p, d) for p, d in zip(pt, dr)]
    out = evaluate(e, seeded)
    return deriv_part(out)


def gradient(e, point):
    """Chart gradient of *e* at *point* (one dual evaluation per coordinate).

    All coordinates are lifted to the same dual layer so the result stays
    correct when *point* itself contains dual numbers.
    """
    pt = list(point)
    m = len(pt)
    out = []
    for b in range(m):
        seeded = [Dual(c, 1.0 if a == b else 0.0) for a, c in enumerate(pt)]
        out.append(deriv_part(evaluate(e, seeded)))
    if any(isinstance(v, Dual) for v in out):
        return out
    return np.array(out, dtype=float)
