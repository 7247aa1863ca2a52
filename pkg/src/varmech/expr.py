"""Symbolic expression trees over named real variables.

Everything the engine derives (Lagrangians, anchors, structure functions,
momenta, residuals) lives in this small AST: constants, variables, the unary
functions neg/sqrt/sin/cos/exp/log/abs/sign, the binary operations + - * /,
and powers with a constant real exponent.  There is no canonical-form
rewriting beyond constant folding and the 0/1 identities; equality of derived
expressions is always established numerically at random points.

The module also owns jet charts: ordered variable lists carrying a weight and
a total-time-derivative rule, which is what turns partial derivatives of a
Lagrangian into the d/dt chains of higher-order mechanics.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Num", "Sym", "Call", "BinOp", "Pow",
    "ExprError", "ParseError", "EvalError", "ChartError",
    "num", "sym", "neg", "add", "sub", "mul", "div", "pow_", "call",
    "parse", "serialize", "to_latex", "free_vars", "evaluate", "diff",
    "subst", "compile_expr", "constant_value",
    "JetVar", "Chart", "qjet_chart", "total_derivative", "check_homogeneity",
]

UNARY_FUNCTIONS = ("sqrt", "sin", "cos", "exp", "log", "abs", "sign")


class ExprError(Exception):
    """Base class for expression-layer failures."""


class ParseError(ExprError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class EvalError(ExprError):
    """Unbound variable or a domain error, annotated with the subexpression."""


class ChartError(ExprError):
    """A chart is missing a variable or a d/dt rule that an operation needs."""


# ---------------------------------------------------------------------------
# AST nodes


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ExprError(f"non-finite constant {self.value!r}")


@dataclass(frozen=True, slots=True)
class Sym(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Call(Expr):
    fn: str  # 'neg' or one of UNARY_FUNCTIONS
    arg: Expr


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str  # '+', '-', '*', '/'
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: float  # constant exponent only


# ---------------------------------------------------------------------------
# Smart constructors: constant folding plus 0/1 identities, nothing more.


def num(v: float) -> Num:
    return Num(float(v))


def sym(name: str) -> Sym:
    return Sym(name)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Call) and a.fn == "neg":
        return a.arg
    return Call("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if isinstance(a, Num) and a.value == 0.0:
        return b
    if isinstance(b, Num) and b.value == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if isinstance(b, Num) and b.value == 0.0:
        return a
    if isinstance(a, Num) and a.value == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if isinstance(a, Num):
        if a.value == 0.0:
            return Num(0.0)
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
    if isinstance(b, Num):
        if b.value == 0.0:
            return Num(0.0)
        if b.value == 1.0:
            return a
        if b.value == -1.0:
            return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Num) and b.value != 0.0:
        if isinstance(a, Num):
            return Num(a.value / b.value)
        if b.value == 1.0:
            return a
    if isinstance(a, Num) and a.value == 0.0 and not (isinstance(b, Num) and b.value == 0.0):
        return Num(0.0)
    return BinOp("/", a, b)


def pow_(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0.0:
        return Num(1.0)
    if exponent == 1.0:
        return base
    if isinstance(base, Num):
        try:
            v = _eval_pow(base.value, exponent, None)
        except EvalError:
            pass
        else:
            return Num(v)
    return Pow(base, exponent)


def call(fn: str, arg: Expr) -> Expr:
    if fn == "neg":
        return neg(arg)
    if fn not in UNARY_FUNCTIONS:
        raise ExprError(f"unknown function {fn!r}")
    if isinstance(arg, Num):
        try:
            return Num(_eval_call(fn, arg.value, None))
        except EvalError:
            pass
    return Call(fn, arg)


def add_all(terms: Iterable[Expr]) -> Expr:
    acc: Expr = Num(0.0)
    for t in terms:
        acc = add(acc, t)
    return acc


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r"|(?P<ws>\s+)"
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str   # 'num' | 'ident' | 'op' | 'end'
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, text, line, m.start() - line_start + 1))
        for i, ch in enumerate(text):
            if ch == "\n":
                line += 1
                line_start = m.start() + i + 1
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    """Recursive-descent parser for the infix grammar (see docs/grammar.md).

        expr   := term (('+'|'-') term)*
        term   := unary (('*'|'/') unary)*
        unary  := '-' unary | power
        power  := atom ('^' unary)?          # exponent must fold to a constant
        atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
    """

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.next()
        if tok.kind != "op" or tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r} ", tok.line, tok.column)

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.line, tok.column)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.next()
            exp_tok = self.peek()
            exponent = self.unary()
            c = constant_value(exponent)
            if c is None:
                raise ParseError("exponent must be a constant", exp_tok.line, exp_tok.column)
            return pow_(base, c)
        return base

    def atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in UNARY_FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.line, tok.column)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return call(tok.text, arg)
            return Sym(tok.text)
        if tok.kind == "op" and tok.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.column)


def parse(source: str) -> Expr:
    """Parse infix text into an Expr.  Raises ParseError with line/column."""
    return _Parser(_tokenize(source)).parse()


# ---------------------------------------------------------------------------
# Serialization (round-trips through parse for smart-constructed trees)

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _serialize(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return f"-{_fmt_number(-e.value)}", _PREC_NEG
        return _fmt_number(e.value), _PREC_ATOM
    if isinstance(e, Sym):
        return e.name, _PREC_ATOM
    if isinstance(e, Call):
        if e.fn == "neg":
            s, p = _serialize(e.arg)
            if p < _PREC_NEG:
                s = f"({s})"
            return f"-{s}", _PREC_NEG
        s, _ = _serialize(e.arg)
        return f"{e.fn}({s})", _PREC_ATOM
    if isinstance(e, Pow):
        bs, bp = _serialize(e.base)
        if bp <= _PREC_POW:
            bs = f"({bs})"
        es = _fmt_number(e.exponent) if e.exponent >= 0 else f"(-{_fmt_number(-e.exponent)})"
        return f"{bs}^{es}", _PREC_POW
    if isinstance(e, BinOp):
        mine = _PREC_ADD if e.op in "+-" else _PREC_MUL
        ls, lp = _serialize(e.left)
        rs, rp = _serialize(e.right)
        if lp < mine:
            ls = f"({ls})"
        # subtraction and division do not associate on the right
        if rp < mine or (rp == mine and e.op in "-/"):
            rs = f"({rs})"
        # a + -b and a * -b need parens around the right operand
        if rs.startswith("-") and rp == _PREC_NEG:
            rs = f"({rs})"
        return f"{ls} {e.op} {rs}" if e.op in "+-" else f"{ls}{e.op}{rs}", mine
    raise TypeError(f"not an Expr: {e!r}")


def serialize(e: Expr) -> str:
    """Render as infix text; parse(serialize(e)) == e structurally."""
    return _serialize(e)[0]


_LATEX_FN = {"sqrt": r"\sqrt", "sin": r"\sin", "cos": r"\cos", "exp": r"\exp",
             "log": r"\log", "abs": r"\mathrm{abs}", "sign": r"\mathrm{sgn}"}


def to_latex(e: Expr, var_latex: Mapping[str, str] | None = None) -> str:
    """LaTeX rendering; var_latex maps flat variable names to LaTeX forms."""

    def v(name: str) -> str:
        return var_latex.get(name, name) if var_latex else name

    def rec(e: Expr) -> tuple[str, int]:
        if isinstance(e, Num):
            s = _fmt_number(abs(e.value))
            return (f"-{s}", _PREC_NEG) if e.value < 0 else (s, _PREC_ATOM)
        if isinstance(e, Sym):
            return v(e.name), _PREC_ATOM
        if isinstance(e, Call):
            s, p = rec(e.arg)
            if e.fn == "neg":
                if p < _PREC_NEG:
                    s = f"\\left({s}\\right)"
                return f"-{s}", _PREC_NEG
            if e.fn == "sqrt":
                return rf"\sqrt{{{s}}}", _PREC_ATOM
            if e.fn == "abs":
                return rf"\left|{s}\right|", _PREC_ATOM
            return rf"{_LATEX_FN[e.fn]}\left({s}\right)", _PREC_ATOM
        if isinstance(e, Pow):
            bs, bp = rec(e.base)
            if bp <= _PREC_POW:
                bs = rf"\left({bs}\right)"
            return rf"{bs}^{{{_fmt_number(e.exponent)}}}", _PREC_POW
        if isinstance(e, BinOp):
            if e.op == "/":
                ls, _ = rec(e.left)
                rs, _ = rec(e.right)
                return rf"\frac{{{ls}}}{{{rs}}}", _PREC_ATOM
            mine = _PREC_ADD if e.op in "+-" else _PREC_MUL
            ls, lp = rec(e.left)
            rs, rp = rec(e.right)
            if lp < mine:
                ls = rf"\left({ls}\right)"
            if rp < mine or (rp == mine and e.op == "-") or (rs.startswith("-") and e.op in "+-*"):
                rs = rf"\left({rs}\right)"
            joiner = {"+": " + ", "-": " - ", "*": r" \, "}[e.op]
            return f"{ls}{joiner}{rs}", mine
        raise TypeError(f"not an Expr: {e!r}")

    return rec(e)[0]


# ---------------------------------------------------------------------------
# Structure queries


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Sym):
        return frozenset((e.name,))
    if isinstance(e, Call):
        return free_vars(e.arg)
    if isinstance(e, Pow):
        return free_vars(e.base)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    raise TypeError(f"not an Expr: {e!r}")


def constant_value(e: Expr) -> float | None:
    """The value of a variable-free expression, or None."""
    if isinstance(e, Num):
        return e.value
    if free_vars(e):
        return None
    return evaluate(e, {})


# ---------------------------------------------------------------------------
# Evaluation


def _domain(cond: bool, what: str, node: Expr | None):
    if cond:
        where = f" in {serialize(node)!r}" if node is not None else ""
        raise EvalError(f"domain error: {what}{where}")


def _eval_call(fn: str, x: float, node: Expr | None) -> float:
    if fn == "neg":
        return -x
    if fn == "sqrt":
        _domain(x < 0, f"sqrt of negative value {x!r}", node)
        return math.sqrt(x)
    if fn == "sin":
        return math.sin(x)
    if fn == "cos":
        return math.cos(x)
    if fn == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            raise EvalError(f"overflow in exp({x!r})") from None
    if fn == "log":
        _domain(x <= 0, f"log of non-positive value {x!r}", node)
        return math.log(x)
    if fn == "abs":
        return abs(x)
    if fn == "sign":
        return 0.0 if x == 0.0 else math.copysign(1.0, x)
    raise ExprError(f"unknown function {fn!r}")


def _eval_pow(base: float, exponent: float, node: Expr | None) -> float:
    if exponent.is_integer():
        _domain(base == 0.0 and exponent < 0, "zero base with negative exponent", node)
        return base ** exponent
    _domain(base < 0, f"negative base {base!r} with non-integer exponent", node)
    _domain(base == 0.0 and exponent < 0, "zero base with negative exponent", node)
    try:
        return base ** exponent
    except OverflowError:
        raise EvalError(f"overflow in {base!r}^{exponent!r}") from None


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate with IEEE doubles; unbound variables and domain errors raise."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Sym):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Call):
        return _eval_call(e.fn, evaluate(e.arg, bindings), e)
    if isinstance(e, Pow):
        return _eval_pow(evaluate(e.base, bindings), e.exponent, e)
    if isinstance(e, BinOp):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        _domain(b == 0.0, "division by zero", e)
        return a / b
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Differentiation and substitution


def diff(e: Expr, name: str) -> Expr:
    """Exact symbolic partial derivative with respect to a variable."""
    if isinstance(e, (Num,)):
        return Num(0.0)
    if isinstance(e, Sym):
        return Num(1.0) if e.name == name else Num(0.0)
    if isinstance(e, Call):
        da = diff(e.arg, name)
        if isinstance(da, Num) and da.value == 0.0:
            return Num(0.0)
        u = e.arg
        if e.fn == "neg":
            return neg(da)
        if e.fn == "sqrt":
            return div(da, mul(Num(2.0), call("sqrt", u)))
        if e.fn == "sin":
            return mul(call("cos", u), da)
        if e.fn == "cos":
            return neg(mul(call("sin", u), da))
        if e.fn == "exp":
            return mul(call("exp", u), da)
        if e.fn == "log":
            return div(da, u)
        if e.fn == "abs":
            # abs'(0) is defined to be 0, matching sign(0) = 0
            return mul(call("sign", u), da)
        if e.fn == "sign":
            return Num(0.0)
    if isinstance(e, Pow):
        db = diff(e.base, name)
        if isinstance(db, Num) and db.value == 0.0:
            return Num(0.0)
        return mul(mul(Num(e.exponent), pow_(e.base, e.exponent - 1.0)), db)
    if isinstance(e, BinOp):
        da = diff(e.left, name)
        db = diff(e.right, name)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        return div(sub(mul(da, e.right), mul(e.left, db)), pow_(e.right, 2.0))
    raise TypeError(f"not an Expr: {e!r}")


def subst(e: Expr, replacements: Mapping[str, Expr]) -> Expr:
    """Substitute expressions for variables, rebuilding with smart constructors."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Sym):
        return replacements.get(e.name, e)
    if isinstance(e, Call):
        return call(e.fn, subst(e.arg, replacements)) if e.fn != "neg" else neg(subst(e.arg, replacements))
    if isinstance(e, Pow):
        return pow_(subst(e.base, replacements), e.exponent)
    if isinstance(e, BinOp):
        a = subst(e.left, replacements)
        b = subst(e.right, replacements)
        return {"+": add, "-": sub, "*": mul, "/": div}[e.op](a, b)
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Compilation to a positional numpy-backed callable (internal fast path)


def _codegen(e: Expr, index: Mapping[str, int]) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Sym):
        return f"v[{index[e.name]}]"
    if isinstance(e, Call):
        a = _codegen(e.arg, index)
        if e.fn == "neg":
            return f"(-({a}))"
        npfn = {"sqrt": "np.sqrt", "sin": "np.sin", "cos": "np.cos", "exp": "np.exp",
                "log": "np.log", "abs": "np.abs", "sign": "np.sign"}[e.fn]
        return f"{npfn}({a})"
    if isinstance(e, Pow):
        return f"(({_codegen(e.base, index)})**({e.exponent!r}))"
    if isinstance(e, BinOp):
        return f"({_codegen(e.left, index)}{e.op}{_codegen(e.right, index)})"
    raise TypeError(f"not an Expr: {e!r}")


def compile_expr(e: Expr, names: Sequence[str]) -> Callable:
    """Compile to f(values) with values aligned to `names`.

    Intended for hot loops (integration, grid sweeps); values should be numpy
    scalars or arrays.  Domain violations produce nan/inf instead of raising,
    so callers must guard with finiteness checks where it matters.
    """
    missing = free_vars(e) - set(names)
    if missing:
        raise EvalError(f"expression uses variables not in the compile chart: {sorted(missing)}")
    index = {n: i for i, n in enumerate(names)}
    src = f"def _f(v):\n    return {_codegen(e, index)}\n"
    ns: dict = {"np": np}
    exec(src, ns)  # noqa: S102 - generated from our own AST only
    return ns["_f"]


# ---------------------------------------------------------------------------
# Jet charts and the total time derivative


@dataclass(frozen=True, slots=True)
class JetVar:
    """One chart variable: flat name plus its (base, component, order, weight)."""
    name: str
    base: str
    comp: int   # 1-based component index; 0 when the base is scalar
    order: int  # jet order (0 for base-manifold coordinates)
    weight: int

    def __post_init__(self):
        if self.weight < 0:
            raise ChartError(f"negative weight on {self.name!r}")


QJET = "qjet"      # d/dt q_i = q_{i+1}
YGRADED = "ygraded"  # d/dt y_i = (i+1) y_{i+1}


class Chart:
    """An ordered jet chart with a total-time-derivative rule per variable.

    `tderiv` maps a variable name to the expression for its time derivative;
    variables at the top recorded order have no entry, and differentiating
    through them raises ChartError (the chart is too shallow).
    """

    def __init__(self, variables: Sequence[JetVar], rule: str, tderiv: Mapping[str, Expr]):
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ChartError("duplicate variable names in chart")
        self.variables = tuple(variables)
        self.rule = rule
        self._tderiv = dict(tderiv)
        self._by_name = {v.name: v for v in variables}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def var(self, name: str) -> JetVar:
        try:
            return self._by_name[name]
        except KeyError:
            raise ChartError(f"variable {name!r} is not in the chart") from None

    def weight(self, name: str) -> int:
        return self.var(name).weight

    def tderiv(self, name: str) -> Expr:
        try:
            return self._tderiv[name]
        except KeyError:
            raise ChartError(
                f"chart too shallow: no d/dt rule for {name!r} "
                f"(add jet variables above order {self.var(name).order})"
            ) from None


def qjet_chart(m: int, depth: int, base: str = "q") -> Chart:
    """Classical jet chart q, q(1), ..., q(depth) with d/dt q_i = q_{i+1}."""
    def name(A: int, i: int) -> str:
        return f"{base}_{i}" if m == 1 else f"{base}{A}_{i}"

    variables, tderiv = [], {}
    for A in range(1, m + 1):
        for i in range(depth + 1):
            variables.append(JetVar(name(A, i), base, 0 if m == 1 else A, i, i))
            if i < depth:
                tderiv[name(A, i)] = Sym(name(A, i + 1))
    return Chart(variables, QJET, tderiv)


def total_derivative(e: Expr, chart: Chart, order: int = 1) -> Expr:
    """Apply the chart's total time derivative `order` times via the chain rule."""
    if order < 0:
        raise ValueError("order must be non-negative")
    for _ in range(order):
        e = add_all(mul(diff(e, v), chart.tderiv(v)) for v in sorted(free_vars(e)))
    return e


def check_homogeneity(
    e: Expr,
    chart: Chart,
    degree: int,
    *,
    points: int = 100,
    seed: int = 0,
    tol: float = 1e-9,
    scales: Sequence[float] = (0.5, 2.0, 3.0),
) -> bool:
    """Numerically test e(h_t(p)) = t^degree e(p) under the weight dilation h_t.

    Points are drawn uniformly from [-1, 1] per variable with a seeded
    generator; samples where the expression is undefined are redrawn.
    """
    names = sorted(free_vars(e))
    weights = {n: chart.weight(n) for n in names}  # raises if unweighted
    rng = np.random.default_rng(seed)
    checked = 0
    attempts = 0
    while checked < points:
        attempts += 1
        if attempts > 50 * points:
            raise EvalError("could not sample enough points in the expression's domain")
        pt = {n: rng.uniform(-1.0, 1.0) for n in names}
        try:
            base_val = evaluate(e, pt)
            for t in scales:
                scaled = {n: (t ** weights[n]) * x for n, x in pt.items()}
                lhs = evaluate(e, scaled)
                rhs = (t ** degree) * base_val
                if abs(lhs - rhs) > tol * max(1.0, abs(rhs)):
                    return False
        except EvalError:
            continue
        checked += 1
    return True
