"""
The closed-form expression language used for metric components, functions and tensor fields.

Grammar (precedence from loosest to tightest):

    expr    :: term [ ('+' | '-') term ]*
    term    :: unary [ ('*' | '/') unary ]*
    unary   :: '-' unary | power
    power   :: atom [ ('^' | '**') unary ]
    atom    :: number | name '(' expr ')' | name | '(' expr ')'

`+ - * /` associate to the left, `^` to the right. Identifiers are coordinate
names or one of the function names in `FUNCTIONS`; unknown names are only
reported when the expression is evaluated.
"""

from __future__ import annotations

import abc
import dataclasses
import functools
import typing as t

import numpy as np
import pyparsing as pp
from pydantic import GetCoreSchemaHandler
from pydantic_core import core_schema

from conemob.error import DomainError, ExprSyntaxError, UnknownIdentifierError
from conemob.jets import Jet, jet_compose_elementary, jet_div, jet_mul, jet_pow, ncoeffs

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")
"""Function names understood by the evaluator."""

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


class _JetEnv:
    __slots__ = ("variables", "nvars", "order", "batch")

    def __init__(self, variables: dict[str, Jet], nvars: int, order: int, batch: tuple[int, ...]):
        self.variables = variables
        self.nvars = nvars
        self.order = order
        self.batch = batch


class Expr(abc.ABC):
    """
    Base class of the expression AST.

    Nodes are immutable and hashable. Python operators build new trees, with
    light constant folding so programmatic construction stays readable.
    """

    @abc.abstractmethod
    def _jet(self, env: _JetEnv) -> Jet:
        ...

    @property
    @abc.abstractmethod
    def precedence(self) -> int:
        ...

    @abc.abstractmethod
    def free_variables(self) -> frozenset[str]:
        ...

    # Construction helpers

    def __add__(self, other: Expr | float) -> Expr:
        return add(self, as_expr(other))

    def __radd__(self, other: float) -> Expr:
        return add(as_expr(other), self)

    def __sub__(self, other: Expr | float) -> Expr:
        return sub(self, as_expr(other))

    def __rsub__(self, other: float) -> Expr:
        return sub(as_expr(other), self)

    def __mul__(self, other: Expr | float) -> Expr:
        return mul(self, as_expr(other))

    def __rmul__(self, other: float) -> Expr:
        return mul(as_expr(other), self)

    def __truediv__(self, other: Expr | float) -> Expr:
        return div(self, as_expr(other))

    def __rtruediv__(self, other: float) -> Expr:
        return div(as_expr(other), self)

    def __neg__(self) -> Expr:
        if isinstance(self, Num):
            return Num(-self.value)
        return Neg(self)

    def __pow__(self, other: Expr | float) -> Expr:
        exponent = as_expr(other)
        if isinstance(exponent, Num) and exponent.value == 1:
            return self
        return Pow(self, exponent)

    # Pydantic integration: parse from text, serialize back to text

    @classmethod
    def __get_pydantic_core_schema__(cls, source: t.Any, handler: GetCoreSchemaHandler) -> core_schema.CoreSchema:
        return core_schema.no_info_plain_validator_function(
            _validate_expr,
            serialization=core_schema.plain_serializer_function_ser_schema(str),
        )


@dataclasses.dataclass(frozen=True)
class Num(Expr):
    value: float

    precedence = _PRECEDENCE["atom"]

    def __str__(self) -> str:
        if float(self.value).is_integer() and abs(self.value) < 1e15:
            text = str(int(self.value))
        else:
            text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text

    def _jet(self, env: _JetEnv) -> Jet:
        return Jet.constant(np.full(env.batch, float(self.value)), env.nvars, env.order)

    def free_variables(self) -> frozenset[str]:
        return frozenset()


@dataclasses.dataclass(frozen=True)
class Var(Expr):
    name: str

    precedence = _PRECEDENCE["atom"]

    def __str__(self) -> str:
        return self.name

    def _jet(self, env: _JetEnv) -> Jet:
        if self.name not in env.variables:
            raise UnknownIdentifierError(self.name)
        return env.variables[self.name]

    def free_variables(self) -> frozenset[str]:
        return frozenset({self.name})


@dataclasses.dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    precedence = _PRECEDENCE["neg"]

    def __str__(self) -> str:
        return f"-{_wrap(self.operand, self.precedence, strict=False)}"

    def _jet(self, env: _JetEnv) -> Jet:
        return -self.operand._jet(env)

    def free_variables(self) -> frozenset[str]:
        return self.operand.free_variables()


@dataclasses.dataclass(frozen=True)
class BinOp(Expr):
    op: t.Literal["+", "-", "*", "/"]
    left: Expr
    right: Expr

    @property  # type: ignore[override]
    def precedence(self) -> int:
        return _PRECEDENCE[self.op]

    def __str__(self) -> str:
        left = _wrap(self.left, self.precedence, strict=False)
        right = _wrap(self.right, self.precedence, strict=True)
        return f"{left} {self.op} {right}"

    def _jet(self, env: _JetEnv) -> Jet:
        a = self.left._jet(env)
        b = self.right._jet(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return jet_mul(a, b)
        try:
            return jet_div(a, b)
        except DomainError as e:
            raise DomainError(e.function, e.value, str(self)) from e

    def free_variables(self) -> frozenset[str]:
        return self.left.free_variables() | self.right.free_variables()


@dataclasses.dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr

    precedence = _PRECEDENCE["^"]

    def __str__(self) -> str:
        base = _wrap(self.base, self.precedence, strict=True)
        exponent = _wrap(self.exponent, self.precedence, strict=False)
        return f"{base}^{exponent}"

    def _constant_exponent(self) -> float | None:
        node = self.exponent
        sign = 1.0
        while isinstance(node, Neg):
            sign, node = -sign, node.operand
        return sign * node.value if isinstance(node, Num) else None

    def _jet(self, env: _JetEnv) -> Jet:
        base = self.base._jet(env)
        exponent = self._constant_exponent()
        try:
            if exponent is not None:
                return jet_pow(base, exponent)
            # General exponent: exp(y * log(x)), positive base only
            log_base = jet_compose_elementary("log", base)
            return jet_compose_elementary("exp", jet_mul(self.exponent._jet(env), log_base))
        except DomainError as e:
            raise DomainError("pow", e.value, str(self)) from e

    def free_variables(self) -> frozenset[str]:
        return self.base.free_variables() | self.exponent.free_variables()


@dataclasses.dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    precedence = _PRECEDENCE["atom"]

    def __str__(self) -> str:
        return f"{self.func}({self.arg})"

    def _jet(self, env: _JetEnv) -> Jet:
        if self.func not in FUNCTIONS:
            raise UnknownIdentifierError(self.func)
        inner = self.arg._jet(env)
        try:
            return jet_compose_elementary(self.func, inner)
        except DomainError as e:
            raise DomainError(self.func, e.value, str(self)) from e

    def free_variables(self) -> frozenset[str]:
        return self.arg.free_variables()


def _wrap(node: Expr, parent: int, *, strict: bool) -> str:
    text = str(node)
    if node.precedence < parent or (strict and node.precedence == parent):
        return f"({text})"
    return text


# Constant folding constructors


def as_expr(value: Expr | float | str) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Num(float(value))


def _is(node: Expr, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return -b
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(a, 0) and not _is(b, 0):
        return Num(0.0)
    return BinOp("/", a, b)


def call(func: str, arg: Expr) -> Expr:
    return Call(func, arg)


# Parser


@functools.lru_cache(maxsize=1)
def _grammar() -> pp.ParserElement:
    pp.ParserElement.enable_packrat()

    number = pp.Regex(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?").set_name("number")
    number.set_parse_action(lambda toks: Num(float(toks[0])))
    name = pp.Word(pp.alphas + "_", pp.alphanums + "_").set_name("identifier")

    lpar = pp.Suppress("(")
    rpar = pp.Suppress(")")
    add_op = pp.one_of("+ -")
    mul_op = pp.Regex(r"\*(?!\*)|/").set_name("'*' or '/'")
    pow_op = pp.Suppress(pp.Literal("**") | pp.Literal("^"))
    minus = pp.Suppress("-")

    expr = pp.Forward().set_name("expression")
    unary = pp.Forward().set_name("operand")

    call_ = (name + lpar - expr - rpar).set_parse_action(lambda toks: Call(toks[0], toks[1]))
    variable = name.copy().set_parse_action(lambda toks: Var(toks[0]))
    group = lpar - expr - rpar
    atom = (number | call_ | variable | group).set_name("operand")

    power = (atom + pp.Optional(pow_op - unary)).set_parse_action(
        lambda toks: Pow(toks[0], toks[1]) if len(toks) == 2 else toks[0]
    )
    unary <<= (minus - unary).set_parse_action(lambda toks: Neg(toks[0])) | power
    term = (unary + pp.ZeroOrMore(mul_op - unary)).set_parse_action(_fold)
    expr <<= (term + pp.ZeroOrMore(add_op - term)).set_parse_action(_fold)
    return expr


def _fold(toks: pp.ParseResults) -> Expr:
    items = list(toks)
    node = items[0]
    for op, right in zip(items[1::2], items[2::2]):
        node = BinOp(op, node, right)
    return node


@functools.lru_cache(maxsize=4096)
def parse(source: str) -> Expr:
    """
    Parse an expression.

    Args:
        source: Expression text.

    Returns:
        The expression tree.

    Raises:
        ExprSyntaxError: With the UTF-8 byte offset of the failure.
    """
    try:
        result = _grammar().parse_string(source, parse_all=True)
    except pp.ParseBaseException as e:
        offset = len(source[: e.loc].encode("utf-8"))
        raise ExprSyntaxError(source, offset, e.msg) from None
    node = result[0]
    if not isinstance(node, Expr):
        raise ExprSyntaxError(source, 0, "empty expression")
    return node


def try_parse(source: str) -> Expr | None:
    """
    Tries to parse an expression.

    Returns:
        The expression tree, or None if the text is not a valid expression.
    """
    try:
        return parse(source)
    except ExprSyntaxError:
        return None


def _validate_expr(value: t.Any) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Num(float(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"Expected an expression string, got {type(value).__name__}")


# Evaluation


def eval_jet(e: Expr, point: np.ndarray | t.Sequence[float], order: int, coords: t.Sequence[str]) -> Jet:
    """
    Truncated Taylor expansion of an expression at a point.

    Args:
        e: The expression.
        point: Coordinates, shape `(n,)` or a batch of points `(..., n)`.
        order: Jet order (0 to 4).
        coords: Coordinate names, in the order of the point components.

    Returns:
        A scalar jet (or a batch of them) with `len(coords)` variables.

    Raises:
        DomainError: If an elementary function is evaluated outside its domain.
        UnknownIdentifierError: If the expression names something unknown.
    """
    values = np.asarray(point, dtype=float)
    if values.shape[-1:] != (len(coords),):
        raise ValueError(f"Point has shape {values.shape}, expected {len(coords)} coordinates")
    nvars = len(coords)
    variables = {name: Jet.variable(values[..., i], i, nvars, order) for i, name in enumerate(coords)}
    env = _JetEnv(variables, nvars, order, values.shape[:-1])
    return e._jet(env)


def eval_jets(
    exprs: np.ndarray, point: np.ndarray | t.Sequence[float], order: int, coords: t.Sequence[str]
) -> Jet:
    """
    Evaluate an object array of expressions into one tensor valued jet.

    Identical expressions are evaluated once.

    Returns:
        A jet of shape `batch + exprs.shape`.
    """
    exprs = np.asarray(exprs, dtype=object)
    values = np.asarray(point, dtype=float)
    nvars = len(coords)
    batch = values.shape[:-1]
    cache: dict[Expr, Jet] = {}
    coeffs = np.zeros((*batch, *exprs.shape, ncoeffs(nvars, order)))
    for index in np.ndindex(*exprs.shape):
        node = exprs[index]
        if isinstance(node, Num) and node.value == 0:
            continue
        if node not in cache:
            cache[node] = eval_jet(node, values, order, coords)
        coeffs[(Ellipsis, *index, slice(None))] = cache[node].coeffs
    return Jet(coeffs, nvars, order)


def evaluate(e: Expr, values: dict[str, float] | t.Sequence[float], coords: t.Sequence[str] | None = None) -> float:
    """
    Plain numeric value of an expression.
    """
    if isinstance(values, dict):
        coords = list(values.keys())
        values = list(values.values())
    if coords is None:
        raise ValueError("Coordinate names are required for positional values")
    return float(eval_jet(e, values, 0, coords).value)
