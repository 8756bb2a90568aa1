"""
Truncated multivariate Taylor jets, the differentiation backbone for all geometry.

A [Jet][conemob.jets.Jet] holds the Taylor coefficients of a (possibly tensor valued)
function at a point up to a fixed total order. Coefficients live on the last axis,
indexed by multi-indices in graded lexicographic order, so every leading axis is
free for tensor indices or for a batch of points.

The coefficient of multi-index `alpha` is `d^alpha f / alpha!`, so
[partial][conemob.jets.partial] multiplies back by `alpha!`.
"""

from __future__ import annotations

import functools
import itertools
import math
import typing as t

import numpy as np
from scipy import sparse

from conemob.error import DomainError

MAX_ORDER = 4
"""Deepest jet order supported (R needs 2 metric derivatives, nabla^2 R needs 4)."""

ElementaryName = t.Literal["exp", "log", "sqrt", "sin", "cos", "abs", "recip"]
"""Elementary functions available for composition."""

ArrayLike = t.Union[float, int, np.ndarray, t.Sequence[float]]

# Multi-index bookkeeping


def ncoeffs(nvars: int, order: int) -> int:
    """Number of Taylor coefficients for `nvars` variables up to total `order`."""
    return math.comb(nvars + order, order)


@functools.lru_cache(maxsize=None)
def multi_indices(nvars: int, order: int) -> tuple[tuple[int, ...], ...]:
    """
    All multi-indices with total degree <= order in graded lexicographic order.

    Lower orders form a prefix of higher ones, so truncation is a slice.
    """
    indices: list[tuple[int, ...]] = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), degree):
            alpha = [0] * nvars
            for var in combo:
                alpha[var] += 1
            indices.append(tuple(alpha))
    return tuple(indices)


@functools.lru_cache(maxsize=None)
def _positions(nvars: int, order: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(multi_indices(nvars, order))}


@functools.lru_cache(maxsize=None)
def _product_table(nvars: int, order: int) -> tuple[np.ndarray, np.ndarray, sparse.csr_matrix]:
    alphas = multi_indices(nvars, order)
    index = _positions(nvars, order)
    left: list[int] = []
    right: list[int] = []
    target: list[int] = []
    for i, a in enumerate(alphas):
        for j in range(ncoeffs(nvars, order - sum(a))):
            b = alphas[j]
            left.append(i)
            right.append(j)
            target.append(index[tuple(x + y for x, y in zip(a, b))])
    pairs = len(left)
    scatter = sparse.csr_matrix(
        (np.ones(pairs), (np.asarray(target), np.arange(pairs))),
        shape=(len(alphas), pairs),
    )
    return np.asarray(left), np.asarray(right), scatter


@functools.lru_cache(maxsize=None)
def _derivative_table(nvars: int, order: int, var: int) -> tuple[np.ndarray, np.ndarray]:
    index = _positions(nvars, order)
    sources: list[int] = []
    factors: list[float] = []
    for beta in multi_indices(nvars, order - 1):
        raised = list(beta)
        raised[var] += 1
        sources.append(index[tuple(raised)])
        factors.append(float(raised[var]))
    return np.asarray(sources), np.asarray(factors)


def _scatter(products: np.ndarray, scatter: sparse.csr_matrix) -> np.ndarray:
    lead = products.shape[:-1]
    flat = products.reshape(-1, products.shape[-1])
    out = np.asarray(scatter @ flat.T).T
    return out.reshape(*lead, scatter.shape[0])


class Jet:
    """
    Truncated Taylor expansion of a tensor valued function at a point.
    """

    __slots__ = ("coeffs", "nvars", "order")
    __array_ufunc__ = None

    def __init__(self, coeffs: np.ndarray, nvars: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0 or order > MAX_ORDER:
            raise ValueError(f"Jet order must be in [0, {MAX_ORDER}], got {order}")
        if coeffs.ndim == 0 or coeffs.shape[-1] != ncoeffs(nvars, order):
            raise ValueError(f"Expected {ncoeffs(nvars, order)} coefficients on the last axis, got {coeffs.shape}")
        self.coeffs = coeffs
        """Taylor coefficients, multi-index on the last axis."""
        self.nvars = nvars
        """Number of variables."""
        self.order = order
        """Truncation order."""

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    # Construction

    @classmethod
    def constant(cls, value: ArrayLike, nvars: int, order: int) -> Jet:
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((*value.shape, ncoeffs(nvars, order)))
        coeffs[..., 0] = value
        return cls(coeffs, nvars, order)

    @classmethod
    def variable(cls, value: ArrayLike, index: int, nvars: int, order: int) -> Jet:
        """The jet of the coordinate function `x_index` at `value`."""
        jet = cls.constant(value, nvars, order)
        if order >= 1:
            jet.coeffs[..., 1 + index] = 1.0
        return jet

    # Shape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        """The constant term (function value at the point)."""
        return self.coeffs[..., 0]

    def __getitem__(self, key: t.Any) -> Jet:
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coeffs[(*key, slice(None))], self.nvars, self.order)

    def reshape(self, *shape: int) -> Jet:
        return Jet(self.coeffs.reshape(*shape, self.coeffs.shape[-1]), self.nvars, self.order)

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise ValueError(f"Cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[..., : ncoeffs(self.nvars, order)], self.nvars, order)

    # Differentiation

    def derivative(self, var: int) -> Jet:
        """Jet of the partial derivative along `var`, one order lower."""
        if self.order == 0:
            raise ValueError("Cannot differentiate an order 0 jet")
        sources, factors = _derivative_table(self.nvars, self.order, var)
        return Jet(self.coeffs[..., sources] * factors, self.nvars, self.order - 1)

    def gradient(self) -> Jet:
        """All first partials, appended as a new last tensor axis."""
        parts = [self.derivative(var).coeffs for var in range(self.nvars)]
        return Jet(np.stack(parts, axis=-2), self.nvars, self.order - 1)

    def partial(self, alpha: t.Sequence[int]) -> np.ndarray:
        return partial(self, alpha)

    # Linear maps and contractions

    def linear(self, subscripts: str, *operands: np.ndarray) -> Jet:
        """
        Apply an einsum with constant operands to the tensor part of the jet.

        Args:
            subscripts: Einsum subscripts, the jet being the first operand.
            *operands: Constant arrays.

        Returns:
            The transformed jet.
        """
        inputs, output = subscripts.split("->")
        terms = inputs.split(",")
        terms[0] += "Z"
        coeffs = np.einsum(f"{','.join(terms)}->{output}Z", self.coeffs, *operands, optimize=True)
        return Jet(coeffs, self.nvars, self.order)

    # Arithmetic

    def _coerce(self, other: Jet | ArrayLike) -> tuple[np.ndarray, np.ndarray, int]:
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError(f"Jets disagree on variable count ({self.nvars} vs {other.nvars})")
            order = min(self.order, other.order)
            return self.truncate(order).coeffs, other.truncate(order).coeffs, order
        return self.coeffs, Jet.constant(other, self.nvars, self.order).coeffs, self.order

    def __add__(self, other: Jet | ArrayLike) -> Jet:
        a, b, order = self._coerce(other)
        return Jet(a + b, self.nvars, order)

    __radd__ = __add__

    def __sub__(self, other: Jet | ArrayLike) -> Jet:
        a, b, order = self._coerce(other)
        return Jet(a - b, self.nvars, order)

    def __rsub__(self, other: Jet | ArrayLike) -> Jet:
        return (-self) + other

    def __neg__(self) -> Jet:
        return Jet(-self.coeffs, self.nvars, self.order)

    def __mul__(self, other: Jet | ArrayLike) -> Jet:
        if isinstance(other, Jet):
            return jet_mul(self, other)
        scale = np.asarray(other, dtype=float)
        return Jet(self.coeffs * scale[..., None], self.nvars, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other: Jet | ArrayLike) -> Jet:
        if isinstance(other, Jet):
            return jet_div(self, other)
        scale = np.asarray(other, dtype=float)
        if np.any(scale == 0):
            raise DomainError("division", 0.0)
        return Jet(self.coeffs / scale[..., None], self.nvars, self.order)

    def __rtruediv__(self, other: ArrayLike) -> Jet:
        return jet_compose_elementary("recip", self) * other

    def __pow__(self, exponent: float) -> Jet:
        return jet_pow(self, exponent)


# Operations


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    """
    Elementwise truncated product (tensor parts broadcast).
    """
    ca, cb, order = a._coerce(b)
    left, right, scatter = _product_table(a.nvars, order)
    return Jet(_scatter(ca[..., left] * cb[..., right], scatter), a.nvars, order)


def jet_div(a: Jet, b: Jet) -> Jet:
    """
    Elementwise truncated quotient.

    Raises:
        DomainError: If the constant term of `b` vanishes.
    """
    return jet_mul(a, jet_compose_elementary("recip", b))


def contract(subscripts: str, a: Jet, b: Jet) -> Jet:
    """
    Truncated product of two jets contracted over tensor axes with einsum subscripts.

    Example:
        `contract("...ij,...jk->...ik", A, B)` is the jet of the matrix product.
    """
    ca, cb, order = a._coerce(b)
    inputs, output = subscripts.split("->")
    left_sub, right_sub = inputs.split(",")
    left, right, scatter = _product_table(a.nvars, order)
    products = np.einsum(
        f"{left_sub}Z,{right_sub}Z->{output}Z",
        ca[..., left],
        cb[..., right],
        optimize=True,
    )
    return Jet(_scatter(products, scatter), a.nvars, order)


def jet_matmul(a: Jet, b: Jet) -> Jet:
    return contract("...ij,...jk->...ik", a, b)


def jet_inverse(a: Jet) -> Jet:
    """
    Jet of the matrix inverse, by the Neumann series around the constant term.
    """
    inverse0 = np.linalg.inv(a.value)
    base = Jet.constant(inverse0, a.nvars, a.order)
    step = -jet_matmul(base, a - a.value)
    term = base
    total = base
    for _ in range(a.order):
        term = jet_matmul(step, term)
        total = total + term
    return total


def jet_logabsdet(a: Jet) -> Jet:
    """
    Jet of log|det a| for a matrix valued jet.
    """
    sign, logdet = np.linalg.slogdet(a.value)
    if np.any(sign == 0):
        raise DomainError("log|det|", 0.0)
    relative = jet_matmul(Jet.constant(np.linalg.inv(a.value), a.nvars, a.order), a - a.value)
    power = relative
    total = Jet.constant(logdet, a.nvars, a.order)
    for k in range(1, a.order + 1):
        trace = Jet(np.trace(power.coeffs, axis1=-3, axis2=-2), a.nvars, a.order)
        total = total + trace * ((-1.0) ** (k + 1) / k)
        power = jet_matmul(power, relative)
    return total


def _binomial(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= (p - i) / (i + 1)
    return out


def _univariate(name: str, u0: np.ndarray, order: int) -> list[np.ndarray]:
    """Taylor coefficients of an elementary function at u0 (elementwise)."""
    if name == "exp":
        e = np.exp(u0)
        return [e / math.factorial(k) for k in range(order + 1)]
    if name == "log":
        if np.any(u0 <= 0):
            raise DomainError("log", float(u0[u0 <= 0].flat[0]))
        return [np.log(u0)] + [(-1.0) ** (k + 1) / (k * u0**k) for k in range(1, order + 1)]
    if name == "sqrt":
        if np.any(u0 < 0) or (order > 0 and np.any(u0 == 0)):
            raise DomainError("sqrt", float(u0[u0 <= 0].flat[0]))
        root = np.sqrt(u0)
        return [root] + [root * _binomial(0.5, k) / u0**k for k in range(1, order + 1)]
    if name == "sin":
        return [np.sin(u0 + k * np.pi / 2) / math.factorial(k) for k in range(order + 1)]
    if name == "cos":
        return [np.cos(u0 + k * np.pi / 2) / math.factorial(k) for k in range(order + 1)]
    if name == "abs":
        if order > 0 and np.any(u0 == 0):
            raise DomainError("abs", 0.0)
        sign = np.sign(u0)
        return [np.abs(u0), sign] + [np.zeros_like(u0) for _ in range(2, order + 1)]
    if name == "recip":
        if np.any(u0 == 0):
            raise DomainError("division", 0.0)
        return [(-1.0) ** k / u0 ** (k + 1) for k in range(order + 1)]
    raise ValueError(f"Unknown elementary function: {name}")


def jet_compose_elementary(name: ElementaryName | str, j: Jet) -> Jet:
    """
    Compose an elementary function with a jet.

    Uses the univariate Taylor expansion at the constant term followed by
    truncated substitution of the non-constant part (Horner scheme).

    Raises:
        DomainError: If the function is undefined at the constant term.
    """
    u0 = np.asarray(j.value, dtype=float)
    series = _univariate(name, u0, j.order)
    shift = j - u0
    result = Jet.constant(series[-1], j.nvars, j.order)
    for coefficient in reversed(series[:-1]):
        result = jet_mul(result, shift) + coefficient
    return result


def jet_pow(j: Jet, exponent: float) -> Jet:
    """
    Raise a jet to a power. Integer exponents are exact, others need a positive base.
    """
    if float(exponent).is_integer():
        n = int(exponent)
        base = j if n >= 0 else jet_compose_elementary("recip", j)
        n = abs(n)
        result = Jet.constant(np.ones(j.shape), j.nvars, j.order)
        while n:
            if n & 1:
                result = jet_mul(result, base)
            n >>= 1
            if n:
                base = jet_mul(base, base)
        return result

    u0 = np.asarray(j.value, dtype=float)
    if np.any(u0 <= 0):
        raise DomainError("pow", float(u0[u0 <= 0].flat[0]))
    power = u0**exponent
    series = [power * _binomial(exponent, k) / u0**k for k in range(j.order + 1)]
    shift = j - u0
    result = Jet.constant(series[-1], j.nvars, j.order)
    for coefficient in reversed(series[:-1]):
        result = jet_mul(result, shift) + coefficient
    return result


def partial(j: Jet, alpha: t.Sequence[int]) -> np.ndarray:
    """
    The true partial derivative `d^alpha f` at the point.

    Raises:
        ValueError: If |alpha| exceeds the jet order.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != j.nvars:
        raise ValueError(f"Multi-index {alpha} does not match {j.nvars} variables")
    if sum(alpha) > j.order:
        raise ValueError(f"Derivative of order {sum(alpha)} exceeds jet order {j.order}")
    factor = math.prod(math.factorial(a) for a in alpha)
    return j.coeffs[..., _positions(j.nvars, j.order)[alpha]] * factor
