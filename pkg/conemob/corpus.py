"""
Built-in metrics with known answers.

Entries are produced by registered factories and fetched by identifier strings
formatted like `<name>,<key>=<value>,...`:

- `"sphere,n=3"` (or the shorthand `"sphere3"`)
- `"flat,n=4,q=1"`
- `"realization,n=7,k=0,partition=4;4"`

Every expected fact carries a provenance tag so checks can tell a quoted
result from one the engine derived itself.
"""

from __future__ import annotations

import inspect
import math
import re
import typing as t

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from conemob.cone import ConeManifold, ExtendedFields, build_cone, glue_product
from conemob.error import InvalidCorpusEntryError
from conemob.expr import Expr, Num, Var, evaluate
from conemob.model import MetricSpec, TensorField, coordinate_names
from conemob.pairs import partner_metric

Provenance = t.Literal["PUBLISHED", "TRIVIAL", "DERIVED"]

CorpusFactory = t.Callable[..., "CorpusEntry"]

g_corpus: dict[str, CorpusFactory] = {}


class Fact(BaseModel):
    """
    An expected result about an entry.
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    value: t.Any
    provenance: Provenance
    note: str = ""


class CorpusEntry(BaseModel):
    """
    A corpus metric with its companions and expected facts.
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    identifier: str
    metric: MetricSpec
    """The metric itself (the total cone metric for cone entries)."""

    base: t.Optional[MetricSpec] = None
    """Base of the cone, when the metric was built as one."""

    cone_function: t.Optional[Expr] = None
    """The function `v` of the cone criterion."""

    partner: t.Optional[MetricSpec] = None
    """A geodesically equivalent metric on the same chart."""

    endomorphism: t.Optional[TensorField] = None
    """A parallel self-adjoint `(1, 1)` field."""

    point: t.Optional[list[float]] = None
    """A preferred evaluation point."""

    facts: list[Fact] = Field(default_factory=list)

    def fact(self, name: str, default: t.Any = None) -> t.Any:
        """Value of an expected fact."""
        return next((fact.value for fact in self.facts if fact.name == name), default)

    @property
    def cone(self) -> ConeManifold | None:
        if self.cone_function is None:
            return None
        return ConeManifold(metric=self.metric, v=self.cone_function)


def register_entry(name: str) -> t.Callable[[CorpusFactory], CorpusFactory]:
    """
    Register a factory under a corpus name.

    Keyword parameters of the factory become the identifier keys.
    """

    def decorator(factory: CorpusFactory) -> CorpusFactory:
        g_corpus[name] = factory
        return factory

    return decorator


def list_entries() -> list[str]:
    return sorted(g_corpus)


def _convert(value: str) -> t.Any:
    if ";" in value:
        return [_convert(part) for part in value.split(";") if part]
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    if value.lower() in ["true", "false"]:
        return value.lower() == "true"
    return value


def get(identifier: str, **params: t.Any) -> CorpusEntry:
    """
    Build a corpus entry from an identifier string.

    Args:
        identifier: `<name>,<key>=<value>,...`. A trailing integer on an unknown
            name is read as `n`, so `"sphere3"` means `"sphere,n=3"`.
        **params: Parameters overriding those of the identifier.

    Returns:
        The entry.

    Raises:
        InvalidCorpusEntryError: For unknown names, bad parameters or invalid partitions.
    """
    name, _, rest = identifier.partition(",")
    kwargs: dict[str, t.Any] = {}
    if rest:
        try:
            pairs = (arg.split("=") for arg in rest.split(","))
            kwargs = {key.strip(): _convert(value.strip()) for key, value in pairs}
        except ValueError as e:
            raise InvalidCorpusEntryError(identifier, "arguments must be key=value pairs") from e

    if name not in g_corpus:
        match = re.fullmatch(r"([a-z_]+?)(\d+)", name)
        if match is None or match.group(1) not in g_corpus:
            raise InvalidCorpusEntryError(identifier, f"unknown entry, known: {', '.join(list_entries())}")
        name = match.group(1)
        kwargs.setdefault("n", int(match.group(2)))

    kwargs.update(params)
    factory = g_corpus[name]
    accepted = inspect.signature(factory).parameters
    unknown = [key for key in kwargs if key not in accepted]
    if unknown:
        raise InvalidCorpusEntryError(identifier, f"unknown parameter(s) {unknown}")

    try:
        entry = factory(**kwargs)
    except (TypeError, ValueError) as e:
        raise InvalidCorpusEntryError(identifier, str(e)) from e
    return entry


# Stereographic charts


def _squared_norm(x: list[Var]) -> Expr:
    total: Expr = Num(0.0)
    for variable in x:
        total = total + variable**2
    return total


def stereographic(n: int) -> tuple[list[str], list[Expr], np.ndarray]:
    """
    Inverse stereographic projection onto the unit sphere in `R^{n+1}`.

    Returns:
        Coordinate names, the components `σ^A` and their derivatives as an
        object array `[A, i] = ∂_i σ^A`.
    """
    coords = coordinate_names("x", n)
    x = [Var(name) for name in coords]
    norm = _squared_norm(x)
    s = 1.0 + norm
    sigma: list[Expr] = [(1.0 - norm) / s] + [2.0 * variable / s for variable in x]
    derivatives = np.full((n + 1, n), Num(0.0), dtype=object)
    for i in range(n):
        derivatives[0, i] = -4.0 * x[i] / s**2
        for j in range(n):
            term = -4.0 * x[i] * x[j] / s**2
            derivatives[j + 1, i] = 2.0 / s + term if i == j else term
    return coords, sigma, derivatives


def _sphere_metric(n: int) -> MetricSpec:
    coords, _, _ = stereographic(n)
    norm = _squared_norm([Var(name) for name in coords])
    conformal = 4.0 / (1.0 + norm) ** 2
    return MetricSpec(
        label=f"round S{n} (stereographic)",
        dim=n,
        coords=coords,
        components={f"{i},{i}": conformal for i in range(1, n + 1)},
        signature_hint=(n, 0),
        provenance=f"corpus:sphere{n}",
    )


def _quadratic(h: np.ndarray, left: t.Sequence[Expr], right: t.Sequence[Expr]) -> Expr:
    total: Expr = Num(0.0)
    for a, b in zip(*np.nonzero(h)):
        total = total + float(h[a, b]) * left[a] * right[b]
    return total


def sphere_solution(n: int, h: np.ndarray | t.Sequence[t.Sequence[float]]) -> ExtendedFields:
    """
    The solution of the extended system (`B = -1`) on the round sphere given by the
    restriction of a constant symmetric form `h` on `R^{n+1}`.

    `μ = h(σ, σ)`, `λ_i = -h(σ, ∂_i σ)` and `a_ij = h(∂_i σ, ∂_j σ)`.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (n + 1, n + 1) or not np.allclose(h, h.T):
        raise ValueError(f"Expected a symmetric ({n + 1}, {n + 1}) form")
    coords, sigma, derivatives = stereographic(n)
    columns = [list(derivatives[:, i]) for i in range(n)]
    a = np.full((n, n), Num(0.0), dtype=object)
    for i in range(n):
        for j in range(i, n):
            a[i, j] = a[j, i] = _quadratic(h, columns[i], columns[j])
    lam = [-_quadratic(h, sigma, columns[i]) for i in range(n)]
    return ExtendedFields(
        a=TensorField.from_array(coords, (0, 2), a, label="a"),
        lam=TensorField.from_array(coords, (0, 1), lam, label="lambda"),
        mu=_quadratic(h, sigma, sigma),
    )


def sphere_frame(n: int, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
    """
    Jacobian of `(r, x) -> r σ(x)` at a cone point, columns ordered like the cone coordinates.
    """
    point = np.asarray(point, dtype=float)
    r, x = float(point[0]), point[1:]
    coords, sigma, derivatives = stereographic(n)
    frame = np.zeros((n + 1, n + 1))
    for A in range(n + 1):
        frame[A, 0] = evaluate(sigma[A], x, coords)
        for i in range(n):
            frame[A, i + 1] = r * evaluate(derivatives[A, i], x, coords)
    return frame


def _max_mobility(n: int) -> int:
    return (n + 1) * (n + 2) // 2


# Entries


@register_entry("flat")
def flat(n: int = 3, q: int = 0) -> CorpusEntry:
    """Flat `R^n` with `q` negative directions."""
    if n < 1 or not 0 <= q <= n:
        raise ValueError(f"Need n >= 1 and 0 <= q <= n, got n={n}, q={q}")
    diagonal: list[float] = [-1.0] * q + [1.0] * (n - q)
    metric = MetricSpec.from_matrix(
        coordinate_names("x", n),
        np.diag(diagonal),
        label=f"flat R{n} signature ({n - q}, {q})",
        signature_hint=(n - q, q),
        provenance=f"corpus:flat{n}",
    )
    return CorpusEntry(
        name="flat",
        identifier=f"flat,n={n},q={q}",
        metric=metric,
        facts=[
            Fact(name="D", value=_max_mobility(n), provenance="PUBLISHED", note="flat metrics have maximal mobility"),
            Fact(name="B", value=0.0, provenance="TRIVIAL"),
            Fact(name="constant_curvature", value=True, provenance="TRIVIAL"),
        ],
    )


@register_entry("sphere")
def sphere(n: int = 2) -> CorpusEntry:
    """Unit round sphere in stereographic coordinates, `g = 4δ/(1 + |x|^2)^2`."""
    if n < 2:
        raise ValueError(f"Need n >= 2, got {n}")
    return CorpusEntry(
        name="sphere",
        identifier=f"sphere,n={n}",
        metric=_sphere_metric(n),
        point=[0.1 * (i + 1) for i in range(n)],
        facts=[
            Fact(name="D", value=_max_mobility(n), provenance="PUBLISHED"),
            Fact(name="B", value=-1.0, provenance="PUBLISHED", note="sectional curvature 1"),
            Fact(name="constant_curvature", value=True, provenance="TRIVIAL"),
        ],
    )


@register_entry("hyperbolic")
def hyperbolic(n: int = 2) -> CorpusEntry:
    """Hyperbolic space in the Poincaré ball, `g = 4δ/(1 - |x|^2)^2`."""
    if n < 2:
        raise ValueError(f"Need n >= 2, got {n}")
    coords = coordinate_names("x", n)
    norm = _squared_norm([Var(name) for name in coords])
    conformal = 4.0 / (1.0 - norm) ** 2
    half = 0.5 * min(1.0, math.sqrt(3 / n))
    metric = MetricSpec(
        label=f"hyperbolic H{n} (Poincare ball)",
        dim=n,
        coords=coords,
        components={f"{i},{i}": conformal for i in range(1, n + 1)},
        sample_box=[(-half, half)] * n,
        signature_hint=(n, 0),
        provenance=f"corpus:hyperbolic{n}",
    )
    return CorpusEntry(
        name="hyperbolic",
        identifier=f"hyperbolic,n={n}",
        metric=metric,
        facts=[
            Fact(name="D", value=_max_mobility(n), provenance="PUBLISHED"),
            Fact(name="B", value=1.0, provenance="DERIVED", note="sectional curvature -1"),
            Fact(name="constant_curvature", value=True, provenance="TRIVIAL"),
        ],
    )


@register_entry("example1")
def example1() -> CorpusEntry:
    """
    A metric of signature (2, 2) with a parallel nilpotent `L` that does not
    commute with the curvature.
    """
    coords = coordinate_names("x", 4)
    metric = MetricSpec(
        label="example1",
        dim=4,
        coords=coords,
        components={
            "1,3": "x3*x4",
            "2,4": "x3*x4",
            "3,3": "x1*x4 + x2*x3",
            "4,4": "x1*x4 + x2*x3",
        },
        sample_box=[(0.5, 3.0)] * 4,
        signature_hint=(2, 2),
        provenance="corpus:example1",
    )
    endomorphism = TensorField(label="L", valence=(1, 1), coords=coords, components={"1,3": 1, "2,4": 1})
    return CorpusEntry(
        name="example1",
        identifier="example1",
        metric=metric,
        endomorphism=endomorphism,
        point=[1.0, 1.0, 2.0, 3.0],
        facts=[
            Fact(name="L_parallel", value=True, provenance="PUBLISHED"),
            Fact(name="L_self_adjoint", value=True, provenance="PUBLISHED"),
            Fact(name="L_commutes_with_curvature", value=False, provenance="PUBLISHED", note="L^1_p R^p_434 != 0"),
        ],
    )


@register_entry("example2")
def example2() -> CorpusEntry:
    """
    A 6-dimensional cone of signature (3, 3) with a parallel nilpotent `L̂`
    made of three 2-dimensional Jordan blocks.
    """
    base_coords = ["s", *coordinate_names("x", 4)]
    base = MetricSpec(
        label="example2 base",
        dim=5,
        coords=base_coords,
        components={
            "1,1": -1,
            "2,4": "exp(2*s)*x3*x4",
            "3,5": "exp(2*s)*x3*x4",
            "4,4": "exp(2*s)*(x1*x4 + x2*x3) + x3*x4",
            "5,5": "exp(2*s)*(x1*x4 + x2*x3) + x3*x4",
        },
        sample_box=[(-0.5, 0.5), *[(0.5, 3.0)] * 4],
        signature_hint=(2, 3),
        provenance="corpus:example2",
    )
    cone = build_cone(base)
    total = cone.total.replace(label="example2")
    endomorphism = TensorField(
        label="L",
        valence=(1, 1),
        coords=total.coords,
        components={
            "1,1": "exp(2*s)",
            "1,2": "r*exp(2*s)",
            "2,1": "-exp(2*s)/r",
            "2,2": "-exp(2*s)",
            # constant x-block; an exp(2*s) factor here would make L non-parallel
            "3,5": 1,
            "4,6": 1,
        },
    )
    return CorpusEntry(
        name="example2",
        identifier="example2",
        metric=total,
        base=base,
        cone_function=cone.manifold.v,
        endomorphism=endomorphism,
        point=[1.0, 0.0, 1.0, 1.0, 2.0, 3.0],
        facts=[
            Fact(name="L_parallel", value=True, provenance="PUBLISHED", note="x-block without the exp(2s) factor"),
            Fact(name="L_self_adjoint", value=True, provenance="PUBLISHED"),
            Fact(name="jordan_partition", value=[2, 2, 2], provenance="PUBLISHED"),
            Fact(name="L_commutes_with_curvature", value=False, provenance="PUBLISHED"),
        ],
    )


@register_entry("flat_projective_pair")
def flat_projective_pair(n: int = 3) -> CorpusEntry:
    """
    Flat `R^n` paired with its pullback under the projective map `x -> Ax / (1 + b·x)`.
    """
    if n < 2:
        raise ValueError(f"Need n >= 2, got {n}")
    coords = coordinate_names("x", n)
    x = [Var(name) for name in coords]
    A = np.eye(n) + 0.2 * np.eye(n, k=1)
    weights = np.arange(1, n + 1, dtype=float)
    b = 0.9 * (-1.0) ** np.arange(n) * weights / weights.sum()

    denominator: Expr = Num(1.0)
    for i in range(n):
        denominator = denominator + float(b[i]) * x[i]
    images: list[Expr] = []
    for row in range(n):
        image: Expr = Num(0.0)
        for i in np.nonzero(A[row])[0]:
            image = image + float(A[row, i]) * x[i]
        images.append(image)

    jacobian = np.full((n, n), Num(0.0), dtype=object)
    for row in range(n):
        for i in range(n):
            jacobian[row, i] = float(A[row, i]) / denominator - float(b[i]) * images[row] / denominator**2
    pulled = np.full((n, n), Num(0.0), dtype=object)
    for i in range(n):
        for j in range(i, n):
            entry: Expr = Num(0.0)
            for row in range(n):
                entry = entry + jacobian[row, i] * jacobian[row, j]
            pulled[i, j] = pulled[j, i] = entry

    metric = flat(n).metric
    partner = MetricSpec.from_matrix(
        coords,
        pulled,
        label=f"projective pullback of flat R{n}",
        signature_hint=(n, 0),
        provenance="corpus:flat_projective_pair",
    )
    return CorpusEntry(
        name="flat_projective_pair",
        identifier=f"flat_projective_pair,n={n}",
        metric=metric,
        partner=partner,
        facts=[
            Fact(name="geodesically_equivalent", value=True, provenance="DERIVED", note="projective maps keep lines"),
            Fact(name="B", value=0.0, provenance="TRIVIAL"),
        ],
    )


@register_entry("sphere_pair")
def sphere_pair(n: int = 2) -> CorpusEntry:
    """
    The round sphere and the partner built from `a = g + ½ dσ¹⊗dσ¹`.
    """
    base = sphere(n)
    h = np.eye(n + 1)
    h[1, 1] += 0.5
    fields = sphere_solution(n, h)
    partner = partner_metric(base.metric, fields.a, label=f"partner of round S{n}")
    return base.model_copy(
        update={
            "name": "sphere_pair",
            "identifier": f"sphere_pair,n={n}",
            "partner": partner,
            "facts": [
                *base.facts,
                Fact(name="geodesically_equivalent", value=True, provenance="DERIVED"),
                Fact(name="barB_constant", value=True, provenance="DERIVED"),
            ],
        }
    )


def _flat_base(coords: list[str], negative: int, label: str) -> MetricSpec:
    diagonal = [-1.0] * negative + [1.0] * (len(coords) - negative)
    return MetricSpec.from_matrix(
        coords,
        np.diag(diagonal),
        label=label,
        signature_hint=(len(coords) - negative, negative),
        provenance="corpus:realization",
    )


@register_entry("realization")
def realization(n: int = 7, k: int = 0, partition: t.Sequence[int] | int = (4, 4)) -> CorpusEntry:
    """
    A lorentzian cone of dimension `n + 1` whose parallel symmetric forms have
    dimension `k(k + 1)/2 + ℓ`, `ℓ` being the length of the partition.

    The cone is `R^k x C_1 x ... x C_ℓ` where `C_i` is the cone over flat
    `R^{k_i - 1}`, lorentzian for `i = 1` and euclidean otherwise.
    """
    parts = [partition] if isinstance(partition, int) else list(partition)
    if not parts:
        raise ValueError("Partition must have at least one part")
    if k < 0:
        raise ValueError(f"Need k >= 0, got {k}")
    if any(part < 3 for part in parts):
        raise ValueError(f"Every part must be at least 3, got {parts}")
    if sum(parts) != n - k + 1:
        raise ValueError(f"Parts must sum to n - k + 1 = {n - k + 1}, got {sum(parts)}")

    factors: list[t.Any] = []
    if k > 0:
        coords = coordinate_names("y", k)
        euclidean = MetricSpec.from_matrix(
            coords,
            np.eye(k),
            label=f"R{k}",
            sample_box=[(0.5, 1.5)] * k,
            signature_hint=(k, 0),
            provenance="corpus:realization",
        )
        factors.append((euclidean, _squared_norm([Var(name) for name in coords]) / 2.0))
    for index, part in enumerate(parts, start=1):
        coords = [f"z{index}_{j}" for j in range(1, part)]
        negative = 1 if index == 1 else 0
        base = _flat_base(coords, negative, f"flat R{part - 1}" + (" lorentzian" if negative else ""))
        factors.append(build_cone(base, r_name=f"r{index}"))

    glued: t.Any = factors[0]
    for factor in factors[1:]:
        glued = glue_product(glued, factor)
    manifold = glued if isinstance(glued, ConeManifold) else glued.manifold

    ell = len(parts)
    label = f"realization n={n} k={k} partition={';'.join(map(str, parts))}"
    return CorpusEntry(
        name="realization",
        identifier=f"realization,n={n},k={k},partition={';'.join(map(str, parts))}",
        metric=manifold.metric.replace(label=label, provenance="corpus:realization"),
        cone_function=manifold.v,
        facts=[
            Fact(name="D", value=k * (k + 1) // 2 + ell, provenance="PUBLISHED"),
            Fact(name="k", value=k, provenance="PUBLISHED"),
            Fact(name="ell", value=ell, provenance="PUBLISHED"),
        ],
    )
