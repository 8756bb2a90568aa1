"""
Cone metrics `dr^2 + r^2 g`, the cone criterion for a function `v`, gluing of
cones, and the correspondence between parallel symmetric forms on a cone and
solutions `(a, λ, μ)` of the extended system on its base.
"""

from __future__ import annotations

import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, model_validator
from typing_extensions import Self

from conemob.expr import Expr, Num, Pow, Var, as_expr, eval_jet
from conemob.geometry import christoffel, max_curvature, metric_jets
from conemob.model import Box, MetricSpec, TensorField
from conemob.util import FloatArray, relative_residual

if t.TYPE_CHECKING:
    from conemob.prolong import EngineParams

HOM_TOLERANCE = 1e-8
"""Residual threshold of the cone criterion."""

DEFAULT_R_RANGE = (0.5, 3.0)
"""Sample range of the radial coordinate (keeps away from the apex)."""

HomVerdict = t.Literal["cone-compatible", "cone for -g", "not a cone"]


class ExtendedSolution(BaseModel):
    """
    Values `(a, λ, μ)` of a solution of the extended system at one point.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    a: FloatArray
    """Symmetric `(n, n)`."""
    lam: FloatArray
    """Covector `(n,)`."""
    mu: float

    @model_validator(mode="after")
    def validate_shapes(self) -> Self:
        n = self.lam.shape[0]
        if self.a.shape != (n, n):
            raise ValueError(f"a has shape {self.a.shape}, expected {(n, n)}")
        if relative_residual(self.a - self.a.T, self.a) > 1e-10:
            raise ValueError("a must be symmetric")
        return self


class ExtendedFields(BaseModel):
    """
    A candidate solution `(a, λ, μ)` of the extended system given by expressions.
    """

    model_config = ConfigDict(extra="forbid")

    a: TensorField
    lam: TensorField
    mu: Expr

    @model_validator(mode="after")
    def validate_fields(self) -> Self:
        if self.a.valence != (0, 2) or self.lam.valence != (0, 1):
            raise ValueError("Expected a of valence (0, 2) and lam of valence (0, 1)")
        if self.a.coords != self.lam.coords:
            raise ValueError("a and lam must share coordinates")
        return self

    @property
    def coords(self) -> list[str]:
        return self.a.coords

    def at(self, point: np.ndarray | t.Sequence[float]) -> ExtendedSolution:
        a = self.a.value(point)
        mu = float(eval_jet(self.mu, point, 0, self.coords).value)
        return ExtendedSolution(a=0.5 * (a + a.T), lam=self.lam.value(point), mu=mu)


class ConeManifold(BaseModel):
    """
    A metric together with a positive function `v` satisfying the cone criterion.
    """

    model_config = ConfigDict(extra="forbid")

    metric: MetricSpec
    v: Expr
    """Solution of `v_,ij = g_ij`, `v_,i v^,i = 2v`."""

    @property
    def base_dim(self) -> int:
        return self.metric.dim - 1


class ConeBuild(BaseModel):
    """
    The cone over a base metric, first coordinate `r`.
    """

    model_config = ConfigDict(extra="forbid")

    base: MetricSpec
    total: MetricSpec
    r_name: str = "r"

    @property
    def manifold(self) -> ConeManifold:
        r = Var(self.r_name)
        return ConeManifold(metric=self.total, v=Pow(r, Num(2.0)) / 2)


class HomReport(BaseModel):
    """
    Residuals of the cone criterion at sample points.
    """

    model_config = ConfigDict(extra="forbid")

    hessian_residual: float
    """max |v_,ij - g_ij| (relative to the metric)."""
    gradient_residual: float
    """max |v_,i v^,i - 2v| (relative to v)."""
    min_v: float
    max_v: float
    points: int
    verdict: HomVerdict

    @property
    def passed(self) -> bool:
        return self.verdict == "cone-compatible"


def build_cone(base: MetricSpec, *, r_name: str = "r", r_range: tuple[float, float] = DEFAULT_R_RANGE) -> ConeBuild:
    """
    The cone `dr^2 + r^2 g` over a base metric.

    Raises:
        ValueError: For a 0-dimensional base, a name collision with `r`, or a non-positive r range.
    """
    if base.dim < 1:
        raise ValueError("A cone needs a base of dimension at least 1")
    if r_name in base.coords:
        raise ValueError(f"Coordinate name '{r_name}' is already used by the base")
    if r_range[0] <= 0 or r_range[0] >= r_range[1]:
        raise ValueError(f"Radial range must be positive and increasing, got {r_range}")

    r_squared = Pow(Var(r_name), Num(2.0))
    components: dict[str, Expr] = {"1,1": Num(1.0)}
    for key, value in base.components.items():
        i, j = (int(part) for part in key.split(","))
        components[f"{i + 1},{j + 1}"] = r_squared * value

    box: Box = [r_range, *base.box]
    hint = None if base.signature_hint is None else (base.signature_hint[0] + 1, base.signature_hint[1])
    total = MetricSpec(
        label=f"cone over {base.label or 'base'}",
        dim=base.dim + 1,
        coords=[r_name, *base.coords],
        components=components,
        sample_box=box,
        signature_hint=hint,
        seed=base.seed,
        provenance=f"cone:{base.provenance or base.label}",
    )
    logger.debug(f"Built {total}")
    return ConeBuild(base=base, total=total, r_name=r_name)


def cone_christoffel_closed(cone: ConeBuild, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
    """
    Christoffel symbols of a cone from those of its base.

    `Γ^i_j0 = Γ^i_0j = δ^i_j / r`, `Γ^0_jk = -r g_jk`, `Γ^i_jk` from the base, all others zero.

    Raises:
        ValueError: If `r <= 0`.
    """
    point = np.asarray(point, dtype=float)
    r, x = float(point[0]), point[1:]
    if r <= 0:
        raise ValueError(f"The radial coordinate must be positive, got {r}")
    n = cone.base.dim
    g = cone.base.check_point(x)
    gamma = np.zeros((n + 1, n + 1, n + 1))
    gamma[1:, 1:, 1:] = christoffel(cone.base, x)
    gamma[1:, 1:, 0] = np.eye(n) / r
    gamma[1:, 0, 1:] = np.eye(n) / r
    gamma[0, 1:, 1:] = -r * g
    return gamma


def check_hom(m: MetricSpec, v: Expr | str, points: np.ndarray) -> HomReport:
    """
    Residuals of `v_,ij = g_ij` and `v_,i v^,i = 2v` at sample points.

    Both residuals below tolerance with `v > 0` everywhere is "cone-compatible";
    with `v < 0` everywhere `-v` is a cone function for `-g`.
    """
    v = as_expr(v)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = metric_jets(m, points, 1)
    v_jet = eval_jet(v, points, 2, m.coords)
    gradient = v_jet.gradient()
    hessian = gradient.gradient().value - np.einsum("...kij,...k->...ij", jets.christoffel.value, gradient.value)
    g = jets.metric.value
    norm = np.einsum("...ij,...i,...j->...", jets.inverse.value, gradient.value, gradient.value)
    values = np.asarray(v_jet.value)

    hessian_residual = relative_residual(hessian - g, g)
    gradient_residual = relative_residual(norm - 2 * values, values)
    passed = max(hessian_residual, gradient_residual) < HOM_TOLERANCE
    verdict: HomVerdict = "not a cone"
    if passed and np.all(values > 0):
        verdict = "cone-compatible"
    elif passed and np.all(values < 0):
        verdict = "cone for -g"

    report = HomReport(
        hessian_residual=hessian_residual,
        gradient_residual=gradient_residual,
        min_v=float(values.min()),
        max_v=float(values.max()),
        points=len(points),
        verdict=verdict,
    )
    logger.debug(f"check_hom({m.label}, {v}): {verdict} ({hessian_residual:.2e}, {gradient_residual:.2e})")
    return report


def cone_manifold(metric: MetricSpec, v: Expr | str, *, samples: int = 20, seed: int | None = None) -> ConeManifold:
    """
    Pair a metric with its cone function after verifying the cone criterion.

    Raises:
        ValueError: If the criterion fails at the sample points.
    """
    v = as_expr(v)
    report = check_hom(metric, v, metric.samples(samples, seed))
    if not report.passed:
        raise ValueError(f"'{v}' is not a cone function for {metric} ({report.verdict})")
    return ConeManifold(metric=metric, v=v)


FactorLike = t.Union[ConeManifold, ConeBuild, tuple[MetricSpec, t.Union[Expr, str]]]


def _as_manifold(factor: FactorLike) -> ConeManifold:
    if isinstance(factor, ConeManifold):
        return factor
    if isinstance(factor, ConeBuild):
        return factor.manifold
    metric, v = factor
    return ConeManifold(metric=metric, v=as_expr(v))


def glue_product(first: FactorLike, second: FactorLike, *, samples: int = 20, seed: int | None = None) -> ConeManifold:
    """
    Product of two cones with the cone function `w = u + v`.

    Raises:
        ValueError: If a factor fails the cone criterion or coordinates collide.
    """
    left, right = _as_manifold(first), _as_manifold(second)
    for factor in (left, right):
        report = check_hom(factor.metric, factor.v, factor.metric.samples(samples, seed))
        if not report.passed:
            raise ValueError(f"Factor {factor.metric} is not a verified cone ({report.verdict})")
    clash = set(left.metric.coords) & set(right.metric.coords)
    if clash:
        raise ValueError(f"Coordinate names collide: {sorted(clash)}")

    offset = left.metric.dim
    components = dict(left.metric.components)
    for key, value in right.metric.components.items():
        i, j = (int(part) for part in key.split(","))
        components[f"{i + offset},{j + offset}"] = value
    seed_value = left.metric.seed if left.metric.seed is not None else right.metric.seed
    product = MetricSpec(
        label=f"{left.metric.label} x {right.metric.label}",
        dim=left.metric.dim + right.metric.dim,
        coords=[*left.metric.coords, *right.metric.coords],
        components=components,
        sample_box=[*left.metric.box, *right.metric.box],
        seed=seed_value,
        provenance="glue",
    )
    glued = ConeManifold(metric=product, v=left.v + right.v)
    report = check_hom(product, glued.v, product.samples(samples, seed))
    if not report.passed:
        raise ValueError(f"Glued product failed the cone criterion ({report.hessian_residual:.2e})")
    return glued


def pack_parallel(sol: ExtendedSolution, r: float) -> np.ndarray:
    """
    Symmetric form on the cone at radius `r` from `(a, λ, μ)` at a base point.

    `A_00 = μ`, `A_0i = -r λ_i`, `A_ij = r^2 a_ij`.
    """
    n = sol.lam.shape[0]
    packed = np.zeros((n + 1, n + 1))
    packed[0, 0] = sol.mu
    packed[0, 1:] = packed[1:, 0] = -r * sol.lam
    packed[1:, 1:] = r * r * sol.a
    return packed


def unpack_parallel(form: np.ndarray, r: float) -> ExtendedSolution:
    """Inverse of [pack_parallel][conemob.cone.pack_parallel]."""
    form = np.asarray(form, dtype=float)
    form = 0.5 * (form + form.T)
    return ExtendedSolution(a=form[1:, 1:] / (r * r), lam=-form[0, 1:] / r, mu=float(form[0, 0]))


def pack_fields(fields: ExtendedFields, cone: ConeBuild) -> TensorField:
    """The symmetric (0,2) field on the cone built from `(a, λ, μ)` fields on the base."""
    if fields.coords != cone.base.coords:
        raise ValueError("Fields must live on the cone base chart")
    r = Var(cone.r_name)
    n = cone.base.dim
    table = np.full((n + 1, n + 1), Num(0.0), dtype=object)
    table[0, 0] = fields.mu
    for i in range(n):
        table[0, i + 1] = -(r * fields.lam.table[i])
        for j in range(i, n):
            table[i + 1, j + 1] = Pow(r, Num(2.0)) * fields.a.table[i, j]
    return TensorField.from_array(cone.total.coords, (0, 2), table, symmetric=True, label="packed")


def flatness_check(m: MetricSpec, points: np.ndarray) -> float:
    """Largest curvature component over the points (zero up to round-off for flat metrics)."""
    return max_curvature(m, points)


class RadialReport(BaseModel):
    """
    Angles between the cone gradient and the parallel vector fields at curved points.
    """

    model_config = ConfigDict(extra="forbid")

    min_angle: t.Optional[float]
    """Smallest distance of the unit gradient from the span of parallel vectors (None if no curved point)."""
    curved_points: int
    parallel_vectors: int
    passed: bool


def radial_parallel_check(
    manifold: ConeManifold | ConeBuild,
    points: np.ndarray,
    params: EngineParams | None = None,
    *,
    curvature_floor: float = 1e-6,
    angle_floor: float = 1e-6,
) -> RadialReport:
    """
    At curved points, the gradient of `v` is not tangent to any parallel vector field.
    """
    from conemob.prolong import EngineParams, holonomy_generators, invariant_vectors, tangent_connection

    manifold = manifold.manifold if isinstance(manifold, ConeBuild) else manifold
    params = EngineParams() if params is None else params
    m = manifold.metric
    angles: list[float] = []
    dims: list[int] = []
    for point in np.atleast_2d(points):
        jets = metric_jets(m, point, 2)
        if float(np.max(np.abs(jets.riemann.value))) <= curvature_floor:
            continue
        gradient = eval_jet(manifold.v, point, 1, m.coords).gradient().value
        direction = jets.inverse.value @ gradient
        direction = direction / np.linalg.norm(direction)
        generators = holonomy_generators(tangent_connection(m), params.merge_with(EngineParams(point=list(point))))
        space = invariant_vectors(generators, params)
        dims.append(space.dim)
        projection = space.basis @ (space.basis.T @ direction) if space.dim else np.zeros_like(direction)
        angles.append(float(np.linalg.norm(direction - projection)))
    min_angle = min(angles) if angles else None
    return RadialReport(
        min_angle=min_angle,
        curved_points=len(angles),
        parallel_vectors=max(dims, default=0),
        passed=min_angle is None or min_angle > angle_floor,
    )
