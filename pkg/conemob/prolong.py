"""
Flat sections of linear connections on trivialized bundles.

A connection is given by coefficient matrices `C_k(x)`, flat sections solve
`∂_k s + C_k s = 0`. The engine collects the infinitesimal holonomy at a point
(curvature `F_kl = ∂_k C_l - ∂_l C_k + [C_k, C_l]` and its gauge derivatives
`D_m X = ∂_m X + [C_m, X]`) and takes the common kernel with a rank revealing
decomposition. Gauge derivatives span the same matrices as full covariant
derivatives of the curvature.

Transport of the kernel to further sample points is a cross-check only; its
residual is reported, never used to change the answer.
"""

from __future__ import annotations

import dataclasses
import itertools
import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from conemob.error import DegenerateMetricError, DomainError
from conemob.geometry import metric_jets, sym2_connection, tensor_connection
from conemob.jets import Jet, contract
from conemob.logging import trace_spectrum
from conemob.transport import straight_path, transport_polyline
from conemob.util import FloatArray, kernel, sym_pack, sym_unpack, sym_unpack_matrix

if t.TYPE_CHECKING:
    from conemob.model import MetricSpec

GENERATOR_FLOOR = 1e-10
"""Generators with a norm below this fraction of the largest count as zero."""

ROUNDOFF_FLOOR = 1e-11
"""Generators below this multiple of the squared coefficient scale are round-off."""

TRANSPORT_WARNING = 1e-6
"""Transport cross-check residual above which a warning is logged."""


class EngineParams(BaseModel):
    """
    Options of the flat section engine.
    """

    model_config = ConfigDict(extra="forbid")

    derivative_order: int = Field(2, ge=0, le=2)
    """Number of gauge derivatives of the curvature collected at the base point."""

    extra_points: int = Field(8, ge=0)
    """Points used for the transport cross-check."""

    rank_tol: float = Field(1e-8, gt=0)
    """Relative singular value cutoff."""

    gap_ratio: float = Field(10.0, ge=1)
    """Retained singular values within this factor of the cutoff are ambiguous."""

    steps_per_unit: int = Field(200, ge=1)
    """Integrator steps per unit of coordinate length."""

    seed: int = 42
    """Seed for the base point and the cross-check points."""

    samples: int = Field(20, ge=1)
    """Sample points for residual checks."""

    point: t.Optional[list[float]] = None
    """Explicit base point (otherwise the first seeded sample)."""

    def merge_with(self, *others: t.Optional[EngineParams]) -> EngineParams:
        """
        Apply a series of parameter overrides to the current instance and return a copy.

        Args:
            *others: Overrides, applied in order. Only explicitly set values count.

        Returns:
            The merged parameters.
        """
        if len(others) == 0 or all(p is None for p in others):
            return self

        updates: dict[str, t.Any] = {}
        for other in [o for o in others if o is not None]:
            for name, value in other.model_dump(exclude_unset=True).items():
                if value is not None:
                    updates[name] = value

        return self.model_copy(update=updates)


CoefficientBuilder = t.Callable[[np.ndarray, int], Jet]
"""`(points, order) -> Jet` of shape `batch + (n, N, N)`."""


@dataclasses.dataclass(frozen=True)
class LinearConnectionSpec:
    """
    A linear connection on the trivial bundle of rank `fiber_dim` over a chart.
    """

    base: MetricSpec
    fiber_dim: int
    coefficients: CoefficientBuilder
    label: str = ""

    def coeff(self, points: np.ndarray | t.Sequence[float], order: int) -> Jet:
        """Jet of `C_k` at a point (or batch), shape `batch + (n, N, N)`."""
        jet = self.coefficients(np.asarray(points, dtype=float), order)
        if jet.shape[-2:] != (self.fiber_dim, self.fiber_dim):
            raise ValueError(f"Connection '{self.label}' produced blocks of shape {jet.shape[-2:]}")
        return jet

    def matrices(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.coeff(points, 0).value)

    def base_point(self, params: EngineParams) -> np.ndarray:
        if params.point is not None:
            return np.asarray(params.point, dtype=float)
        return self.base.samples(1, params.seed)[0]


def tensor_bundle_connection(m: MetricSpec, up: int, down: int) -> LinearConnectionSpec:
    """Levi-Civita connection on tensors of valence `(up, down)`, flattened row major."""

    def coefficients(points: np.ndarray, order: int) -> Jet:
        return tensor_connection(metric_jets(m, points, order + 1).christoffel, up, down)

    return LinearConnectionSpec(m, m.dim ** (up + down), coefficients, f"T({up},{down}) over {m.label}")


def tangent_connection(m: MetricSpec) -> LinearConnectionSpec:
    return tensor_bundle_connection(m, 1, 0)


def sym2_bundle_connection(m: MetricSpec) -> LinearConnectionSpec:
    """Levi-Civita connection on packed symmetric (0,2) tensors."""

    def coefficients(points: np.ndarray, order: int) -> Jet:
        return sym2_connection(metric_jets(m, points, order + 1).christoffel)

    return LinearConnectionSpec(m, m.dim * (m.dim + 1) // 2, coefficients, f"Sym2 over {m.label}")


# Curvature and holonomy generators


def _curvature_values(coefficients: Jet) -> np.ndarray:
    """`F_kl` values from a coefficient jet of order >= 1, shape `batch + (n, n, N, N)`."""
    values = coefficients.value
    derivatives = coefficients.gradient().value  # [..., l, a, b, k] = ∂_k C_l
    linear = np.einsum("...labk->...klab", derivatives) - np.einsum("...kabl->...klab", derivatives)
    product = np.einsum("...kap,...lpb->...klab", values, values)
    return linear + product - np.swapaxes(product, -3, -4)


def connection_curvature(c: LinearConnectionSpec, point: np.ndarray | t.Sequence[float]) -> list[np.ndarray]:
    """
    Curvature endomorphisms `F_kl` (`k < l`) of a connection at a point.

    Raises:
        DegenerateMetricError: If the base metric is degenerate at the point.
    """
    values = _curvature_values(c.coeff(point, 1))
    n = values.shape[0]
    return [values[k, l] for k, l in itertools.combinations(range(n), 2)]


def _curvature_jet(coefficients: Jet) -> Jet:
    """Jet of `F_kl` for `k < l` at a single point, stacked to `(pairs, N, N)`, one order lower."""
    n = coefficients.shape[0]
    order = coefficients.order - 1
    truncated = coefficients.truncate(order)
    blocks = []
    for k, l in itertools.combinations(range(n), 2):
        block = coefficients[l].derivative(k) - coefficients[k].derivative(l)
        block = block + contract("ap,pb->ab", truncated[k], truncated[l])
        block = block - contract("ap,pb->ab", truncated[l], truncated[k])
        blocks.append(block.coeffs)
    size = coefficients.shape[-1]
    if not blocks:
        return Jet(np.zeros((0, size, size, truncated.coeffs.shape[-1])), coefficients.nvars, order)
    return Jet(np.stack(blocks), coefficients.nvars, order)


def _gauge_derivative(generators: Jet, coefficients: Jet) -> Jet:
    """`D_m X = ∂_m X + [C_m, X]` for a stack `(E, N, N)`, returning `(E * n, N, N)`."""
    n = coefficients.shape[0]
    order = generators.order - 1
    current = generators.truncate(order)
    terms = []
    for m in range(n):
        connection = coefficients[m].truncate(order)
        term = generators.derivative(m)
        term = term + contract("ap,epb->eab", connection, current) - contract("eap,pb->eab", current, connection)
        terms.append(term.coeffs)
    stacked = np.stack(terms, axis=1)
    count, size = generators.shape[0], generators.shape[-1]
    return Jet(stacked.reshape(count * n, size, size, stacked.shape[-1]), generators.nvars, order)


class HolonomyGenerators(BaseModel):
    """
    Infinitesimal holonomy generators of a connection at a point.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    point: FloatArray
    matrices: FloatArray
    """Normalized generators, shape `(K, N, N)`."""
    counts: list[int]
    """Number of raw generators per derivative order."""
    dropped: int = 0
    """Generators discarded as numerically zero."""

    @property
    def fiber_dim(self) -> int:
        return int(self.matrices.shape[-1])


def holonomy_generators(c: LinearConnectionSpec, params: EngineParams | None = None) -> HolonomyGenerators:
    """
    Curvature and its gauge derivatives at the base point, normalized.

    Raises:
        DegenerateMetricError: If the base metric is degenerate at the point.
    """
    params = EngineParams() if params is None else params
    point = c.base_point(params)
    order = params.derivative_order
    coefficients = c.coeff(point, order + 1)

    current = _curvature_jet(coefficients)
    collected = [current.value]
    for _ in range(order):
        current = _gauge_derivative(current, coefficients)
        collected.append(current.value)

    counts = [len(block) for block in collected]
    size = c.fiber_dim
    matrices = np.concatenate([block.reshape(-1, size, size) for block in collected])
    norms = np.linalg.norm(matrices.reshape(len(matrices), -1), axis=1) if len(matrices) else np.zeros(0)
    largest = float(norms.max(initial=0.0))
    scale = max(1.0, float(np.max(np.abs(coefficients.value), initial=0.0))) ** 2
    keep = norms > max(GENERATOR_FLOOR * largest, ROUNDOFF_FLOOR * scale)
    normalized = matrices[keep] / norms[keep, None, None]
    logger.debug(f"{c.label}: {int(keep.sum())}/{len(norms)} generators at {np.round(point, 4).tolist()}")
    return HolonomyGenerators(point=point, matrices=normalized, counts=counts, dropped=int((~keep).sum()))


class InvariantSpace(BaseModel):
    """
    A kernel computed from holonomy generators.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    dim: int
    basis: FloatArray
    """Orthonormal basis as columns."""
    singular_values: FloatArray
    contains_metric: t.Optional[bool] = None
    """For symmetric forms: whether the metric at the point lies in the space."""

    def forms(self, n: int) -> np.ndarray:
        """Basis of symmetric forms as `(dim, n, n)` matrices."""
        return sym_unpack(self.basis.T, n)


def _solve(blocks: np.ndarray, params: EngineParams, title: str) -> InvariantSpace:
    stacked = blocks.reshape(-1, blocks.shape[-1])
    basis, singular = kernel(stacked, params.rank_tol, params.gap_ratio)
    trace_spectrum(singular, params.rank_tol, title)
    return InvariantSpace(dim=basis.shape[1], basis=basis, singular_values=singular)


def invariant_vectors(generators: HolonomyGenerators, params: EngineParams | None = None) -> InvariantSpace:
    """Vectors `u` with `G u = 0` for every generator."""
    params = EngineParams() if params is None else params
    return _solve(generators.matrices, params, "invariant vectors")


def invariant_covectors(generators: HolonomyGenerators, params: EngineParams | None = None) -> InvariantSpace:
    """Covectors `w` with `w G = 0` for every generator."""
    params = EngineParams() if params is None else params
    return _solve(np.swapaxes(generators.matrices, -1, -2), params, "invariant covectors")


def invariant_symforms(
    generators: HolonomyGenerators,
    params: EngineParams | None = None,
    metric: np.ndarray | None = None,
) -> InvariantSpace:
    """
    Symmetric forms `h` with `h(G., .) + h(., G.) = 0` for every generator.

    The basis is given in packed (upper triangle) coordinates.
    """
    params = EngineParams() if params is None else params
    size = generators.fiber_dim
    forms = sym_unpack_matrix(size).reshape(size, size, -1)
    matrices = generators.matrices
    action = np.einsum("gca,cbm->gabm", matrices, forms) + np.einsum("adm,gdb->gabm", forms, matrices)
    space = _solve(action.reshape(len(matrices), size * size, -1), params, "invariant symmetric forms")
    if metric is not None:
        packed = sym_pack(np.asarray(metric, dtype=float))
        projection = space.basis @ (space.basis.T @ packed)
        scale = max(1.0, float(np.linalg.norm(packed)))
        space.contains_metric = bool(np.linalg.norm(packed - projection) < 1e-8 * scale)
    return space


# The engine


class FlatSectionResult(BaseModel):
    """
    Dimension and basis of the space of flat sections of a connection.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    dim: int
    basis: FloatArray
    """Fiber values at the base point, as columns."""
    point: FloatArray
    generator_count: int
    singular_values: FloatArray
    transport_residual: t.Optional[float] = None
    """Largest residual of the kernel under transported curvature (cross-check)."""


def _transport_cross_check(
    c: LinearConnectionSpec, point: np.ndarray, basis: np.ndarray, params: EngineParams
) -> float | None:
    if params.extra_points == 0 or basis.shape[1] == 0:
        return None
    targets = c.base.samples(params.extra_points + 1, params.seed + 1)[1:]
    worst: float | None = None
    for target in targets:
        try:
            path = straight_path(point, target)
            transport = transport_polyline(c.matrices, path, np.eye(c.fiber_dim), params.steps_per_unit)
            curvature = _curvature_values(c.coeff(target, 1))
        except (DegenerateMetricError, DomainError) as e:
            logger.warning(f"Skipping transport cross-check to {np.round(target, 4).tolist()}: {e}")
            continue
        moved = np.einsum("klab,bd->klad", curvature, transport @ basis)
        scale = max(float(np.max(np.abs(curvature), initial=0.0)), 1.0)
        residual = float(np.max(np.abs(moved), initial=0.0)) / scale
        worst = residual if worst is None else max(worst, residual)
    if worst is not None and worst > TRANSPORT_WARNING:
        logger.warning(f"{c.label}: transported curvature does not annihilate the kernel (residual {worst:.2e})")
    return worst


def flat_section_dim(c: LinearConnectionSpec, params: EngineParams | None = None) -> FlatSectionResult:
    """
    Dimension of the space of flat sections.

    Args:
        c: The connection.
        params: Engine options (derivative order, cross-check points, rank tolerance).

    Returns:
        The dimension, a basis of fiber values at the base point and diagnostics.

    Raises:
        RankIndecisionError: If a singular value is too close to the cutoff.
        DegenerateMetricError: If the base metric is degenerate at the base point.
    """
    params = EngineParams() if params is None else params
    generators = holonomy_generators(c, params)
    space = invariant_vectors(generators, params)
    residual = _transport_cross_check(c, generators.point, space.basis, params)
    logger.info(f"{c.label}: {space.dim} flat section(s) of {c.fiber_dim}")
    return FlatSectionResult(
        dim=space.dim,
        basis=space.basis,
        point=generators.point,
        generator_count=len(generators.matrices),
        singular_values=space.singular_values,
        transport_residual=residual,
    )
