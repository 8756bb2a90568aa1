"""
Degree of mobility through the extended system

    a_ij,k = λ_i g_jk + λ_j g_ik
    λ_i,k  = μ g_ik + B a_ik
    μ_,k   = 2B λ_k

whose solutions are the flat sections of a linear connection on a bundle of
rank `n(n+1)/2 + n + 1`, and through parallel symmetric forms on the cone.
"""

from __future__ import annotations

import dataclasses
import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from conemob.cone import ConeBuild, ConeManifold, ExtendedFields, build_cone
from conemob.error import RankIndecisionError, ResidualError
from conemob.expr import Expr, Num, as_expr, eval_jet
from conemob.geometry import covariant_derivative, max_curvature, metric_jets, sym2_connection
from conemob.jets import Jet, contract
from conemob.model import MetricSpec, TensorField
from conemob.prolong import (
    EngineParams,
    LinearConnectionSpec,
    flat_section_dim,
    holonomy_generators,
    invariant_covectors,
    invariant_symforms,
    sym2_bundle_connection,
    tangent_connection,
)
from conemob.util import decide_rank, kernel, relative_residual, sym_pack, sym_pack_matrix, sym_unpack_matrix

RESIDUAL_TOLERANCE = 1e-8
FLATNESS_TOLERANCE = 1e-8

Route = t.Literal["extended-system", "cone-parallel"]


# The extended connection


@dataclasses.dataclass
class ExtendedSystem:
    """
    Coefficients of the extended system over a metric, split as `C = C0 + B * C1`.

    The fiber is ordered as packed `a` (upper triangle, row major), then `λ`, then `μ`.
    """

    metric: MetricSpec
    _cache: dict[tuple[bytes, tuple[int, ...], int], tuple[Jet, Jet]] = dataclasses.field(
        default_factory=dict, repr=False
    )

    @property
    def fiber_dim(self) -> int:
        n = self.metric.dim
        return n * (n + 1) // 2 + n + 1

    def parts(self, points: np.ndarray, order: int) -> tuple[Jet, Jet]:
        """Jets of `C0` and `C1` at a point (or batch), shape `batch + (n, N, N)`."""
        points = np.asarray(points, dtype=float)
        key = (points.tobytes(), points.shape, order)
        if key not in self._cache:
            self._cache.clear()
            self._cache[key] = self._build(points, order)
        return self._cache[key]

    def _build(self, points: np.ndarray, order: int) -> tuple[Jet, Jet]:
        n = self.metric.dim
        size = n * (n + 1) // 2
        jets = metric_jets(self.metric, points, order + 1)
        gamma = jets.christoffel
        g = jets.metric.truncate(order)
        batch = g.shape[:-2]
        nvars, ncoef = g.nvars, g.coeffs.shape[-1]
        pack = sym_pack_matrix(n).reshape(-1, n, n)
        unpack = sym_unpack_matrix(n).reshape(n, n, -1)
        lam, mu = slice(size, size + n), size + n

        base = np.zeros((*batch, n, self.fiber_dim, self.fiber_dim, ncoef))
        base[..., :size, :size, :] = sym2_connection(gamma).coeffs
        a_lam = g.linear("...jk,xpj->...kxp", pack) + g.linear("...ik,xip->...kxp", pack)
        base[..., :size, lam, :] = -a_lam.coeffs
        base[..., lam, lam, :] = -gamma.linear("...pki->...kip").coeffs
        base[..., lam, mu, :] = -g.coeffs

        coupling = np.zeros_like(base)
        coupling[..., lam, :size, 0] = -np.einsum("ikx->kix", unpack)
        coupling[..., mu, lam, 0] = -2.0 * np.eye(n)
        return Jet(base, nvars, order), Jet(coupling, nvars, order)

    def connection(self, B: float) -> LinearConnectionSpec:
        def coefficients(points: np.ndarray, order: int) -> Jet:
            base, coupling = self.parts(points, order)
            return base + coupling * B

        label = f"extended(B={B:g}) over {self.metric.label}"
        return LinearConnectionSpec(self.metric, self.fiber_dim, coefficients, label)

    def metric_section(self, point: np.ndarray, B: float) -> np.ndarray:
        """The fiber value of the solution `(g, 0, -B)` at a point."""
        n = self.metric.dim
        return np.concatenate([sym_pack(self.metric.matrix(point)), np.zeros(n), [-B]])


def extended_connection(m: MetricSpec, B: float) -> LinearConnectionSpec:
    """
    Connection whose flat sections are the solutions `(a, λ, μ)` of the extended system.
    """
    return ExtendedSystem(m).connection(B)


def rescale_to_B_minus1(m: MetricSpec, B: float) -> MetricSpec:
    """
    The metric `-g / B`, whose constant is `-1`.

    Raises:
        ValueError: If `B == 0`.
    """
    if B == 0:
        raise ValueError("Only metrics with B != 0 can be rescaled to B = -1")
    if B == -1:
        return m
    return m.scaled(-1.0 / B, label=f"-({m.label})/{B:g}")


# Searching for B


class SearchParams(BaseModel):
    """
    Grid and refinement options for the scan over `B`.
    """

    model_config = ConfigDict(extra="forbid")

    magnitudes: int = Field(41, ge=2)
    """Log-spaced magnitudes per sign."""
    low: float = Field(1e-3, gt=0)
    high: float = Field(1e3, gt=0)
    refine: bool = True
    """Refine the best grid value with a golden section search on the rank drop indicator."""


class BSearchResult(BaseModel):
    """
    Dimensions of the solution space per candidate `B`.
    """

    model_config = ConfigDict(extra="forbid")

    candidates: list[tuple[float, t.Optional[int]]]
    """`(B, dim)` per scanned value, `dim` is None where the rank was ambiguous."""
    best: t.Optional[float]
    """The maximizing `B` (None if no value stands out)."""
    best_dim: int
    generic_dim: int
    inconclusive: list[float] = Field(default_factory=list)


def _snap(value: float) -> float:
    return float(f"{value:.6g}")


def _grid(search: SearchParams) -> list[float]:
    magnitudes = np.logspace(np.log10(search.low), np.log10(search.high), search.magnitudes)
    values = {0.0} | {_snap(v) for v in magnitudes} | {_snap(-v) for v in magnitudes}
    return sorted(values)


def _drop_ratio(singular: np.ndarray, index: int) -> float:
    """Singular value at `index` relative to the largest, zero for an empty spectrum."""
    if index < 0 or singular.size <= index or singular[0] <= 0:
        return 0.0
    return float(singular[index] / singular[0])


def _probe(system: ExtendedSystem, B: float, params: EngineParams) -> tuple[int | None, np.ndarray]:
    generators = holonomy_generators(system.connection(B), params)
    stacked = generators.matrices.reshape(-1, system.fiber_dim)
    try:
        _, singular = kernel(stacked, params.rank_tol, params.gap_ratio)
    except RankIndecisionError as e:
        return None, np.asarray(e.singular_values)
    return system.fiber_dim - decide_rank(singular, params.rank_tol, params.gap_ratio), singular


def search_B(
    m: MetricSpec,
    params: EngineParams | None = None,
    search: SearchParams | None = None,
) -> BSearchResult:
    """
    Scan candidate values of `B` and report the solution dimension for each.

    The grid holds `0` and log-spaced magnitudes of both signs. The value with the
    largest dimension is refined by minimizing the singular value which vanishes
    when the dimension jumps.
    """
    params = EngineParams() if params is None else params
    search = SearchParams() if search is None else search
    system = ExtendedSystem(m)
    point = m.samples(1, params.seed)[0] if params.point is None else np.asarray(params.point)
    params = params.merge_with(EngineParams(point=list(point), extra_points=0))

    scanned: dict[float, int | None] = {}
    spectra: dict[float, np.ndarray] = {}
    for B in _grid(search):
        scanned[B], spectra[B] = _probe(system, B, params)

    conclusive = {B: dim for B, dim in scanned.items() if dim is not None}
    inconclusive = [B for B, dim in scanned.items() if dim is None]
    if inconclusive:
        logger.warning(f"B scan over {m.label}: ambiguous rank at {len(inconclusive)} value(s)")
    if not conclusive:
        return BSearchResult(
            candidates=list(scanned.items()), best=None, best_dim=0, generic_dim=0, inconclusive=inconclusive
        )

    generic = min(conclusive.values())
    top = max(conclusive.values())
    index = system.fiber_dim - generic - 1

    def indicator(B: float) -> float:
        _, singular = _probe(system, float(B), params)
        return _drop_ratio(singular, index)

    best: float | None = None
    if top > generic:
        winners = [B for B, dim in conclusive.items() if dim == top]
        best = min(winners, key=lambda B: (_drop_ratio(spectra[B], index), abs(B)))
        if search.refine and index >= 0:
            best = _refine(best, sorted(scanned), indicator, system, params, top, scanned)
    elif top == generic:
        logger.info(f"B scan over {m.label}: dimension {top} for every B, no value singled out")

    candidates = [(B, scanned[B]) for B in sorted(scanned)]
    logger.info(f"B scan over {m.label}: best B = {best}, dim {top} (generic {generic})")
    return BSearchResult(
        candidates=candidates, best=best, best_dim=top, generic_dim=generic, inconclusive=inconclusive
    )


def _refine(
    best: float,
    grid: list[float],
    indicator: t.Callable[[float], float],
    system: ExtendedSystem,
    params: EngineParams,
    top: int,
    scanned: dict[float, int | None],
) -> float:
    position = grid.index(best)
    if position == 0 or position == len(grid) - 1:
        return best
    bracket = (grid[position - 1], best, grid[position + 1])
    try:
        result = optimize.minimize_scalar(indicator, bracket=bracket, method="golden", options={"xtol": 1e-10})
    except ValueError:
        return best
    refined = _snap(float(result.x))
    if refined == best:
        return best
    dim, _ = _probe(system, refined, params)
    if dim is not None and dim >= top:
        scanned[refined] = dim
        return refined
    return best


# Reports


class MobilityReport(BaseModel):
    """
    Degree of mobility and, on the cone route, its structure `D = k(k+1)/2 + ℓ`.
    """

    model_config = ConfigDict(extra="forbid")

    D: int
    """Degree of mobility."""
    B: t.Optional[float] = None
    """The constant of the extended system used (None on the cone route)."""
    B_candidates: t.Optional[list[tuple[float, t.Optional[int]]]] = None
    """Scanned `(B, dim)` values when `B` was searched."""
    k: t.Optional[int] = None
    """Number of independent parallel 1-forms on the cone."""
    ell: t.Optional[int] = None
    """`D - k(k+1)/2`."""
    bounds_ok: t.Optional[bool] = None
    """Whether `k <= n - 2` and `1 <= ℓ <= (n - k + 1) // 3`."""
    route: Route
    constant_curvature: bool = False
    seed: int
    label: str = ""
    diagnostics: dict[str, t.Any] = Field(default_factory=dict)


def degree(
    m: MetricSpec,
    B: float | None = None,
    *,
    search: bool = False,
    params: EngineParams | None = None,
    search_params: SearchParams | None = None,
) -> MobilityReport:
    """
    Degree of mobility from the extended system.

    Args:
        m: The metric.
        B: The constant of the extended system. Searched for when None or when `search` is set.
        search: Scan for the maximizing `B`.
        params: Engine options.
        search_params: Options of the scan.

    Raises:
        RankIndecisionError: If the final rank decision is ambiguous.
    """
    params = EngineParams() if params is None else params
    candidates = None
    diagnostics: dict[str, t.Any] = {}
    if B is None or search:
        scan = search_B(m, params, search_params)
        candidates = scan.candidates
        diagnostics["generic_dim"] = scan.generic_dim
        if scan.inconclusive:
            diagnostics["inconclusive_B"] = scan.inconclusive
        if B is None:
            B = scan.best if scan.best is not None else 0.0
            if scan.best is None:
                diagnostics["B_not_canonical"] = True

    system = ExtendedSystem(m)
    result = flat_section_dim(system.connection(B), params)
    section = system.metric_section(result.point, B)
    projection = result.basis @ (result.basis.T @ section)
    diagnostics["metric_solution_residual"] = float(np.linalg.norm(section - projection) / np.linalg.norm(section))
    diagnostics["generator_count"] = result.generator_count
    if result.transport_residual is not None:
        diagnostics["transport_residual"] = result.transport_residual

    report = MobilityReport(
        D=result.dim,
        B=B,
        B_candidates=candidates,
        route="extended-system",
        seed=params.seed,
        label=m.label,
        diagnostics=diagnostics,
    )
    logger.info(f"D({m.label}) = {report.D} at B = {B:g}")
    return report


def _cone_of(base: MetricSpec | ConeManifold | ConeBuild) -> tuple[ConeManifold, int, str]:
    if isinstance(base, ConeBuild):
        return base.manifold, base.base.dim, base.base.label
    if isinstance(base, ConeManifold):
        return base, base.base_dim, base.metric.label
    return build_cone(base).manifold, base.dim, base.label


def cone_mobility(
    base: MetricSpec | ConeManifold | ConeBuild,
    params: EngineParams | None = None,
) -> MobilityReport:
    """
    Degree of mobility (for `B = -1`) as the number of parallel symmetric forms on the cone.

    Accepts a base metric (the cone is built) or an already conical metric.

    Raises:
        RankIndecisionError: If a rank decision is ambiguous.
    """
    params = EngineParams() if params is None else params
    cone, n, label = _cone_of(base)
    total = cone.metric
    curvature = max_curvature(total, total.samples(params.samples, params.seed))
    if curvature < FLATNESS_TOLERANCE:
        logger.info(f"Cone over {label} is flat, the base has constant curvature")
        return MobilityReport(
            D=(n + 1) * (n + 2) // 2,
            route="cone-parallel",
            constant_curvature=True,
            seed=params.seed,
            label=label,
            diagnostics={"max_curvature": curvature},
        )

    result = flat_section_dim(sym2_bundle_connection(total), params)
    at_point = params.merge_with(EngineParams(point=list(result.point)))
    generators = holonomy_generators(tangent_connection(total), at_point)
    k = invariant_covectors(generators, params).dim
    forms = invariant_symforms(generators, params, metric=total.matrix(result.point))
    D = result.dim
    ell = D - k * (k + 1) // 2
    bounds_ok = k <= n - 2 and 1 <= ell <= (n - k + 1) // 3

    diagnostics: dict[str, t.Any] = {
        "max_curvature": curvature,
        "holonomy_symforms": forms.dim,
        "metric_is_parallel": forms.contains_metric,
        "generator_count": result.generator_count,
    }
    if result.transport_residual is not None:
        diagnostics["transport_residual"] = result.transport_residual
    if forms.dim != D:
        logger.warning(f"Cone over {label}: {D} flat symmetric sections but {forms.dim} holonomy invariant forms")

    logger.info(f"D({label}) = {D} = {k}*{k + 1}/2 + {ell}")
    return MobilityReport(
        D=D,
        k=k,
        ell=ell,
        bounds_ok=bounds_ok,
        route="cone-parallel",
        seed=params.seed,
        label=label,
        diagnostics=diagnostics,
    )


class ProjIsoReport(BaseModel):
    """
    What the degree of mobility says about `dim proj(g) - dim iso(g)`.
    """

    model_config = ConfigDict(extra="forbid")

    upper_bound: int
    """`dim proj - dim hom <= D - 1`."""
    expected: t.Optional[int]
    """`D - 1` when `D >= 3`."""
    band: tuple[int, int]
    bound_only: bool
    note: str


def proj_iso_report(report: MobilityReport) -> ProjIsoReport:
    D = report.D
    if D <= 2:
        return ProjIsoReport(
            upper_bound=D - 1,
            expected=None,
            band=(max(0, D - 2), D - 1),
            bound_only=True,
            note="D <= 2: only the upper bound applies",
        )
    if report.B == 0:
        return ProjIsoReport(
            upper_bound=D - 1,
            expected=D - 1,
            band=(D - 2, D - 1),
            bound_only=False,
            note="B = 0: one dimension may be lost to isotropic fields",
        )
    return ProjIsoReport(upper_bound=D - 1, expected=D - 1, band=(D - 1, D - 1), bound_only=False, note="generic")


# Residuals of candidate solutions


class ExtendedResidual(BaseModel):
    """
    Largest relative residuals of the three equations of the extended system.
    """

    model_config = ConfigDict(extra="forbid")

    a_equation: float
    lam_equation: float
    mu_equation: float

    @property
    def max(self) -> float:
        return max(self.a_equation, self.lam_equation, self.mu_equation)


def _residual_from_jets(christoffel: Jet, g: np.ndarray, a: Jet, lam: Jet, mu: Jet, B: float) -> ExtendedResidual:
    """Residuals from order 1 jets of `(a, λ, μ)` and an order 0 Christoffel jet."""
    nabla_a = covariant_derivative(a, christoffel, 0).value
    nabla_lam = covariant_derivative(lam, christoffel, 0).value
    d_mu = mu.gradient().value
    lam0, a0, mu0 = lam.value, a.value, mu.value

    target_a = np.einsum("...i,...jk->...ijk", lam0, g) + np.einsum("...j,...ik->...ijk", lam0, g)
    target_lam = mu0[..., None, None] * g + B * a0
    target_mu = 2.0 * B * lam0
    return ExtendedResidual(
        a_equation=relative_residual(nabla_a - target_a, target_a),
        lam_equation=relative_residual(nabla_lam - target_lam, target_lam),
        mu_equation=relative_residual(d_mu - target_mu, target_mu),
    )


def extended_residual(m: MetricSpec, fields: ExtendedFields, B: float, points: np.ndarray) -> ExtendedResidual:
    """
    Residuals of the extended system for fields given by expressions.

    Raises:
        ValueError: If the fields live on another chart.
    """
    if fields.coords != m.coords:
        raise ValueError("Fields and metric must share coordinates")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = metric_jets(m, points, 1)
    return _residual_from_jets(
        jets.christoffel,
        jets.metric.value,
        fields.a.jet(points, 1),
        fields.lam.jet(points, 1),
        eval_jet(fields.mu, points, 1, m.coords),
        B,
    )


def mu_family(m: MetricSpec, fields: ExtendedFields, t_value: float, points: np.ndarray) -> ExtendedFields:
    """
    The family `a(t) = t λ⊗λ + g`, `λ(t) = t λ`, `μ(t) = t` of solutions for `B = 0`.

    Args:
        m: The metric.
        fields: A solution with `B = 0` and `μ = 1`.
        t_value: The family parameter.
        points: Sample points for the residual checks.

    Raises:
        ResidualError: If the input is not such a solution, or the output fails its check.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    before = extended_residual(m, fields, 0.0, points)
    if before.max >= RESIDUAL_TOLERANCE:
        raise ResidualError("mu_family input", before.max, RESIDUAL_TOLERANCE)
    mu_values = np.asarray(eval_jet(fields.mu, points, 0, m.coords).value)
    mu_error = float(np.max(np.abs(mu_values - 1.0)))
    if mu_error >= RESIDUAL_TOLERANCE:
        raise ResidualError("mu_family input mu = 1", mu_error, RESIDUAL_TOLERANCE)

    n = m.dim
    scale = as_expr(t_value)
    lam = fields.lam.table
    a_table = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            a_table[i, j] = scale * lam[i] * lam[j] + m.table[i, j]
    family = ExtendedFields(
        a=TensorField.from_array(m.coords, (0, 2), a_table, symmetric=True, label=f"a({t_value:g})"),
        lam=TensorField.from_array(m.coords, (0, 1), [scale * entry for entry in lam], label=f"lam({t_value:g})"),
        mu=Num(float(t_value)),
    )
    after = extended_residual(m, family, 0.0, points)
    if after.max >= RESIDUAL_TOLERANCE:
        raise ResidualError("mu_family output", after.max, RESIDUAL_TOLERANCE)
    return family


class OneFormSolution(BaseModel):
    """
    Values of the rank one solution built from a parallel 1-form, with its residual.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    u: list[list[float]]
    a: list[list[list[float]]]
    lam: list[list[float]]
    mu: list[float]
    residual: ExtendedResidual


def parallel_one_form_solution(
    m: MetricSpec,
    potential: Expr | str,
    fields: ExtendedFields,
    points: np.ndarray,
) -> OneFormSolution:
    """
    From a solution with `B = 0`, `μ = 0` and a function `v` with parallel gradient,
    the solution `a' = u⊗u`, `λ' = (λ_q v^q) u`, `μ' = (λ_q v^q)^2` where
    `u_i = a_ij v^j - v λ_i`.

    Raises:
        ResidualError: If the input solution, `μ = 0` or the parallel gradient fails its check.
    """
    potential = as_expr(potential)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    before = extended_residual(m, fields, 0.0, points)
    if before.max >= RESIDUAL_TOLERANCE:
        raise ResidualError("one-form input", before.max, RESIDUAL_TOLERANCE)

    jets = metric_jets(m, points, 2)
    v = eval_jet(potential, points, 2, m.coords)
    dv = v.gradient()
    hessian = covariant_derivative(dv, jets.christoffel, 0).value
    hessian_error = float(np.max(np.abs(hessian)))
    if hessian_error >= RESIDUAL_TOLERANCE:
        raise ResidualError("parallel gradient", hessian_error, RESIDUAL_TOLERANCE)
    mu_values = np.asarray(eval_jet(fields.mu, points, 0, m.coords).value)
    if float(np.max(np.abs(mu_values))) >= RESIDUAL_TOLERANCE:
        raise ResidualError("one-form input mu = 0", float(np.max(np.abs(mu_values))), RESIDUAL_TOLERANCE)

    a = fields.a.jet(points, 1)
    lam = fields.lam.jet(points, 1)
    raised = contract("...ij,...j->...i", jets.inverse.truncate(1), dv)
    u = contract("...ij,...j->...i", a, raised) - contract("...,...i->...i", v.truncate(1), lam)
    pairing = contract("...i,...i->...", lam, raised)
    new_a = contract("...i,...j->...ij", u, u)
    new_lam = contract("...,...i->...i", pairing, u)
    new_mu = pairing * pairing
    residual = _residual_from_jets(jets.christoffel.truncate(0), jets.metric.value, new_a, new_lam, new_mu, 0.0)
    return OneFormSolution(
        u=u.value.tolist(),
        a=new_a.value.tolist(),
        lam=new_lam.value.tolist(),
        mu=np.asarray(new_mu.value).tolist(),
        residual=residual,
    )
