"""
Pairs of metrics on one chart: geodesic equivalence, the solution `(a, λ, μ)`
a pair produces, and how the constant `B` transforms from one metric to the other.

With `φ = log|det ḡ / det g| / (2(n + 1))` the pair gives

- `a_ij = e^{2φ} ḡ^{pq} g_pi g_qj`
- `λ_i = -e^{2φ} φ_p ḡ^{pq} g_qi`

and `(g, ḡ)` is geodesically equivalent exactly when `a` solves
`a_ij,k = λ_i g_jk + λ_j g_ik`.
"""

from __future__ import annotations

import dataclasses
import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from conemob.cone import ExtendedSolution
from conemob.error import ResidualError
from conemob.expr import Expr, Num, call
from conemob.geometry import check_nondegenerate, covariant_derivative, metric_jets
from conemob.jets import Jet, contract, jet_compose_elementary, jet_inverse, jet_logabsdet
from conemob.model import MetricSpec, TensorField
from conemob.util import relative_residual

EQUIVALENCE_TOLERANCE = 1e-7
"""Verdict threshold for the equivalence residuals."""

STRONG_TOLERANCE = 1e-9
"""Threshold for the "strong" confidence level."""

TRACE_TOLERANCE = 1e-6
"""Agreement required between the two formulas for `λ`."""

CONSTANCY_TOLERANCE = 1e-6
"""Relative spread allowed for `B̄` across sample points."""

Verdict = t.Literal["projective", "non-projective"]


def _check_charts(g: MetricSpec, gbar: MetricSpec) -> None:
    if list(g.coords) != list(gbar.coords):
        raise ValueError(f"Metrics live on different charts: {g.coords} vs {gbar.coords}")


@dataclasses.dataclass(frozen=True)
class _PairJets:
    metric: Jet
    inverse: Jet
    christoffel: Jet
    gbar: Jet
    phi: Jet
    a: Jet
    lam: Jet


def _pair_jets(g: MetricSpec, gbar: MetricSpec, points: np.ndarray, order: int) -> _PairJets:
    """
    Jets of the pair quantities. `a` has the given order, `λ` one less.
    """
    _check_charts(g, gbar)
    n = g.dim
    jets = metric_jets(g, points, order)
    other = gbar.jet(points, order)
    check_nondegenerate(other.value, points)

    phi = (jet_logabsdet(other) - jet_logabsdet(jets.metric)) * (1.0 / (2 * (n + 1)))
    other_inverse = jet_inverse(other)
    weight = jet_compose_elementary("exp", phi * 2.0)

    core = contract("...ip,...pq->...iq", jets.metric, other_inverse)
    core = contract("...iq,...qj->...ij", core, jets.metric)
    a = contract("...,...ij->...ij", weight, core)

    lower = order - 1
    mixed = contract("...pq,...qi->...pi", other_inverse.truncate(lower), jets.metric.truncate(lower))
    lam = -contract("...,...i->...i", weight.truncate(lower), contract("...p,...pi->...i", phi.gradient(), mixed))
    return _PairJets(jets.metric, jets.inverse, jets.christoffel, other, phi, a, lam)


def phi_of_pair(g: MetricSpec, gbar: MetricSpec, point: np.ndarray | t.Sequence[float]) -> float:
    """
    The function `φ = log|det ḡ / det g| / (2(n + 1))` at a point.

    Raises:
        DegenerateMetricError: If either metric degenerates at the point.
    """
    _check_charts(g, gbar)
    point = np.asarray(point, dtype=float)
    first = g.check_point(point)
    second = gbar.check_point(point)
    _, log_first = np.linalg.slogdet(first)
    _, log_second = np.linalg.slogdet(second)
    return float((log_second - log_first) / (2 * (g.dim + 1)))


class PairValues(BaseModel):
    """
    `(φ, a, λ)` of a pair at one point.
    """

    model_config = ConfigDict(extra="forbid")

    point: list[float]
    phi: float
    a: list[list[float]]
    lam: list[float]
    trace_residual: float
    """Disagreement between `λ` and `½ ∂(tr g⁻¹a)`."""


def a_lambda_of_pair(g: MetricSpec, gbar: MetricSpec, point: np.ndarray | t.Sequence[float]) -> PairValues:
    """
    Evaluate `a` and `λ` of a pair, cross-checking `λ` against the trace formula.

    Raises:
        DegenerateMetricError: If either metric degenerates at the point.
        ResidualError: If the two formulas for `λ` disagree.
    """
    point = np.asarray(point, dtype=float)
    jets = _pair_jets(g, gbar, point, 1)
    trace = contract("...ij,...ij->...", jets.inverse, jets.a)
    from_trace = trace.gradient().value * 0.5
    lam = jets.lam.value
    residual = relative_residual(lam - from_trace, lam)
    if residual > TRACE_TOLERANCE:
        raise ResidualError("lambda trace formula", residual, TRACE_TOLERANCE)
    return PairValues(
        point=point.tolist(),
        phi=float(jets.phi.value),
        a=jets.a.value.tolist(),
        lam=lam.tolist(),
        trace_residual=residual,
    )


class EquivalenceReport(BaseModel):
    """
    Residuals of the two forms of the geodesic equivalence equations.
    """

    model_config = ConfigDict(extra="forbid")

    residual_LC: float
    """Max relative residual of `ḡ_ij,k - 2ḡ_ij φ_k - ḡ_ik φ_j - ḡ_jk φ_i`."""

    residual_basic: float
    """Max relative residual of `a_ij,k - λ_i g_jk - λ_j g_ik`."""

    verdict: bool
    strong: bool
    points: int


def check_geodesic_equiv(g: MetricSpec, gbar: MetricSpec, points: np.ndarray) -> EquivalenceReport:
    """
    Decide whether two metrics share their unparametrized geodesics.

    Both residuals must be below `1e-7` for a positive verdict, `1e-9` for a strong one.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = _pair_jets(g, gbar, points, 2)
    christoffel = jets.christoffel.truncate(0)

    nabla_gbar = covariant_derivative(jets.gbar.truncate(1), christoffel, 0).value
    gbar0 = jets.gbar.value
    dphi = jets.phi.gradient().value
    lc = (
        nabla_gbar
        - 2.0 * np.einsum("...ij,...k->...ijk", gbar0, dphi)
        - np.einsum("...ik,...j->...ijk", gbar0, dphi)
        - np.einsum("...jk,...i->...ijk", gbar0, dphi)
    )
    residual_lc = relative_residual(lc, gbar0)

    nabla_a = covariant_derivative(jets.a.truncate(1), christoffel, 0).value
    lam = jets.lam.value
    g0 = jets.metric.value
    target = np.einsum("...i,...jk->...ijk", lam, g0) + np.einsum("...j,...ik->...ijk", lam, g0)
    residual_basic = relative_residual(nabla_a - target, jets.a.value)

    worst = max(residual_lc, residual_basic)
    logger.debug(f"Geodesic equivalence residuals: LC {residual_lc:.3e}, basic {residual_basic:.3e}")
    return EquivalenceReport(
        residual_LC=residual_lc,
        residual_basic=residual_basic,
        verdict=worst < EQUIVALENCE_TOLERANCE,
        strong=worst < STRONG_TOLERANCE,
        points=len(points),
    )


def _mu_values(jets: _PairJets, B: float, n: int) -> np.ndarray:
    christoffel = jets.christoffel.truncate(0)
    nabla_lam = covariant_derivative(jets.lam.truncate(1), christoffel, 0).value
    inverse = jets.inverse.value
    trace_a = np.einsum("...ij,...ij->...", inverse, jets.a.value)
    return (np.einsum("...ij,...ij->...", inverse, nabla_lam) - B * trace_a) / n


def pair_solution(g: MetricSpec, gbar: MetricSpec, B: float, point: np.ndarray | t.Sequence[float]) -> ExtendedSolution:
    """
    The solution `(a, λ, μ)` of the extended system carried by a geodesically equivalent pair.

    `μ` is recovered from the trace of `λ_i,j = μ g_ij + B a_ij`.
    """
    point = np.asarray(point, dtype=float)
    jets = _pair_jets(g, gbar, point, 2)
    mu = _mu_values(jets, B, g.dim)
    return ExtendedSolution(a=jets.a.value, lam=jets.lam.value, mu=float(mu))


class BarBReport(BaseModel):
    """
    `B̄` of the second metric of a pair, sampled at points.
    """

    model_config = ConfigDict(extra="forbid")

    values: list[float]
    mean: float
    spread: float
    """Relative spread of the values, `(max - min) / max(1, |mean|)`."""


def barB(
    g: MetricSpec,
    gbar: MetricSpec,
    B: float,
    points: np.ndarray,
    *,
    mu: float | None = None,
) -> BarBReport:
    """
    Evaluate `B̄ = -e^{-2φ}(μ + φ_p λ^p)` across sample points.

    The caller is responsible for the pair being geodesically equivalent with
    a degree of mobility of at least 3, so that `B` is well defined.

    Args:
        g: The first metric, with constant `B`.
        gbar: The second metric.
        B: The constant of `g`.
        points: Sample points.
        mu: Use this constant `μ` instead of the one recovered from the pair.

    Raises:
        ResidualError: If `B̄` is not constant across the points.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = _pair_jets(g, gbar, points, 2)
    mus = _mu_values(jets, B, g.dim) if mu is None else np.full(len(points), float(mu))
    lam_up = np.einsum("...pq,...q->...p", jets.inverse.value, jets.lam.value)
    dphi = jets.phi.gradient().value
    values = -np.exp(-2.0 * jets.phi.value) * (mus + np.einsum("...p,...p->...", dphi, lam_up))

    mean = float(np.mean(values))
    spread = float((np.max(values) - np.min(values)) / max(1.0, abs(mean)))
    if spread > CONSTANCY_TOLERANCE:
        raise ResidualError("constancy of B-bar", spread, CONSTANCY_TOLERANCE)
    return BarBReport(values=values.tolist(), mean=mean, spread=spread)


class ProjectiveReport(BaseModel):
    """
    Result of testing a vector field for being projective.
    """

    model_config = ConfigDict(extra="forbid")

    residual: float
    verdict: Verdict
    a: list[list[list[float]]]
    """`a^v` at each sample point."""


def projective_field_solution(g: MetricSpec, field: TensorField, points: np.ndarray) -> ProjectiveReport:
    """
    Build `a^v = L_v g - tr(g⁻¹ L_v g) g / (n + 1)` and test it against the equivalence equation.

    `λ` is taken from `½ ∂(tr g⁻¹a)`.

    Raises:
        ValueError: If the field is not a vector field on the metric's chart.
    """
    if field.valence != (1, 0):
        raise ValueError(f"Expected a vector field, got valence {field.valence}")
    if list(field.coords) != list(g.coords):
        raise ValueError("Field and metric must share coordinates")

    n = g.dim
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = metric_jets(g, points, 2)
    v = field.jet(points, 2)

    metric = jets.metric.truncate(1)
    dg = jets.metric.gradient()
    dv = v.gradient()
    lie = (
        contract("...k,...ijk->...ij", v.truncate(1), dg)
        + contract("...kj,...ki->...ij", metric, dv)
        + contract("...ik,...kj->...ij", metric, dv)
    )
    inverse = jets.inverse.truncate(1)
    trace = contract("...ij,...ij->...", inverse, lie)
    a = lie - contract("...,...ij->...ij", trace, metric) * (1.0 / (n + 1))

    lam = contract("...ij,...ij->...", inverse, a).gradient() * 0.5
    nabla_a = covariant_derivative(a, jets.christoffel.truncate(0), 0).value
    lam0, g0 = lam.value, metric.value
    target = np.einsum("...i,...jk->...ijk", lam0, g0) + np.einsum("...j,...ik->...ijk", lam0, g0)
    residual = relative_residual(nabla_a - target, a.value)
    return ProjectiveReport(
        residual=residual,
        verdict="projective" if residual < EQUIVALENCE_TOLERANCE else "non-projective",
        a=a.value.tolist(),
    )


def _determinant(matrix: np.ndarray) -> Expr:
    size = matrix.shape[0]
    if size == 0:
        return Num(1.0)
    if size == 1:
        return t.cast(Expr, matrix[0, 0])
    total: Expr = Num(0.0)
    for column in range(size):
        entry = t.cast(Expr, matrix[0, column])
        if isinstance(entry, Num) and entry.value == 0:
            continue
        minor = np.delete(np.delete(matrix, 0, axis=0), column, axis=1)
        term = entry * _determinant(minor)
        total = total - term if column % 2 else total + term
    return total


def _adjugate(matrix: np.ndarray) -> np.ndarray:
    size = matrix.shape[0]
    adjugate = np.full((size, size), Num(0.0), dtype=object)
    for i in range(size):
        for j in range(size):
            minor = np.delete(np.delete(matrix, j, axis=0), i, axis=1)
            cofactor = _determinant(minor)
            adjugate[i, j] = -cofactor if (i + j) % 2 else cofactor
    return adjugate


def partner_metric(g: MetricSpec, a: TensorField, *, label: str | None = None) -> MetricSpec:
    """
    The metric `ḡ = |det g / det a| g a⁻¹ g` geodesically equivalent to `g` whenever
    `a` is a nondegenerate solution of the equivalence equation.

    Built symbolically, so the result is an ordinary metric file.
    """
    if a.valence != (0, 2) or list(a.coords) != list(g.coords):
        raise ValueError("Expected a (0, 2) field on the metric's chart")
    metric = g.table
    field = a.table
    adjugate = _adjugate(field)
    det_a = _determinant(field)
    factor = call("abs", _determinant(metric) / det_a) / det_a

    n = g.dim
    components: dict[str, Expr] = {}
    for i in range(n):
        for j in range(i, n):
            entry: Expr = Num(0.0)
            for p in range(n):
                for q in range(n):
                    entry = entry + metric[i, p] * adjugate[p, q] * metric[q, j]
            if not (isinstance(entry, Num) and entry.value == 0):
                components[f"{i + 1},{j + 1}"] = factor * entry
    return g.replace(
        components=components,
        label=label or f"partner of {g.label or 'metric'}",
        signature_hint=None,
        provenance=f"partner_metric({g.label})",
    )


class PairAnalysis(BaseModel):
    """
    Everything the command line reports about a pair.
    """

    model_config = ConfigDict(extra="forbid")

    g: str
    gbar: str
    equivalence: EquivalenceReport
    samples: list[PairValues]
    barB: t.Optional[BarBReport] = None


def analyze_pair(
    g: MetricSpec,
    gbar: MetricSpec,
    points: np.ndarray,
    *,
    B: float | None = None,
) -> PairAnalysis:
    """
    Check equivalence and sample the pair quantities. `B̄` is only evaluated for an
    equivalent pair when `B` is given.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    equivalence = check_geodesic_equiv(g, gbar, points)
    samples = [a_lambda_of_pair(g, gbar, point) for point in points] if equivalence.verdict else []
    if not equivalence.verdict:
        logger.warning(f"'{g.label}' and '{gbar.label}' are not geodesically equivalent")
    report = barB(g, gbar, B, points) if B is not None and equivalence.verdict else None
    return PairAnalysis(g=g.label, gbar=gbar.label, equivalence=equivalence, samples=samples, barB=report)
