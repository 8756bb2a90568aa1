"""
The acceptance suite as a library: every check recomputes a known result from the
corpus and compares it with the expected fact.
"""

from __future__ import annotations

import math
import time
import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from conemob import corpus
from conemob.canonical import Block, canonical_matrices, canonical_pair_form, jordan_structure, random_pair
from conemob.cone import build_cone, check_hom, cone_christoffel_closed, flatness_check, pack_fields, unpack_parallel
from conemob.corpus import Provenance
from conemob.error import VerificationError
from conemob.expr import parse
from conemob.geometry import (
    GeometryAtPoint,
    christoffel,
    christoffel_finite_difference,
    covariant_derivative,
    curvature_commutator,
    metric_jets,
    riemann,
    riemann_symmetry_residuals,
)
from conemob.mobility import cone_mobility, degree, extended_residual, search_B
from conemob.pairs import barB, check_geodesic_equiv
from conemob.prolong import EngineParams, flat_section_dim, sym2_bundle_connection
from conemob.util import relative_residual, signature, sym_unpack

if t.TYPE_CHECKING:
    from conemob.model import MetricSpec, TensorField

CheckOutcome = tuple[bool, str]
CheckFunction = t.Callable[[EngineParams], CheckOutcome]

g_checks: dict[str, tuple[CheckFunction, Provenance]] = {}

REALIZATIONS: list[tuple[int, int, list[int]]] = [(7, 0, [4, 4]), (5, 2, [4]), (8, 0, [3, 3, 3]), (6, 1, [3, 3])]
CANONICAL_SIGNATURES: list[tuple[int, int]] = [(0, 4), (1, 3), (2, 2)]
CANONICAL_TRIALS = 100


class CheckResult(BaseModel):
    """
    Outcome of one acceptance check.
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    passed: bool
    detail: str
    provenance: Provenance
    elapsed: float
    """Seconds."""


def register_check(name: str, provenance: Provenance) -> t.Callable[[CheckFunction], CheckFunction]:
    def decorator(check: CheckFunction) -> CheckFunction:
        g_checks[name] = (check, provenance)
        return check

    return decorator


def list_checks() -> list[str]:
    return list(g_checks)


def _parallel_residual(m: MetricSpec, field: TensorField, points: np.ndarray) -> float:
    jets = metric_jets(m, points, 1)
    tensor = field.jet(points, 1)
    nabla = covariant_derivative(tensor, jets.christoffel, up=field.valence[0]).value
    return relative_residual(nabla, tensor.value)


# Checks


@register_check("flat_maximum", "PUBLISHED")
def check_flat_maximum(params: EngineParams) -> CheckOutcome:
    entry = corpus.get("flat3")
    report = degree(entry.metric, 0.0, params=params)
    expected = entry.fact("D")
    return report.D == expected, f"D = {report.D}, expected {expected}"


@register_check("sphere_cone", "PUBLISHED")
def check_sphere_cone(params: EngineParams) -> CheckOutcome:
    sphere2 = corpus.get("sphere2")
    cone = build_cone(sphere2.metric)
    curvature = flatness_check(cone.total, cone.total.samples(params.samples, params.seed))
    sphere3 = corpus.get("sphere3")
    report = degree(sphere3.metric, -1.0, params=params)
    scan = search_B(sphere2.metric, params)
    near = scan.best is not None and scan.best < 0 and abs(math.log10(-scan.best)) <= 0.15
    passed = curvature < 1e-8 and report.D == sphere3.fact("D") and near
    return passed, f"max|R| on the cone {curvature:.1e}, D(S3) = {report.D}, best B on S2 = {scan.best}"


@register_check("example1", "PUBLISHED")
def check_example1(params: EngineParams) -> CheckOutcome:
    entry = corpus.get("example1")
    assert entry.endomorphism is not None and entry.point is not None
    residual = _parallel_residual(entry.metric, entry.endomorphism, entry.metric.samples(params.samples, params.seed))
    geometry = riemann(entry.metric, entry.point)
    L = entry.endomorphism.value(entry.point)
    component = float(L[0] @ geometry.riemann[:, 3, 2, 3])
    commutator = relative_residual(curvature_commutator(L, geometry.riemann), geometry.riemann)
    passed = residual < 1e-9 and abs(component) > 1e-6 and commutator < 1e-8
    return passed, f"|∇L| {residual:.1e}, L^1_p R^p_434 = {component:.4g}, |[L, R]| {commutator:.1e}"


@register_check("example2", "PUBLISHED")
def check_example2(params: EngineParams) -> CheckOutcome:
    entry = corpus.get("example2")
    assert entry.endomorphism is not None and entry.point is not None and entry.cone_function is not None
    points = entry.metric.samples(params.samples, params.seed)
    hom = check_hom(entry.metric, entry.cone_function, points)
    residual = _parallel_residual(entry.metric, entry.endomorphism, points)

    L = entry.endomorphism.value(entry.point)
    structures = jordan_structure(L)
    jordan_ok = len(structures) == 1 and abs(structures[0].real) < 1e-9 and structures[0].partition == [2, 2, 2]
    square = relative_residual(L @ L, L)
    curvature = riemann(entry.metric, entry.point).riemann
    product = float(np.max(np.abs(np.einsum("ip,pjkl->ijkl", L, curvature))))

    passed = (
        hom.passed
        and max(hom.hessian_residual, hom.gradient_residual) < 1e-9
        and residual < 1e-9
        and jordan_ok
        and square < 1e-12
        and product > 1e-6
    )
    partitions = [s.partition for s in structures]
    return passed, f"hom {hom.verdict}, |∇L| {residual:.1e}, partitions {partitions}, max|L R| {product:.3g}"


@register_check("realization", "PUBLISHED")
def check_realization(params: EngineParams) -> CheckOutcome:
    details: list[str] = []
    passed = True
    for n, k, partition in REALIZATIONS:
        entry = corpus.get("realization", n=n, k=k, partition=partition)
        assert entry.cone is not None
        report = cone_mobility(entry.cone, params)
        ok = (
            report.D == entry.fact("D")
            and report.k == entry.fact("k")
            and report.ell == entry.fact("ell")
            and bool(report.bounds_ok)
        )
        passed = passed and ok
        details.append(f"({n},{k},{partition}): D={report.D} k={report.k} ell={report.ell}")
    return passed, "; ".join(details)


@register_check("correspondence", "PUBLISHED")
def check_correspondence(params: EngineParams) -> CheckOutcome:
    sphere = corpus.get("sphere2").metric
    cone = build_cone(sphere)
    n = sphere.dim
    flat = flat_section_dim(sym2_bundle_connection(cone.total), params)
    point = flat.point
    metric = cone.total.matrix(point)

    forms = [sym_unpack(column, n + 1) for column in flat.basis.T]
    departures = [np.linalg.norm(A - np.sum(A * metric) / np.sum(metric * metric) * metric) for A in forms]
    A = forms[int(np.argmax(departures))]

    frame = corpus.sphere_frame(n, point)
    inverse = np.linalg.inv(frame)
    h = inverse.T @ A @ inverse
    fields = corpus.sphere_solution(n, 0.5 * (h + h.T))

    base_points = sphere.samples(params.samples, params.seed)
    base_residual = extended_residual(sphere, fields, -1.0, base_points).max

    unpacked = unpack_parallel(A, float(point[0]))
    direct = fields.at(point[1:])
    unpack_residual = relative_residual(
        np.concatenate([unpacked.a.ravel() - direct.a.ravel(), unpacked.lam - direct.lam, [unpacked.mu - direct.mu]]),
        np.concatenate([direct.a.ravel(), direct.lam, [direct.mu]]),
    )

    packed = pack_fields(fields, cone)
    cone_residual = _parallel_residual(cone.total, packed, cone.total.samples(params.samples, params.seed))
    passed = base_residual < 1e-7 and unpack_residual < 1e-7 and cone_residual < 1e-7
    return passed, f"base {base_residual:.1e}, unpack {unpack_residual:.1e}, cone {cone_residual:.1e}"


@register_check("barB", "DERIVED")
def check_barB(params: EngineParams) -> CheckOutcome:
    details: list[str] = []
    passed = True
    for identifier in ("sphere2", "hyperbolic2", "flat2"):
        entry = corpus.get(identifier)
        B = float(entry.fact("B"))
        points = entry.metric.samples(params.samples, params.seed)
        for c in (2.0, 1.0 / 3.0, -1.0):
            report = barB(entry.metric, entry.metric.scaled(c), B, points)
            expected = B / c
            ok = abs(report.mean - expected) <= 1e-6 * max(1.0, abs(expected))
            passed = passed and ok
            details.append(f"{identifier} c={c:.3g}: {report.mean:.6g} vs {expected:.6g}")
    return passed, "; ".join(details)


@register_check("pair_certification", "DERIVED")
def check_pair_certification(params: EngineParams) -> CheckOutcome:
    entry = corpus.get("flat_projective_pair3")
    assert entry.partner is not None
    points = entry.metric.samples(params.samples, params.seed)
    report = check_geodesic_equiv(entry.metric, entry.partner, points)

    components = dict(entry.partner.components)
    components["1,1"] = components["1,1"] + 1e-3 * parse("x1^2")
    perturbed = entry.partner.replace(components=components, label="perturbed partner")
    flipped = check_geodesic_equiv(entry.metric, perturbed, points)
    passed = report.verdict and not flipped.verdict
    return passed, f"pair residual {report.residual_LC:.1e}, perturbed residual {flipped.residual_LC:.1e}"


def _block_key(block: Block) -> tuple[float, float, int, int]:
    return round(block.real, 6), round(block.imag, 6), block.size, block.sign or 0


@register_check("canonical", "TRIVIAL")
def check_canonical(params: EngineParams) -> CheckOutcome:
    rng = np.random.default_rng(params.seed)
    worst = 0.0
    mismatches = 0
    for p, q in CANONICAL_SIGNATURES:
        for _ in range(CANONICAL_TRIALS):
            G, L, blocks = random_pair(rng, p, q)
            result = canonical_pair_form(G, L)
            worst = max(worst, result.residual_G, result.residual_L)
            same_blocks = sorted(map(_block_key, result.blocks)) == sorted(map(_block_key, blocks))
            if not same_blocks or result.signature != signature(G):
                mismatches += 1

    rotation_pair = [Block(real=0.0, imag=1.0, size=1)] * 2
    G8, L8 = canonical_matrices(rotation_pair)
    G9, L9 = canonical_matrices([Block(real=0.0, imag=1.0, size=2)])
    displays = (
        np.array_equal(L8, [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]])
        and np.array_equal(G8, [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
        and np.array_equal(L9, [[0, 1, 1, 0], [-1, 0, 0, 1], [0, 0, 0, 1], [0, 0, -1, 0]])
        and np.array_equal(G9, np.fliplr(np.eye(4)))
    )
    recovered = [b.size for b in canonical_pair_form(G9, L9).blocks] == [2]
    passed = worst < 1e-8 and mismatches == 0 and displays and recovered
    return passed, f"worst residual {worst:.1e}, {mismatches} block mismatch(es), displays {displays}"


@register_check("properties", "DERIVED")
def check_properties(params: EngineParams) -> CheckOutcome:
    symmetry = 0.0
    finite_difference = 0.0
    for identifier in ("flat3", "sphere2", "hyperbolic3", "example1", "example2"):
        m = corpus.get(identifier).metric
        points = m.samples(5 * params.samples, params.seed)
        jets = metric_jets(m, points, 2)
        curvature = jets.riemann.value
        for index, point in enumerate(points):
            g = jets.metric.value[index]
            geometry = GeometryAtPoint(
                point=point,
                g=g,
                ginv=jets.inverse.value[index],
                christoffel=jets.christoffel.value[index],
                riemann=curvature[index],
                signature=signature(g),
            )
            symmetry = max(symmetry, *riemann_symmetry_residuals(geometry).values())
        for point in points[: params.samples]:
            exact = christoffel(m, point)
            finite_difference = max(
                finite_difference, relative_residual(christoffel_finite_difference(m, point) - exact, exact)
            )

    closed_form = 0.0
    for base in (corpus.get("sphere2").metric, corpus.get("example2").base):
        assert base is not None
        cone = build_cone(base)
        for point in cone.total.samples(params.samples, params.seed):
            exact = christoffel(cone.total, point)
            closed_form = max(closed_form, relative_residual(cone_christoffel_closed(cone, point) - exact, exact))

    commutator = 0.0
    for identifier in ("example1", "example2"):
        entry = corpus.get(identifier)
        assert entry.endomorphism is not None
        for point in entry.metric.samples(params.samples, params.seed):
            curvature = riemann(entry.metric, point).riemann
            L = entry.endomorphism.value(point)
            commutator = max(commutator, relative_residual(curvature_commutator(L, curvature), curvature))

    degrees = set()
    for seed in range(1, 6):
        seeded = params.merge_with(EngineParams(seed=seed))
        flat_degree = degree(corpus.get("flat2").metric, 0.0, params=seeded).D
        cone_degree = cone_mobility(corpus.get("sphere2").metric, seeded).D
        degrees.add((flat_degree, cone_degree))

    passed = symmetry < 1e-9 and finite_difference < 1e-6 and closed_form < 1e-9 and commutator < 1e-8
    passed = passed and len(degrees) == 1
    return passed, (
        f"symmetries {symmetry:.1e}, finite differences {finite_difference:.1e}, "
        f"closed form {closed_form:.1e}, [L, R] {commutator:.1e}, degrees across seeds {sorted(degrees)}"
    )


def run_checks(names: t.Sequence[str] | None = None, params: EngineParams | None = None) -> list[CheckResult]:
    """
    Run acceptance checks.

    A check that raises is reported as failed with the exception as detail.

    Args:
        names: Checks to run (all of them by default).
        params: Engine options shared by the checks.

    Raises:
        ValueError: For unknown check names.
    """
    params = EngineParams() if params is None else params
    selected = list(g_checks) if names is None else list(names)
    unknown = [name for name in selected if name not in g_checks]
    if unknown:
        raise ValueError(f"Unknown check(s) {unknown}, known: {', '.join(g_checks)}")

    results: list[CheckResult] = []
    for name in selected:
        check, provenance = g_checks[name]
        start = time.perf_counter()
        try:
            passed, detail = check(params)
        except Exception as e:  # noqa: BLE001
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - start
        log = logger.success if passed else logger.error
        log(f"{name}: {'passed' if passed else 'FAILED'} in {elapsed:.1f}s ({detail})")
        results.append(CheckResult(name=name, passed=passed, detail=detail, provenance=provenance, elapsed=elapsed))
    return results


def verify_all(params: EngineParams | None = None) -> list[CheckResult]:
    """
    Run every check.

    Raises:
        VerificationError: If any check fails.
    """
    results = run_checks(params=params)
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise VerificationError(failed)
    return results
