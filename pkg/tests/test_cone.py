import numpy as np
import pytest
from pydantic import ValidationError

from conemob import corpus
from conemob.cone import (
    ConeManifold,
    ExtendedSolution,
    build_cone,
    check_hom,
    cone_christoffel_closed,
    cone_manifold,
    flatness_check,
    glue_product,
    pack_fields,
    pack_parallel,
    radial_parallel_check,
    unpack_parallel,
)
from conemob.geometry import christoffel
from conemob.model import MetricSpec
from conemob.prolong import EngineParams


def _flat_plane(names: list[str]) -> MetricSpec:
    return MetricSpec.from_matrix(names, np.eye(len(names)), label="plane")


def test_cone_over_sphere_is_flat() -> None:
    cone = build_cone(corpus.get("sphere2").metric)
    assert cone.total.dim == 3
    assert cone.total.coords == ["r", "x1", "x2"]
    assert cone.total.box[0] == (0.5, 3.0)
    assert flatness_check(cone.total, cone.total.samples(20, seed=1)) < 1e-8


def test_cone_over_example2_base_is_curved() -> None:
    base = corpus.get("example2").base
    assert base is not None
    cone = build_cone(base)
    assert flatness_check(cone.total, cone.total.samples(3, seed=1)) > 1e-6


@pytest.mark.parametrize(
    "kwargs",
    [
        pytest.param({"r_name": "x1"}, id="name_collision"),
        pytest.param({"r_range": (0.0, 1.0)}, id="apex_in_range"),
        pytest.param({"r_range": (2.0, 1.0)}, id="empty_range"),
    ],
)
def test_build_cone_rejects(kwargs: dict[str, object]) -> None:
    with pytest.raises(ValueError):
        build_cone(corpus.get("sphere2").metric, **kwargs)  # type: ignore[arg-type]


@pytest.mark.parametrize("identifier", ["sphere2", "hyperbolic2"])
def test_closed_form_christoffels(identifier: str) -> None:
    cone = build_cone(corpus.get(identifier).metric)
    for point in cone.total.samples(5, seed=4):
        assert np.allclose(cone_christoffel_closed(cone, point), christoffel(cone.total, point), atol=1e-10)


def test_closed_form_christoffels_on_example2() -> None:
    base = corpus.get("example2").base
    assert base is not None
    cone = build_cone(base)
    for point in cone.total.samples(3, seed=4):
        assert np.allclose(cone_christoffel_closed(cone, point), christoffel(cone.total, point), atol=1e-10)
    with pytest.raises(ValueError):
        cone_christoffel_closed(cone, [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_check_hom_verdicts() -> None:
    cone = build_cone(corpus.get("sphere2").metric)
    points = cone.total.samples(10, seed=2)

    report = check_hom(cone.total, "r^2/2", points)
    assert report.verdict == "cone-compatible"
    assert report.passed
    assert max(report.hessian_residual, report.gradient_residual) < 1e-9
    assert report.points == 10

    flipped = check_hom(cone.total.scaled(-1.0), "-r^2/2", points)
    assert flipped.verdict == "cone for -g"
    assert not flipped.passed

    assert check_hom(cone.total, "r^2", points).verdict == "not a cone"


def test_flat_space_is_a_cone() -> None:
    plane = _flat_plane(["y1", "y2", "y3"])
    assert check_hom(plane, "(y1^2 + y2^2 + y3^2)/2", plane.samples(10, seed=1)).passed


def test_cone_manifold_verifies() -> None:
    plane = _flat_plane(["y1", "y2"])
    manifold = cone_manifold(plane, "(y1^2 + y2^2)/2")
    assert isinstance(manifold, ConeManifold)
    assert manifold.base_dim == 1
    with pytest.raises(ValueError):
        cone_manifold(plane, "y1^2 + y2^2")


def test_glue_product() -> None:
    sphere_cone = build_cone(corpus.get("sphere2").metric)
    plane = _flat_plane(["y1", "y2"])
    glued = glue_product(sphere_cone, (plane, "(y1^2 + y2^2)/2"))
    assert glued.metric.dim == 5
    assert glued.metric.coords == ["r", "x1", "x2", "y1", "y2"]
    assert check_hom(glued.metric, glued.v, glued.metric.samples(10, seed=3)).passed


def test_glue_product_rejects() -> None:
    sphere_cone = build_cone(corpus.get("sphere2").metric)
    with pytest.raises(ValueError):
        glue_product(sphere_cone, sphere_cone)
    plane = _flat_plane(["y1", "y2"])
    with pytest.raises(ValueError):
        glue_product(sphere_cone, (plane, "y1^2 + y2^2"))


def test_pack_unpack() -> None:
    a = np.array([[2.0, 0.5], [0.5, -1.0]])
    solution = ExtendedSolution(a=a, lam=np.array([0.3, -0.7]), mu=1.5)
    packed = pack_parallel(solution, 2.0)
    assert np.allclose(packed, packed.T)
    assert packed[0, 0] == 1.5
    assert np.allclose(packed[0, 1:], [-0.6, 1.4])
    assert np.allclose(packed[1:, 1:], 4.0 * a)
    restored = unpack_parallel(packed, 2.0)
    assert np.allclose(restored.a, a)
    assert np.allclose(restored.lam, solution.lam)
    assert restored.mu == pytest.approx(1.5)


def test_extended_solution_validates() -> None:
    with pytest.raises(ValidationError):
        ExtendedSolution(a=np.array([[1.0, 2.0], [0.0, 1.0]]), lam=np.zeros(2), mu=0.0)
    with pytest.raises(ValidationError):
        ExtendedSolution(a=np.eye(3), lam=np.zeros(2), mu=0.0)


def test_pack_fields_of_the_metric_solution() -> None:
    sphere = corpus.get("sphere2").metric
    cone = build_cone(sphere)
    packed = pack_fields(corpus.sphere_solution(2, np.eye(3)), cone)
    for point in cone.total.samples(5, seed=6):
        assert np.allclose(packed.value(point), cone.total.matrix(point))


def test_pack_fields_checks_chart() -> None:
    cone = build_cone(corpus.get("sphere3").metric)
    with pytest.raises(ValueError):
        pack_fields(corpus.sphere_solution(2, np.eye(3)), cone)


def test_cone_gradient_is_not_parallel() -> None:
    entry = corpus.get("example2")
    assert entry.cone is not None
    params = EngineParams(derivative_order=1)
    report = radial_parallel_check(entry.cone, entry.metric.samples(2, seed=8), params)
    assert report.curved_points == 2
    assert report.passed
