import numpy as np
import pytest

from conemob import corpus
from conemob.cone import ExtendedFields
from conemob.error import ResidualError
from conemob.expr import Num
from conemob.mobility import (
    MobilityReport,
    SearchParams,
    cone_mobility,
    degree,
    extended_connection,
    extended_residual,
    mu_family,
    parallel_one_form_solution,
    proj_iso_report,
    rescale_to_B_minus1,
    search_B,
)
from conemob.model import TensorField
from conemob.prolong import EngineParams, flat_section_dim

PARAMS = EngineParams(extra_points=2)
SMALL_SEARCH = SearchParams(magnitudes=9, low=0.1, high=10.0)


def _radial_fields(coords: list[str]) -> ExtendedFields:
    # a = x⊗x, λ = x, μ = 1 solves the system on flat space with B = 0
    n = len(coords)
    a = [[f"{coords[i]}*{coords[j]}" for j in range(n)] for i in range(n)]
    return ExtendedFields(
        a=TensorField.from_array(coords, (0, 2), a, symmetric=True, label="a"),
        lam=TensorField.from_array(coords, (0, 1), list(coords), label="lambda"),
        mu=Num(1.0),
    )


def _constant_fields(coords: list[str]) -> ExtendedFields:
    n = len(coords)
    return ExtendedFields(
        a=TensorField.from_array(coords, (0, 2), np.eye(n), symmetric=True, label="a"),
        lam=TensorField.from_array(coords, (0, 1), [0.0] * n, label="lambda"),
        mu=Num(0.0),
    )


@pytest.mark.parametrize(
    "identifier, B, expected",
    [
        pytest.param("flat2", 0.0, 6, id="flat2"),
        pytest.param("flat3", 0.0, 10, id="flat3"),
        pytest.param("sphere2", -1.0, 6, id="sphere2"),
        pytest.param("hyperbolic2", 1.0, 6, id="hyperbolic2"),
        pytest.param("sphere2", 0.0, 1, id="sphere2_wrong_B"),
    ],
)
def test_degree(identifier: str, B: float, expected: int) -> None:
    report = degree(corpus.get(identifier).metric, B, params=PARAMS)
    assert report.D == expected
    assert report.B == B
    assert report.route == "extended-system"
    assert report.seed == 42
    assert report.diagnostics["metric_solution_residual"] < 1e-8


def test_degree_is_seed_independent() -> None:
    m = corpus.get("flat2").metric
    assert {degree(m, 0.0, params=PARAMS.merge_with(EngineParams(seed=seed))).D for seed in range(3)} == {6}


def test_search_B_on_the_sphere() -> None:
    scan = search_B(corpus.get("sphere2").metric, PARAMS, SMALL_SEARCH)
    assert scan.best == pytest.approx(-1.0, rel=1e-3)
    assert scan.best_dim == 6
    assert scan.generic_dim == 1
    assert (0.0, 1) in scan.candidates
    assert [B for B, _ in scan.candidates] == sorted(B for B, _ in scan.candidates)


def test_degree_with_searched_B() -> None:
    report = degree(corpus.get("sphere2").metric, params=PARAMS, search_params=SMALL_SEARCH)
    assert report.D == 6
    assert report.B == pytest.approx(-1.0, rel=1e-3)
    assert report.B_candidates is not None
    assert report.diagnostics["generic_dim"] == 1


def test_cone_mobility_of_a_constant_curvature_base() -> None:
    report = cone_mobility(corpus.get("sphere2").metric, PARAMS)
    assert report.D == 6
    assert report.constant_curvature
    assert report.route == "cone-parallel"
    assert report.B is None


@pytest.mark.slow
def test_cone_mobility_of_a_realization() -> None:
    entry = corpus.get("realization,n=6,k=1,partition=3;3")
    assert entry.cone is not None
    report = cone_mobility(entry.cone, PARAMS)
    assert (report.D, report.k, report.ell) == (3, 1, 2)
    assert report.bounds_ok
    assert not report.constant_curvature
    assert report.diagnostics["metric_is_parallel"]


def test_extended_residual_of_sphere_solutions() -> None:
    sphere = corpus.get("sphere2").metric
    rng = np.random.default_rng(5)
    h = rng.standard_normal((3, 3))
    fields = corpus.sphere_solution(2, h + h.T)
    points = sphere.samples(5, seed=1)
    assert extended_residual(sphere, fields, -1.0, points).max < 1e-8
    assert extended_residual(sphere, fields, 1.0, points).max > 1e-3


def test_extended_residual_checks_chart() -> None:
    with pytest.raises(ValueError):
        extended_residual(corpus.get("flat2").metric, _radial_fields(["u", "v"]), 0.0, np.zeros((1, 2)))


def test_mu_family() -> None:
    flat = corpus.get("flat3").metric
    points = flat.samples(4, seed=2)
    family = mu_family(flat, _radial_fields(flat.coords), 2.5, points)
    assert family.mu == Num(2.5)
    for point in points:
        assert np.allclose(family.a.value(point), 2.5 * np.outer(point, point) + np.eye(3))
        assert np.allclose(family.lam.value(point), 2.5 * point)


def test_mu_family_rejects_other_solutions() -> None:
    flat = corpus.get("flat3").metric
    with pytest.raises(ResidualError):
        mu_family(flat, _constant_fields(flat.coords), 2.0, flat.samples(3, seed=2))


def test_parallel_one_form_solution() -> None:
    flat = corpus.get("flat3").metric
    points = flat.samples(3, seed=4)
    solution = parallel_one_form_solution(flat, "x1", _constant_fields(flat.coords), points)
    assert np.allclose(solution.u, [[1.0, 0.0, 0.0]] * 3)
    assert np.allclose(solution.a[0], np.diag([1.0, 0.0, 0.0]))
    assert np.allclose(solution.mu, 0.0)
    assert solution.residual.max < 1e-10


def test_parallel_one_form_solution_checks_inputs() -> None:
    flat = corpus.get("flat3").metric
    points = flat.samples(3, seed=4)
    with pytest.raises(ResidualError):
        parallel_one_form_solution(flat, "x1^2", _constant_fields(flat.coords), points)
    with pytest.raises(ResidualError):
        parallel_one_form_solution(flat, "x1", _radial_fields(flat.coords), points)


def test_rescale_to_B_minus1() -> None:
    m = corpus.get("hyperbolic2").metric
    assert rescale_to_B_minus1(m, -1.0) is m
    rescaled = rescale_to_B_minus1(m, 2.0)
    assert np.allclose(rescaled.matrix([0.1, 0.2]), -0.5 * m.matrix([0.1, 0.2]))
    with pytest.raises(ValueError):
        rescale_to_B_minus1(m, 0.0)


@pytest.mark.parametrize(
    "D, B, band, bound_only",
    [
        pytest.param(2, -1.0, (0, 1), True, id="small"),
        pytest.param(10, 0.0, (8, 9), False, id="B_zero"),
        pytest.param(6, -1.0, (5, 5), False, id="generic"),
    ],
)
def test_proj_iso_report(D: int, B: float, band: tuple[int, int], bound_only: bool) -> None:
    report = proj_iso_report(MobilityReport(D=D, B=B, route="extended-system", seed=42))
    assert report.upper_bound == D - 1
    assert report.band == band
    assert report.bound_only == bound_only


def test_extended_connection_fiber() -> None:
    sphere = corpus.get("sphere2").metric
    connection = extended_connection(sphere, -1.0)
    assert connection.fiber_dim == 3 + 2 + 1
    assert flat_section_dim(connection, PARAMS).dim == 6
