import numpy as np
import pytest

from conemob import corpus
from conemob.error import DegenerateMetricError
from conemob.geometry import (
    christoffel,
    christoffel_finite_difference,
    cov_deriv,
    covariant_derivative,
    curvature_commutator,
    max_curvature,
    metric_jets,
    parallel_transport,
    riemann,
    riemann_symmetry_residuals,
)
from conemob.model import MetricSpec, TensorField


def _constant_curvature_tensor(g: np.ndarray, K: float) -> np.ndarray:
    # R^i_jkl = K (δ^i_k g_jl - δ^i_l g_jk)
    identity = np.eye(g.shape[0])
    return K * (np.einsum("ik,jl->ijkl", identity, g) - np.einsum("il,jk->ijkl", identity, g))


def test_flat_metric_has_no_connection() -> None:
    m = corpus.get("flat3").metric
    point = [0.1, -0.2, 0.3]
    assert np.allclose(christoffel(m, point), 0.0)
    assert np.allclose(riemann(m, point).riemann, 0.0)
    assert riemann(m, point).signature == (3, 0)


@pytest.mark.parametrize(
    "identifier, K",
    [
        pytest.param("sphere2", 1.0, id="sphere2"),
        pytest.param("sphere3", 1.0, id="sphere3"),
        pytest.param("hyperbolic2", -1.0, id="hyperbolic2"),
    ],
)
def test_constant_curvature(identifier: str, K: float) -> None:
    m = corpus.get(identifier).metric
    for point in m.samples(5, seed=3):
        geometry = riemann(m, point)
        assert np.allclose(geometry.riemann, _constant_curvature_tensor(geometry.g, K), atol=1e-9)


def test_constant_curvature_is_parallel() -> None:
    m = corpus.get("sphere2").metric
    geometry = riemann(m, [0.2, -0.1], deriv_order=2)
    assert geometry.nabla_riemann is not None and geometry.nabla2_riemann is not None
    assert np.max(np.abs(geometry.nabla_riemann)) < 1e-9
    assert np.max(np.abs(geometry.nabla2_riemann)) < 1e-8


def test_riemann_rejects_deriv_order() -> None:
    m = corpus.get("flat2").metric
    with pytest.raises(ValueError):
        riemann(m, [0.0, 0.0], deriv_order=3)  # type: ignore[arg-type]


@pytest.mark.parametrize("identifier", ["example1", "example2", "sphere3", "flat_projective_pair3"])
def test_curvature_symmetries(identifier: str) -> None:
    entry = corpus.get(identifier)
    m = entry.partner if entry.partner is not None else entry.metric
    for point in m.samples(3, seed=7):
        residuals = riemann_symmetry_residuals(riemann(m, point))
        assert set(residuals) == {"antisymmetry_12", "antisymmetry_34", "pair_symmetry", "bianchi"}
        assert max(residuals.values()) < 1e-9


def test_batched_jets_match_single_points() -> None:
    m = corpus.get("example1").metric
    points = m.samples(4, seed=11)
    jets = metric_jets(m, points, 2)
    assert jets.riemann.shape == (4, 4, 4, 4, 4)
    for index, point in enumerate(points):
        assert np.allclose(jets.riemann.value[index], riemann(m, point).riemann)
        assert np.allclose(jets.christoffel.value[index], christoffel(m, point))


@pytest.mark.parametrize("identifier", ["example1", "hyperbolic3"])
def test_christoffel_matches_finite_differences(identifier: str) -> None:
    m = corpus.get(identifier).metric
    for point in m.samples(5, seed=5):
        exact = christoffel(m, point)
        assert np.max(np.abs(christoffel_finite_difference(m, point) - exact)) < 1e-6 * max(1.0, np.max(np.abs(exact)))


def test_metric_is_parallel() -> None:
    m = corpus.get("example2").metric
    points = m.samples(3, seed=2)
    jets = metric_jets(m, points, 1)
    nabla = covariant_derivative(jets.metric, jets.christoffel, up=0)
    assert nabla.shape == (3, 6, 6, 6)
    assert np.max(np.abs(nabla.value)) < 1e-9


def test_parallel_endomorphism_of_example1() -> None:
    entry = corpus.get("example1")
    assert entry.endomorphism is not None and entry.point is not None
    nabla = cov_deriv(entry.metric, entry.endomorphism, entry.point)
    assert nabla.shape == (4, 4, 4)
    assert np.max(np.abs(nabla)) < 1e-9
    curvature = riemann(entry.metric, entry.point).riemann
    assert np.max(np.abs(curvature_commutator(entry.endomorphism.value(entry.point), curvature))) < 1e-8


def test_cov_deriv_rejects_other_charts() -> None:
    m = corpus.get("flat2").metric
    field = TensorField(valence=(1, 0), coords=["u", "v"], components={"1": "u"})
    with pytest.raises(ValueError):
        cov_deriv(m, field, [0.0, 0.0])


def test_gradient_of_radius_on_flat_space() -> None:
    m = corpus.get("flat2").metric
    field = TensorField(valence=(0, 1), coords=["x1", "x2"], components={"1": "x1", "2": "x2"})
    assert np.allclose(cov_deriv(m, field, [0.3, 0.4]), np.eye(2))


def test_degenerate_metric_is_refused() -> None:
    m = MetricSpec(dim=2, coords=["x", "y"], components={"1,1": "x", "2,2": "1"})
    with pytest.raises(DegenerateMetricError):
        christoffel(m, [0.0, 0.5])
    with pytest.raises(DegenerateMetricError):
        metric_jets(m, np.array([[0.2, 0.1], [0.0, 0.3]]), 1)


def test_max_curvature() -> None:
    assert max_curvature(corpus.get("flat3").metric, np.zeros((2, 3))) == 0.0
    assert max_curvature(corpus.get("sphere2").metric, np.array([[0.0, 0.0]])) > 1.0


def test_parallel_transport_on_flat_space_is_trivial() -> None:
    m = corpus.get("flat3").metric
    path = [[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [0.3, -0.2, 0.4]]
    vector = np.array([1.0, 2.0, -1.0])
    assert np.allclose(parallel_transport(m, path, vector), vector)


def test_parallel_transport_keeps_length() -> None:
    m = corpus.get("sphere2").metric
    start, end = np.array([0.0, 0.0]), np.array([0.4, -0.3])
    vector = np.array([0.5, 1.0])
    moved = parallel_transport(m, [start, end], vector)
    before = vector @ m.matrix(start) @ vector
    after = moved @ m.matrix(end) @ moved
    assert after == pytest.approx(before, rel=1e-8)


def test_parallel_transport_checks_valence() -> None:
    m = corpus.get("flat2").metric
    with pytest.raises(ValueError):
        parallel_transport(m, [[0.0, 0.0], [0.1, 0.1]], np.zeros(2), valence=(0, 2))
