import numpy as np
import pytest

from conemob import corpus
from conemob.cone import build_cone, check_hom
from conemob.error import InvalidCorpusEntryError
from conemob.geometry import cov_deriv
from conemob.model import TensorField


def test_list_entries() -> None:
    entries = corpus.list_entries()
    assert entries == sorted(entries)
    assert {"flat", "sphere", "hyperbolic", "example1", "example2", "realization"} <= set(entries)


@pytest.mark.parametrize(
    "identifier, name, dim",
    [
        pytest.param("sphere3", "sphere", 3, id="trailing_digit"),
        pytest.param("sphere,n=4", "sphere", 4, id="keyword"),
        pytest.param("flat,n=4,q=1", "flat", 4, id="two_keywords"),
        pytest.param("hyperbolic2", "hyperbolic", 2, id="hyperbolic"),
        pytest.param("example1", "example1", 4, id="registered_with_digit"),
        pytest.param("example2", "example2", 6, id="cone_entry"),
        pytest.param("flat_projective_pair3", "flat_projective_pair", 3, id="underscored_name"),
        pytest.param("realization,n=8,k=0,partition=3;3;3", "realization", 9, id="list_parameter"),
    ],
)
def test_identifiers(identifier: str, name: str, dim: int) -> None:
    entry = corpus.get(identifier)
    assert entry.name == name
    assert entry.metric.dim == dim


def test_keyword_overrides() -> None:
    entry = corpus.get("flat3", q=1)
    assert entry.identifier == "flat,n=3,q=1"
    assert entry.metric.signature_hint == (2, 1)
    assert np.allclose(entry.metric.matrix([0.0, 0.0, 0.0]), np.diag([-1.0, 1.0, 1.0]))


@pytest.mark.parametrize(
    "identifier",
    [
        pytest.param("torus2", id="unknown_name"),
        pytest.param("sphere,dim=3", id="unknown_parameter"),
        pytest.param("sphere,3", id="not_key_value"),
        pytest.param("sphere1", id="factory_rejects"),
        pytest.param("flat,n=2,q=3", id="bad_signature"),
        pytest.param("realization,n=7,k=0,partition=4;3", id="partition_sum"),
        pytest.param("realization,n=4,k=0,partition=2;3", id="part_too_small"),
        pytest.param("realization,n=7,k=-1,partition=4;4", id="negative_k"),
    ],
)
def test_invalid_entries(identifier: str) -> None:
    with pytest.raises(InvalidCorpusEntryError) as exc:
        corpus.get(identifier)
    assert exc.value.identifier == identifier


def test_empty_partition_is_rejected() -> None:
    with pytest.raises(InvalidCorpusEntryError):
        corpus.get("realization", n=7, k=0, partition=[])


def test_facts_carry_provenance() -> None:
    entry = corpus.get("sphere3")
    assert entry.fact("D") == 10
    assert entry.fact("B") == -1.0
    assert entry.fact("missing", "default") == "default"
    assert {fact.provenance for fact in entry.facts} <= {"PUBLISHED", "TRIVIAL", "DERIVED"}


@pytest.mark.parametrize(
    "n, k, partition, D",
    [
        pytest.param(7, 0, [4, 4], 2, id="7_0_44"),
        pytest.param(5, 2, [4], 4, id="5_2_4"),
        pytest.param(6, 1, [3, 3], 3, id="6_1_33"),
    ],
)
def test_realizations_are_cones(n: int, k: int, partition: list[int], D: int) -> None:
    entry = corpus.get("realization", n=n, k=k, partition=partition)
    assert entry.metric.dim == n + 1
    assert entry.fact("D") == D
    assert entry.fact("ell") == len(partition)
    assert entry.cone is not None
    assert check_hom(entry.metric, entry.cone.v, entry.metric.samples(5, seed=1)).passed


def test_realization_has_one_negative_direction() -> None:
    entry = corpus.get("realization,n=7,k=0,partition=4;4")
    g = entry.metric.matrix(entry.metric.samples(1, seed=2)[0])
    eigenvalues = np.linalg.eigvalsh(g)
    assert int(np.sum(eigenvalues < 0)) == 1


def test_example2_is_a_cone_over_its_base() -> None:
    entry = corpus.get("example2")
    assert entry.base is not None and entry.cone is not None
    assert entry.metric.coords == ["r", "s", "x1", "x2", "x3", "x4"]
    assert check_hom(entry.metric, entry.cone.v, entry.metric.samples(5, seed=1)).passed


def test_sphere_solution_of_the_identity_is_the_metric() -> None:
    sphere = corpus.get("sphere2").metric
    fields = corpus.sphere_solution(2, np.eye(3))
    for point in sphere.samples(3, seed=1):
        solution = fields.at(point)
        assert np.allclose(solution.a, sphere.matrix(point))
        assert np.allclose(solution.lam, 0.0)
        assert solution.mu == pytest.approx(1.0)


def test_sphere_solution_requires_a_symmetric_form() -> None:
    with pytest.raises(ValueError):
        corpus.sphere_solution(2, np.eye(2))
    with pytest.raises(ValueError):
        corpus.sphere_solution(2, np.triu(np.ones((3, 3))))


def test_sphere_frame_pulls_back_the_flat_metric() -> None:
    cone = build_cone(corpus.get("sphere2").metric)
    point = np.array([1.5, 0.2, -0.1])
    frame = corpus.sphere_frame(2, point)
    assert np.allclose(frame.T @ frame, cone.total.matrix(point))


def test_example2_endomorphism_x_block_is_constant() -> None:
    entry = corpus.get("example2")
    assert entry.endomorphism is not None
    assert "exp(2s)" in next(fact.note for fact in entry.facts if fact.name == "L_parallel")
    components = {key: str(value) for key, value in entry.endomorphism.components.items()}
    scaled = TensorField(
        valence=(1, 1),
        coords=entry.metric.coords,
        components={**components, "3,5": "exp(2*s)", "4,6": "exp(2*s)"},
    )
    for point in entry.metric.samples(3, seed=1):
        assert np.max(np.abs(cov_deriv(entry.metric, entry.endomorphism, point))) < 1e-9
        assert np.max(np.abs(cov_deriv(entry.metric, scaled, point))) > 1e-3
