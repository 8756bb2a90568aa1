import math

import numpy as np
import pytest

from conemob import corpus
from conemob.error import ResidualError
from conemob.expr import parse
from conemob.model import MetricSpec, TensorField
from conemob.pairs import (
    a_lambda_of_pair,
    analyze_pair,
    barB,
    check_geodesic_equiv,
    pair_solution,
    partner_metric,
    phi_of_pair,
    projective_field_solution,
)


def test_projective_pair_is_equivalent() -> None:
    entry = corpus.get("flat_projective_pair3")
    assert entry.partner is not None
    report = check_geodesic_equiv(entry.metric, entry.partner, entry.metric.samples(10, seed=1))
    assert report.verdict
    assert report.strong
    assert report.points == 10


def test_perturbed_partner_is_not_equivalent() -> None:
    entry = corpus.get("flat_projective_pair3")
    assert entry.partner is not None
    components = dict(entry.partner.components)
    components["1,1"] = components["1,1"] + 1e-3 * parse("x1^2")
    perturbed = entry.partner.replace(components=components)
    report = check_geodesic_equiv(entry.metric, perturbed, entry.metric.samples(10, seed=1))
    assert not report.verdict
    assert report.residual_LC > 1e-7


def test_pairs_share_a_chart() -> None:
    flat = corpus.get("flat2").metric
    other = MetricSpec.from_matrix(["u", "v"], np.eye(2))
    with pytest.raises(ValueError):
        check_geodesic_equiv(flat, other, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        phi_of_pair(flat, other, [0.0, 0.0])


def test_pair_quantities_of_a_scaled_metric() -> None:
    flat = corpus.get("flat2").metric
    scaled = flat.scaled(4.0)
    assert phi_of_pair(flat, scaled, [0.3, 0.1]) == pytest.approx(math.log(16.0) / 6)

    values = a_lambda_of_pair(flat, scaled, [0.3, 0.1])
    weight = 16.0 ** (1 / 3)
    assert np.allclose(values.a, weight / 4.0 * np.eye(2))
    assert np.allclose(values.lam, 0.0)

    solution = pair_solution(flat, flat, 2.0, [0.3, 0.1])
    assert np.allclose(solution.a, np.eye(2))
    assert solution.mu == pytest.approx(-2.0)


def test_lambda_agrees_with_trace_formula() -> None:
    entry = corpus.get("flat_projective_pair3")
    assert entry.partner is not None
    for point in entry.metric.samples(3, seed=2):
        values = a_lambda_of_pair(entry.metric, entry.partner, point)
        assert values.trace_residual < 1e-8
        assert np.linalg.norm(values.lam) > 1e-6


@pytest.mark.parametrize("identifier", ["sphere2", "hyperbolic2", "flat2"])
@pytest.mark.parametrize("c", [2.0, 1.0 / 3.0, -1.0])
def test_barB_of_scaled_metrics(identifier: str, c: float) -> None:
    entry = corpus.get(identifier)
    B = float(entry.fact("B"))
    report = barB(entry.metric, entry.metric.scaled(c), B, entry.metric.samples(5, seed=3))
    assert report.mean == pytest.approx(B / c, abs=1e-7)
    assert report.spread < 1e-6


def test_barB_with_fixed_mu() -> None:
    flat = corpus.get("flat2").metric
    report = barB(flat, flat, 0.0, flat.samples(3, seed=1), mu=1.5)
    assert report.mean == pytest.approx(-1.5)


def test_barB_of_the_sphere_pair_is_constant() -> None:
    entry = corpus.get("sphere_pair2")
    assert entry.partner is not None
    points = entry.metric.samples(5, seed=1)
    assert check_geodesic_equiv(entry.metric, entry.partner, points).verdict
    report = barB(entry.metric, entry.partner, -1.0, points)
    assert report.spread < 1e-6


def test_barB_rejects_a_varying_value() -> None:
    flat = corpus.get("flat2").metric
    conformal = MetricSpec.from_matrix(flat.coords, [["exp(x1)", 0], [0, "exp(x1)"]])
    with pytest.raises(ResidualError):
        barB(flat, conformal, 0.0, flat.samples(5, seed=1))


def test_partner_of_a_constant_solution() -> None:
    flat = corpus.get("flat2").metric
    a = TensorField.from_array(flat.coords, (0, 2), np.diag([2.0, 1.0]), label="a")
    partner = partner_metric(flat, a)
    assert np.allclose(partner.matrix([0.2, 0.7]), np.diag([0.25, 0.5]))
    assert check_geodesic_equiv(flat, partner, flat.samples(3, seed=1)).verdict


def test_partner_requires_a_form_on_the_chart() -> None:
    flat = corpus.get("flat2").metric
    with pytest.raises(ValueError):
        partner_metric(flat, TensorField(valence=(1, 1), coords=flat.coords))


@pytest.mark.parametrize(
    "components, verdict",
    [
        pytest.param({"1": "1"}, "projective", id="translation"),
        pytest.param({"1": "-x2", "2": "x1"}, "projective", id="rotation"),
        pytest.param({"1": "x1*(x1 + 2*x2)", "2": "x2*(x1 + 2*x2)"}, "projective", id="projective"),
        pytest.param({"1": "x1^2"}, "non-projective", id="quadratic"),
    ],
)
def test_projective_fields(components: dict[str, str], verdict: str) -> None:
    flat = corpus.get("flat2").metric
    field = TensorField(valence=(1, 0), coords=flat.coords, components=components)
    assert projective_field_solution(flat, field, flat.samples(4, seed=1)).verdict == verdict


def test_projective_field_requires_a_vector_field() -> None:
    flat = corpus.get("flat2").metric
    with pytest.raises(ValueError):
        projective_field_solution(flat, TensorField(valence=(0, 1), coords=flat.coords), np.zeros((1, 2)))


def test_analyze_pair() -> None:
    entry = corpus.get("flat_projective_pair2")
    assert entry.partner is not None
    points = entry.metric.samples(3, seed=1)
    analysis = analyze_pair(entry.metric, entry.partner, points, B=0.0)
    assert analysis.equivalence.verdict
    assert len(analysis.samples) == 3
    assert analysis.barB is not None

    conformal = MetricSpec.from_matrix(entry.metric.coords, [["exp(x1)", 0], [0, "exp(x1)"]])
    rejected = analyze_pair(entry.metric, conformal, points, B=0.0)
    assert not rejected.equivalence.verdict
    assert rejected.samples == []
    assert rejected.barB is None
