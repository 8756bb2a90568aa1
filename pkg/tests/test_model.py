import numpy as np
import pytest
from pydantic import ValidationError

from conemob.expr import Num, parse
from conemob.model import MetricSpec, TensorField, coordinate_names

METRIC_FILE = """
{
  "label": "warped strip",
  "dim": 2,
  "coords": ["s", "x"],
  "components": {"1,1": "1", "2,2": "exp(2*s)"},
  "sample_box": [[-1, 1], [0, 2]],
  "seed": 3
}
"""


def test_metric_file_roundtrip() -> None:
    m = MetricSpec.model_validate_json(METRIC_FILE)
    assert m.components["2,2"] == parse("exp(2*s)")
    assert np.allclose(m.matrix([0.5, 1.0]), np.diag([1.0, np.e]))
    again = MetricSpec.model_validate_json(m.model_dump_json())
    assert again.model_dump() == m.model_dump()
    assert m.to_file()["components"] == {"1,1": "1", "2,2": "exp(2 * s)"}


@pytest.mark.parametrize(
    "payload",
    [
        pytest.param({"dim": 2, "coords": ["x"], "components": {}}, id="coordinate_count"),
        pytest.param({"dim": 2, "coords": ["x", "x"], "components": {}}, id="duplicate_coordinate"),
        pytest.param({"dim": 1, "coords": ["exp"], "components": {}}, id="function_name_coordinate"),
        pytest.param({"dim": 2, "coords": ["x", "y"], "components": {"2,1": "1"}}, id="lower_triangle_key"),
        pytest.param({"dim": 2, "coords": ["x", "y"], "components": {"1,3": "1"}}, id="key_out_of_range"),
        pytest.param({"dim": 2, "coords": ["x", "y"], "components": {"1": "1"}}, id="key_rank"),
        pytest.param({"dim": 2, "coords": ["x", "y"], "components": {"1,1": "x +"}}, id="bad_expression"),
        pytest.param(
            {"dim": 2, "coords": ["x", "y"], "components": {}, "sample_box": [[0, 1]]}, id="box_dimension"
        ),
        pytest.param(
            {"dim": 1, "coords": ["x"], "components": {}, "sample_box": [[1, 0]]}, id="box_orientation"
        ),
        pytest.param({"dim": 1, "coords": ["x"], "components": {}, "extra": 1}, id="extra_field"),
    ],
)
def test_invalid_metrics(payload: dict[str, object]) -> None:
    with pytest.raises(ValidationError):
        MetricSpec.model_validate(payload)


def test_from_matrix_reads_upper_triangle() -> None:
    m = MetricSpec.from_matrix(["u", "v"], [["1", "u"], ["ignored", 2.0]], label="test")
    assert set(m.components) == {"1,1", "1,2", "2,2"}
    assert np.allclose(m.matrix([0.5, 0.0]), [[1.0, 0.5], [0.5, 2.0]])


def test_samples_are_seeded_and_regular() -> None:
    m = MetricSpec(dim=2, coords=["x", "y"], components={"1,1": "x", "2,2": "1"}, sample_box=[(-1, 1), (0, 1)])
    first = m.samples(10, seed=1)
    assert first.shape == (10, 2)
    assert np.array_equal(first, m.samples(10, seed=1))
    assert not np.array_equal(first, m.samples(10, seed=2))
    assert all(m.is_regular(point) for point in first)
    assert not m.is_regular(np.array([0.0, 0.5]))


def test_scaled_metric() -> None:
    m = MetricSpec.model_validate_json(METRIC_FILE)
    scaled = m.scaled(-2.0)
    assert np.allclose(scaled.matrix([0.0, 0.0]), -2.0 * m.matrix([0.0, 0.0]))
    assert scaled.coords == m.coords


def test_symmetric_tensor_field() -> None:
    field = TensorField(valence=(0, 2), coords=["x", "y"], components={"1,2": "x * y"}, symmetric=True)
    value = field.value([2.0, 3.0])
    assert np.allclose(value, [[0.0, 6.0], [6.0, 0.0]])
    assert field.table[1, 0] == field.table[0, 1]
    assert field.table[0, 0] == Num(0.0)


def test_tensor_field_from_array() -> None:
    field = TensorField.from_array(["x", "y"], (1, 1), [["x", 0], [1.5, "y^2"]], label="L")
    assert set(field.components) == {"1,1", "2,1", "2,2"}
    assert np.allclose(field.value([1.0, 2.0]), [[1.0, 0.0], [1.5, 4.0]])


@pytest.mark.parametrize(
    "kwargs",
    [
        pytest.param({"valence": (1, 1), "coords": ["x"], "symmetric": True}, id="symmetric_needs_0_2"),
        pytest.param({"valence": (3, 2), "coords": ["x"]}, id="rank_too_high"),
        pytest.param({"valence": (0, 1), "coords": ["x"], "components": {"1,1": "x"}}, id="key_rank"),
    ],
)
def test_invalid_tensor_fields(kwargs: dict[str, object]) -> None:
    with pytest.raises(ValidationError):
        TensorField.model_validate(kwargs)


def test_coordinate_names() -> None:
    assert coordinate_names("x", 3) == ["x1", "x2", "x3"]
    assert coordinate_names("z", 2, start=0) == ["z0", "z1"]
