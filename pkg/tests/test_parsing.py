import json
import pathlib

import numpy as np
import pytest
from pydantic import ValidationError

from conemob.error import InvalidCorpusEntryError
from conemob.parsing import load_field, load_matrix, load_metric, try_load_metric


def _write(path: pathlib.Path, content: object) -> pathlib.Path:
    path.write_text(json.dumps(content))
    return path


def test_load_metric_file(tmp_path: pathlib.Path) -> None:
    path = _write(
        tmp_path / "metric.json",
        {"label": "strip", "dim": 2, "coords": ["s", "x"], "components": {"1,1": "1", "2,2": "exp(2*s)"}},
    )
    m = load_metric(path)
    assert m.label == "strip"
    assert np.allclose(m.matrix([0.0, 1.0]), np.eye(2))
    assert load_metric(str(path)).model_dump() == m.model_dump()


@pytest.mark.parametrize(
    "ref, dim",
    [
        pytest.param("corpus:sphere2", 2, id="plain"),
        pytest.param("corpus:example2", 6, id="cone_total"),
        pytest.param("corpus:example2#base", 5, id="cone_base"),
        pytest.param("corpus:flat_projective_pair,n=3#partner", 3, id="partner"),
    ],
)
def test_load_metric_from_corpus(ref: str, dim: int) -> None:
    assert load_metric(ref).dim == dim


def test_missing_companion_is_an_invalid_entry() -> None:
    with pytest.raises(InvalidCorpusEntryError):
        load_metric("corpus:sphere2#partner")
    with pytest.raises(InvalidCorpusEntryError):
        load_metric("corpus:sphere2#nothing")


def test_invalid_metric_file(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path / "metric.json", {"dim": 2, "coords": ["x"], "components": {}})
    with pytest.raises(ValidationError):
        load_metric(path)
    assert try_load_metric(path) is None
    assert try_load_metric(tmp_path / "missing.json") is None
    assert try_load_metric("corpus:torus2") is None
    assert try_load_metric("corpus:flat2") is not None


def test_load_field(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path / "field.json", {"valence": [1, 0], "coords": ["x1", "x2"], "components": {"1": "-x2"}})
    field = load_field(path, ["x1", "x2"])
    assert np.allclose(field.value([1.0, 2.0]), [-2.0, 0.0])
    with pytest.raises(ValueError):
        load_field(path, ["u", "v"])


def test_load_field_from_corpus() -> None:
    field = load_field("corpus:example1#L")
    assert field.valence == (1, 1)
    with pytest.raises(InvalidCorpusEntryError):
        load_field("corpus:example1")
    with pytest.raises(InvalidCorpusEntryError):
        load_field("corpus:sphere2#L")


@pytest.mark.parametrize(
    "content",
    [
        pytest.param([[1, 2], [2, 1]], id="nested_list"),
        pytest.param({"matrix": [[1, 2], [2, 1]]}, id="matrix_key"),
    ],
)
def test_load_matrix(tmp_path: pathlib.Path, content: object) -> None:
    assert np.array_equal(load_matrix(_write(tmp_path / "m.json", content)), [[1.0, 2.0], [2.0, 1.0]])


@pytest.mark.parametrize(
    "content",
    [
        pytest.param({"values": [[1]]}, id="missing_key"),
        pytest.param([[1, 2, 3], [4, 5, 6]], id="not_square"),
        pytest.param([1, 2], id="vector"),
        pytest.param([["a", "b"], ["c", "d"]], id="not_numbers"),
    ],
)
def test_load_matrix_rejects(tmp_path: pathlib.Path, content: object) -> None:
    with pytest.raises(ValueError):
        load_matrix(_write(tmp_path / "m.json", content))
