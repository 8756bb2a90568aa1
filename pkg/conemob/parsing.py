"""
Loading helpers for metric files, tensor field files and plain matrices.

Wherever a metric file is expected, a `corpus:<identifier>` reference works too.
A fragment selects a companion of the entry:

- `corpus:example2` is the total cone metric
- `corpus:example2#base` is its base
- `corpus:flat_projective_pair,n=3#partner` is the second metric of the pair
- `corpus:example1#L` is the parallel endomorphism (as a field)
"""

from __future__ import annotations

import json
import pathlib
import typing as t

import numpy as np
from pydantic import ValidationError

from conemob import corpus
from conemob.error import InvalidCorpusEntryError
from conemob.model import MetricSpec, TensorField

CORPUS_PREFIX = "corpus:"

Reference = t.Union[str, pathlib.Path]


def _split_corpus(ref: Reference) -> tuple[corpus.CorpusEntry, str] | None:
    text = str(ref)
    if not text.startswith(CORPUS_PREFIX):
        return None
    identifier, _, fragment = text[len(CORPUS_PREFIX) :].partition("#")
    return corpus.get(identifier), fragment


def load_metric(ref: Reference) -> MetricSpec:
    """
    Load a metric from a JSON file or a corpus reference.

    Args:
        ref: Path of a metric file, or `corpus:<identifier>[#base|#partner]`.

    Returns:
        The metric.

    Raises:
        InvalidCorpusEntryError: If the corpus reference is invalid.
        ValidationError: If the file does not hold a valid metric.
        OSError: If the file cannot be read.
    """
    split = _split_corpus(ref)
    if split is None:
        return MetricSpec.model_validate_json(pathlib.Path(ref).read_text())

    entry, fragment = split
    if fragment == "":
        return entry.metric
    selected = {"base": entry.base, "partner": entry.partner}.get(fragment)
    if selected is None:
        raise InvalidCorpusEntryError(str(ref), f"entry has no '{fragment}' metric")
    return selected


def try_load_metric(ref: Reference) -> MetricSpec | None:
    """
    Try to load a metric.

    Returns:
        The metric, or None if the reference does not resolve to one.
    """
    try:
        return load_metric(ref)
    except (InvalidCorpusEntryError, ValidationError, OSError, ValueError):
        return None


def load_field(ref: Reference, coords: t.Sequence[str] | None = None) -> TensorField:
    """
    Load a tensor field from a JSON file or from `corpus:<identifier>#L`.

    Args:
        ref: The reference.
        coords: When given, the field must live on these coordinates.

    Raises:
        ValueError: If the coordinates do not match.
    """
    split = _split_corpus(ref)
    if split is None:
        field = TensorField.model_validate_json(pathlib.Path(ref).read_text())
    else:
        entry, fragment = split
        if fragment != "L" or entry.endomorphism is None:
            raise InvalidCorpusEntryError(str(ref), "only '#L' names a field")
        field = entry.endomorphism

    if coords is not None and list(field.coords) != list(coords):
        raise ValueError(f"Field coordinates {field.coords} do not match {list(coords)}")
    return field


def load_matrix(ref: Reference) -> np.ndarray:
    """
    Load a square matrix from JSON, either a nested list or `{"matrix": [...]}`.

    Raises:
        ValueError: If the content is not a square numeric matrix.
    """
    content = json.loads(pathlib.Path(ref).read_text())
    if isinstance(content, dict):
        if "matrix" not in content:
            raise ValueError(f"{ref}: expected a 'matrix' key")
        content = content["matrix"]
    try:
        matrix = np.asarray(content, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{ref}: matrix entries must be numbers") from e
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{ref}: expected a square matrix, got shape {matrix.shape}")
    return matrix
