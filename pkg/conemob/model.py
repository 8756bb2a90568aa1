"""
Models are the core datatypes for metrics and tensor fields given by expressions.

[MetricSpec][conemob.model.MetricSpec] is also the on-disk metric file format:

```json
{
  "label": "round S2 (stereographic)",
  "dim": 2,
  "coords": ["x1", "x2"],
  "components": {"1,1": "4/(1 + x1^2 + x2^2)^2", "2,2": "4/(1 + x1^2 + x2^2)^2"},
  "sample_box": [[-0.5, 0.5], [-0.5, 0.5]],
  "seed": 42
}
```
"""

from __future__ import annotations

import functools
import itertools
import typing as t

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Self

from conemob.error import DegenerateMetricError, DomainError
from conemob.expr import FUNCTIONS, Expr, Num, as_expr, eval_jets
from conemob.util import is_degenerate, sample_box

if t.TYPE_CHECKING:
    from conemob.jets import Jet

Box = list[tuple[float, float]]

DEFAULT_SAMPLES = 20
"""Number of sample points used by checks unless told otherwise."""


def _parse_key(key: str, rank: int, dim: int) -> tuple[int, ...]:
    try:
        indices = tuple(int(part) - 1 for part in key.split(",")) if rank else ()
    except ValueError as e:
        raise ValueError(f"Component key '{key}' is not a comma separated list of indices") from e
    if len(indices) != rank:
        raise ValueError(f"Component key '{key}' needs {rank} indices")
    if any(i < 0 or i >= dim for i in indices):
        raise ValueError(f"Component key '{key}' is out of range for dimension {dim}")
    return indices


def _check_coords(coords: list[str]) -> list[str]:
    if len(set(coords)) != len(coords):
        raise ValueError(f"Coordinate names must be unique: {coords}")
    for name in coords:
        if not name.isidentifier() or name in FUNCTIONS:
            raise ValueError(f"Invalid coordinate name: '{name}'")
    return coords


class MetricSpec(BaseModel):
    """
    A pseudo-Riemannian metric on a coordinate chart, given by closed-form components.
    """

    model_config = ConfigDict(extra="forbid")

    label: str = ""
    """Free text description, also used for provenance."""

    dim: int = Field(ge=0)
    """Dimension of the chart."""

    coords: list[str]
    """Coordinate names, in the order of point components."""

    components: dict[str, Expr]
    """Components `"i,j"` (1-based, `i <= j`). Missing ones are zero."""

    sample_box: t.Optional[Box] = None
    """Box `[[lo, hi], ...]` where sample points are drawn (defaults to `[-0.5, 0.5]` per axis)."""

    signature_hint: t.Optional[tuple[int, int]] = None
    """Expected `(p, q)`, informative only."""

    seed: t.Optional[int] = None
    """Seed for sample points (falls back to the caller's seed)."""

    provenance: t.Optional[str] = None
    """Where the metric came from (a corpus entry, a cone construction, ...)."""

    @field_validator("coords")
    @classmethod
    def validate_coords(cls, value: list[str]) -> list[str]:
        return _check_coords(value)

    @model_validator(mode="after")
    def validate_shape(self) -> Self:
        if len(self.coords) != self.dim:
            raise ValueError(f"Expected {self.dim} coordinate names, got {len(self.coords)}")
        for key in self.components:
            i, j = _parse_key(key, 2, self.dim)
            if i > j:
                raise ValueError(f"Component key '{key}' must have i <= j")
        if self.sample_box is not None:
            if len(self.sample_box) != self.dim:
                raise ValueError(f"Sample box has {len(self.sample_box)} ranges for dimension {self.dim}")
            if any(lo >= hi for lo, hi in self.sample_box):
                raise ValueError("Sample box ranges must satisfy lo < hi")
        return self

    def __str__(self) -> str:
        return f"{self.label or 'metric'} (dim {self.dim})"

    @classmethod
    def from_matrix(
        cls,
        coords: t.Sequence[str],
        matrix: t.Sequence[t.Sequence[Expr | str | float]] | np.ndarray,
        **kwargs: t.Any,
    ) -> MetricSpec:
        """
        Build a metric from a full (symmetric) matrix of expressions.

        Only the upper triangle is read.
        """
        n = len(coords)
        components: dict[str, Expr] = {}
        for i in range(n):
            for j in range(i, n):
                entry = as_expr(matrix[i][j])
                if not (isinstance(entry, Num) and entry.value == 0):
                    components[f"{i + 1},{j + 1}"] = entry
        return cls(dim=n, coords=list(coords), components=components, **kwargs)

    @property
    def box(self) -> Box:
        return self.sample_box if self.sample_box is not None else [(-0.5, 0.5)] * self.dim

    @functools.cached_property
    def table(self) -> np.ndarray:
        """Symmetric `(n, n)` object array of component expressions."""
        table = np.full((self.dim, self.dim), Num(0.0), dtype=object)
        for key, value in self.components.items():
            i, j = _parse_key(key, 2, self.dim)
            table[i, j] = value
            table[j, i] = value
        return table

    def jet(self, points: np.ndarray | t.Sequence[float], order: int) -> Jet:
        """Jet of the metric matrix at a point (or a batch of points)."""
        return eval_jets(self.table, points, order, self.coords)

    def matrix(self, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
        return np.asarray(self.jet(point, 0).value)

    def check_point(self, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
        """
        Metric matrix at a point, refusing degenerate points.

        Raises:
            DegenerateMetricError: If `|det g|` is below the degeneracy tolerance.
        """
        g = self.matrix(point)
        degenerate, determinant = is_degenerate(g)
        if degenerate:
            raise DegenerateMetricError(point, determinant)
        return g

    def is_regular(self, point: np.ndarray) -> bool:
        try:
            self.check_point(point)
        except (DegenerateMetricError, DomainError, ZeroDivisionError):
            return False
        return True

    def samples(self, count: int = DEFAULT_SAMPLES, seed: int | None = None) -> np.ndarray:
        """
        Seeded sample points in the sample box where the metric is regular.

        Returns:
            Points of shape `(count, dim)`.
        """
        if seed is None:
            seed = self.seed if self.seed is not None else 42
        return sample_box(self.box, count, seed, accept=self.is_regular)

    def scaled(self, factor: float | Expr, *, label: str | None = None) -> MetricSpec:
        """The metric `factor * g` on the same chart."""
        return self.replace(
            components={key: as_expr(factor) * value for key, value in self.components.items()},
            label=label or f"{factor} * ({self.label})",
        )

    def replace(self, **updates: t.Any) -> MetricSpec:
        """A validated copy with some fields replaced."""
        fields = {name: getattr(self, name) for name in type(self).model_fields}
        return type(self).model_validate({**fields, **updates})

    def to_file(self) -> dict[str, t.Any]:
        """JSON compatible dictionary in the metric file format."""
        return self.model_dump(mode="json", exclude_none=True)


class TensorField(BaseModel):
    """
    A tensor field of valence `(up, down)` given by closed-form components.

    Upper indices come first. Keys are 1-based indices joined by commas,
    missing components are zero. With `symmetric` set on a `(0, 2)` field,
    `"i,j"` also fills `"j,i"`.
    """

    model_config = ConfigDict(extra="forbid")

    label: str = ""
    valence: tuple[int, int]
    coords: list[str]
    components: dict[str, Expr] = Field(default_factory=dict)
    symmetric: bool = False

    @field_validator("coords")
    @classmethod
    def validate_coords(cls, value: list[str]) -> list[str]:
        return _check_coords(value)

    @model_validator(mode="after")
    def validate_keys(self) -> Self:
        up, down = self.valence
        if up < 0 or down < 0 or up + down > 4:
            raise ValueError(f"Unsupported valence {self.valence}")
        if self.symmetric and self.valence != (0, 2):
            raise ValueError("Only (0, 2) fields can be declared symmetric")
        for key in self.components:
            _parse_key(key, self.rank, self.dim)
        return self

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def rank(self) -> int:
        return sum(self.valence)

    @classmethod
    def from_array(
        cls,
        coords: t.Sequence[str],
        valence: tuple[int, int],
        array: np.ndarray | t.Sequence[t.Any],
        **kwargs: t.Any,
    ) -> TensorField:
        """Build a field from a nested array of expressions (strings or numbers allowed)."""
        array = np.asarray(array, dtype=object)
        components: dict[str, Expr] = {}
        for index in np.ndindex(*array.shape):
            entry = as_expr(array[index])
            if not (isinstance(entry, Num) and entry.value == 0):
                components[",".join(str(i + 1) for i in index)] = entry
        return cls(coords=list(coords), valence=valence, components=components, **kwargs)

    @functools.cached_property
    def table(self) -> np.ndarray:
        table = np.full((self.dim,) * self.rank, Num(0.0), dtype=object)
        for key, value in self.components.items():
            index = _parse_key(key, self.rank, self.dim)
            table[index] = value
            if self.symmetric:
                table[index[::-1]] = value
        return table

    def jet(self, points: np.ndarray | t.Sequence[float], order: int) -> Jet:
        return eval_jets(self.table, points, order, self.coords)

    def value(self, point: np.ndarray | t.Sequence[float]) -> np.ndarray:
        return np.asarray(self.jet(point, 0).value)


def coordinate_names(prefix: str, count: int, *, start: int = 1) -> list[str]:
    """`["x1", "x2", ...]` style names."""
    return [f"{prefix}{i}" for i in itertools.islice(itertools.count(start), count)]
