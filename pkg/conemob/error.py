"""
We try to avoid creating custom exceptions unless they are necessary.

We use the built-in and pydantic exceptions as much as possible. The ones below
carry structured data the CLI needs to report (offsets, singular values, residuals).
"""

from __future__ import annotations

import typing as t

if t.TYPE_CHECKING:
    import numpy as np


class ExprSyntaxError(ValueError):
    """
    Raised when an expression cannot be parsed.
    """

    def __init__(self, source: str, offset: int, reason: str):
        super().__init__(f"Syntax error at offset {offset}: {reason}")
        self.source = source
        """The text which failed to parse."""
        self.offset = offset
        """Byte offset (UTF-8) of the failure."""
        self.reason = reason
        """Short description of what was expected."""


class UnknownIdentifierError(ValueError):
    """
    Raised at evaluation time when an expression names an unknown variable or function.
    """

    def __init__(self, name: str):
        super().__init__(f"Unknown identifier: {name}")
        self.name = name
        """The identifier which could not be resolved."""


class DomainError(ValueError):
    """
    Raised when an elementary function is evaluated outside of its domain.
    """

    def __init__(self, function: str, value: float, expression: str | None = None):
        where = f" in '{expression}'" if expression else ""
        super().__init__(f"{function} is undefined at {value:g}{where}")
        self.function = function
        """The elementary function (or operation) which failed."""
        self.value = value
        """The offending argument."""
        self.expression = expression
        """The subexpression which produced the argument, if known."""


class DegenerateMetricError(ValueError):
    """
    Raised when a metric is (numerically) degenerate at a point.
    """

    def __init__(self, point: t.Sequence[float] | np.ndarray, determinant: float):
        coords = ", ".join(f"{float(x):g}" for x in point)
        super().__init__(f"Metric is degenerate at ({coords}) (det = {determinant:.3e})")
        self.point = [float(x) for x in point]
        """The point where the metric degenerates."""
        self.determinant = determinant
        """The determinant of the metric at the point."""


class RankIndecisionError(Exception):
    """
    Raised when a singular value sits too close to the rank cutoff to decide an integer answer.
    """

    def __init__(self, singular_values: t.Sequence[float], tolerance: float):
        super().__init__(f"Cannot decide rank: singular values too close to cutoff {tolerance:.1e}")
        self.singular_values = [float(s) for s in singular_values]
        """Normalized singular values (largest first)."""
        self.tolerance = tolerance
        """The relative cutoff that was in effect."""


class ClusteringIndecisionError(Exception):
    """
    Raised when two eigenvalues are too close to be separated but too far to be merged.
    """

    def __init__(self, eigenvalues: t.Sequence[complex], tolerance: float):
        values = ", ".join(f"{complex(v):.6g}" for v in eigenvalues)
        super().__init__(f"Cannot cluster eigenvalues [{values}] at tolerance {tolerance:.1e}")
        self.eigenvalues = [complex(v) for v in eigenvalues]
        """The eigenvalues which could not be clustered."""
        self.tolerance = tolerance
        """The clustering tolerance."""


class ResidualError(Exception):
    """
    Raised when a residual check required by an operation does not pass.
    """

    def __init__(self, check: str, residual: float, threshold: float):
        super().__init__(f"{check}: residual {residual:.3e} exceeds {threshold:.1e}")
        self.check = check
        """Name of the failing check."""
        self.residual = residual
        """The residual which was measured."""
        self.threshold = threshold
        """The threshold it had to stay below."""


class InvalidCorpusEntryError(Exception):
    """
    Raised when an invalid identifier is specified when getting a corpus entry.
    """

    def __init__(self, identifier: str, reason: str | None = None):
        super().__init__(f"Invalid corpus entry: {identifier}" + (f" ({reason})" if reason else ""))
        self.identifier = identifier
        """The identifier which was requested."""


class VerificationError(Exception):
    """
    Raised when one or more verification checks fail.
    """

    def __init__(self, failed: list[str]):
        super().__init__(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        self.failed = failed
        """Names of the failed checks."""
