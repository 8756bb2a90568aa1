from __future__ import annotations

import functools
import typing as t

import numpy as np
from pydantic import PlainSerializer, PlainValidator
from scipy import linalg

from conemob.error import RankIndecisionError

# Serialization


def _to_array(value: t.Any) -> np.ndarray:
    return np.asarray(value, dtype=float)


def _to_list(value: np.ndarray) -> t.Any:
    return np.asarray(value, dtype=float).tolist()


FloatArray = t.Annotated[
    np.ndarray,
    PlainValidator(_to_array),
    PlainSerializer(_to_list, return_type=list),
]
"""A numpy array field which validates from nested lists and serializes back to them."""


# Rank decisions


def decide_rank(singular_values: np.ndarray, tolerance: float = 1e-8, gap_ratio: float = 10.0) -> int:
    """
    Numerical rank from singular values (largest first).

    Values at or below `tolerance * s_max` count as zero. A value kept above the
    cutoff but within `gap_ratio` of it is ambiguous and raises.

    Raises:
        RankIndecisionError: If any retained singular value sits inside the gap.
    """
    values = np.asarray(singular_values, dtype=float)
    if values.size == 0 or values[0] <= 0:
        return 0
    relative = values / values[0]
    rank = int(np.sum(relative > tolerance))
    if np.any((relative > tolerance) & (relative <= gap_ratio * tolerance)):
        raise RankIndecisionError(relative, tolerance)
    return rank


def kernel(matrix: np.ndarray, tolerance: float = 1e-8, gap_ratio: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Rank revealing null space of a (possibly very tall) matrix.

    Tall stacks are first compressed with a QR factorization, the decision is
    then taken on the singular values of the triangular factor.

    Args:
        matrix: The matrix, shape `(rows, cols)`.
        tolerance: Relative singular value cutoff.
        gap_ratio: Width of the indecision band above the cutoff.

    Returns:
        An orthonormal basis of the kernel as columns `(cols, dim)`, and the
        singular values (padded with zeros to `cols`).
    """
    matrix = np.asarray(matrix, dtype=float)
    cols = matrix.shape[1]
    if matrix.shape[0] == 0:
        return np.eye(cols), np.zeros(cols)
    if matrix.shape[0] > cols:
        matrix = linalg.qr(matrix, mode="r", check_finite=False)[0][:cols]
    _, singular, vh = linalg.svd(matrix, full_matrices=True, check_finite=False)
    singular = np.concatenate([singular, np.zeros(cols - singular.size)])
    rank = decide_rank(singular, tolerance, gap_ratio)
    return vh[rank:].T.copy(), singular


# Symmetric matrices


@functools.lru_cache(maxsize=None)
def sym_pairs(n: int) -> tuple[tuple[int, int], ...]:
    """Index pairs `(i, j)` with `i <= j`, row major."""
    return tuple((i, j) for i in range(n) for j in range(i, n))


@functools.lru_cache(maxsize=None)
def sym_unpack_matrix(n: int) -> np.ndarray:
    """`U` with `vec(S) = U @ pack(S)` for symmetric `S`, shape `(n*n, m)`."""
    pairs = sym_pairs(n)
    u = np.zeros((n * n, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        u[i * n + j, col] = 1.0
        u[j * n + i, col] = 1.0
    return u


@functools.lru_cache(maxsize=None)
def sym_pack_matrix(n: int) -> np.ndarray:
    """`P` with `pack(S) = P @ vec(S)`, shape `(m, n*n)`."""
    pairs = sym_pairs(n)
    p = np.zeros((len(pairs), n * n))
    for row, (i, j) in enumerate(pairs):
        p[row, i * n + j] = 1.0
    return p


def sym_pack(matrix: np.ndarray) -> np.ndarray:
    rows, cols = np.triu_indices(matrix.shape[-1])
    return np.asarray(matrix)[..., rows, cols]


def sym_unpack(packed: np.ndarray, n: int) -> np.ndarray:
    packed = np.asarray(packed, dtype=float)
    out = np.zeros((*packed.shape[:-1], n, n))
    rows, cols = np.triu_indices(n)
    out[..., rows, cols] = packed
    out[..., cols, rows] = packed
    return out


# Metric helpers


def signature(matrix: np.ndarray, tolerance: float = 1e-10) -> tuple[int, int]:
    """
    Counts of positive and negative eigenvalues of a symmetric matrix.

    Eigenvalues within `tolerance * max|eigenvalue|` of zero are ignored.
    """
    eigenvalues = np.linalg.eigvalsh(np.asarray(matrix, dtype=float))
    scale = max(float(np.max(np.abs(eigenvalues))), 1e-300)
    return int(np.sum(eigenvalues > tolerance * scale)), int(np.sum(eigenvalues < -tolerance * scale))


def is_degenerate(matrix: np.ndarray, tolerance: float = 1e-12) -> tuple[bool, float]:
    """
    Degeneracy test `|det g| < tolerance * max|g_ij|^n`.

    Returns:
        The verdict and the determinant.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[-1]
    determinant = float(np.linalg.det(matrix))
    scale = float(np.max(np.abs(matrix))) ** n
    return abs(determinant) < tolerance * max(scale, 1e-300), determinant


def sample_box(
    box: t.Sequence[tuple[float, float]],
    count: int,
    seed: int,
    *,
    accept: t.Callable[[np.ndarray], bool] | None = None,
    max_attempts: int = 100,
) -> np.ndarray:
    """
    Draw seeded uniform points from a box, rejecting those `accept` refuses.

    Raises:
        ValueError: If too many points are rejected.
    """
    rng = np.random.default_rng(seed)
    lows = np.asarray([lo for lo, _ in box], dtype=float)
    highs = np.asarray([hi for _, hi in box], dtype=float)
    points: list[np.ndarray] = []
    attempts = 0
    while len(points) < count:
        attempts += 1
        if attempts > max_attempts * max(count, 1):
            raise ValueError(f"Could only draw {len(points)} of {count} acceptable points from the sample box")
        point = lows + (highs - lows) * rng.random(lows.size)
        if accept is None or accept(point):
            points.append(point)
    return np.asarray(points).reshape(count, lows.size)


def relative_residual(value: np.ndarray | float, scale: np.ndarray | float) -> float:
    """max|value| relative to max(1, max|scale|)."""
    return float(np.max(np.abs(value), initial=0.0)) / max(1.0, float(np.max(np.abs(scale), initial=0.0)))
