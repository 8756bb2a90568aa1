"""
Normal forms of a symmetric nondegenerate form `G` together with a `G`-self-adjoint
endomorphism `L`.

In a suitable basis `G` is block diagonal with blocks `εF_m` (antidiagonal ones) and
`L` is block diagonal with Jordan blocks `J_m(ρ)` for real eigenvalues. A complex
conjugate pair `α ± iβ` with chains of length `m` gives a `2m` block where `G` is
`F_2m` and `L` has `[[α, β], [-β, α]]` on the diagonal and identities above it.
"""

from __future__ import annotations

import itertools
import typing as t

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from conemob.error import ClusteringIndecisionError, RankIndecisionError
from conemob.logging import trace_array
from conemob.util import FloatArray, signature

SELF_ADJOINT_TOLERANCE = 1e-10
CLUSTER_TOLERANCE = 1e-7
RANK_TOLERANCE = 1e-8
GAP_RATIO = 10.0


def check_self_adjoint(G: np.ndarray, L: np.ndarray) -> bool:
    """Whether `L` is self-adjoint for `G`, i.e. `G L` is symmetric."""
    product = np.asarray(G, dtype=float) @ np.asarray(L, dtype=float)
    scale = float(np.linalg.norm(product))
    if scale == 0.0:
        return True
    return bool(np.linalg.norm(product - product.T) < SELF_ADJOINT_TOLERANCE * scale)


# Eigenvalue clustering


def _cluster_tolerance(size: int, n: int, tolerance: float) -> float:
    # A defective eigenvalue of multiplicity s splits like eps^(1/s).
    return max(tolerance, 10.0 * (n * np.finfo(float).eps) ** (1.0 / size))


def _gap(first: list[complex], second: list[complex]) -> float:
    return min(abs(x - y) for x in first for y in second)


def _components(values: list[complex], threshold: float) -> list[list[complex]]:
    groups = [[value] for value in values]
    merged = True
    while merged:
        merged = False
        for a, b in itertools.combinations(range(len(groups)), 2):
            if _gap(groups[a], groups[b]) <= threshold:
                groups[a] = groups[a] + groups.pop(b)
                merged = True
                break
    return groups


def _cluster(eigenvalues: np.ndarray, scale: float, tolerance: float) -> list[list[complex]]:
    """
    Single linkage clustering where the admissible distance depends on the cluster size.

    A group is split at the threshold of its own size until no group splits further.
    """
    n = len(eigenvalues)
    pending: list[list[complex]] = [[complex(value) for value in eigenvalues]]
    clusters: list[list[complex]] = []
    while pending:
        group = pending.pop()
        parts = _components(group, _cluster_tolerance(len(group), n, tolerance) * scale)
        if len(parts) == 1:
            clusters.append(group)
        else:
            pending.extend(parts)

    for first, second in itertools.combinations(clusters, 2):
        limit = _cluster_tolerance(max(len(first), len(second)), n, tolerance) * scale
        if _gap(first, second) <= GAP_RATIO * limit:
            raise ClusteringIndecisionError(eigenvalues, limit)
    return clusters


def _rank(matrix: np.ndarray, scale: float) -> int:
    singular = linalg.svdvals(matrix, check_finite=False)
    relative = singular / scale
    if np.any((relative > RANK_TOLERANCE) & (relative <= GAP_RATIO * RANK_TOLERANCE)):
        raise RankIndecisionError(relative, RANK_TOLERANCE)
    return int(np.sum(relative > RANK_TOLERANCE))


class EigenStructure(BaseModel):
    """
    Jordan structure of one real eigenvalue or one complex conjugate pair.
    """

    model_config = ConfigDict(extra="forbid")

    real: float
    imag: float = 0.0
    """Positive for a complex pair `real ± i imag`, zero for a real eigenvalue."""
    algebraic: int
    """Algebraic multiplicity (of each member of a complex pair)."""
    geometric: int
    partition: list[int]
    """Jordan block sizes, largest first."""

    @property
    def is_complex(self) -> bool:
        return self.imag != 0.0


def _partition(kernel_dims: list[int]) -> list[int]:
    # kernel_dims[k] = dim ker M^k, with kernel_dims[0] = 0
    at_least = [kernel_dims[k] - kernel_dims[k - 1] for k in range(1, len(kernel_dims))]
    sizes: list[int] = []
    for k in range(len(at_least), 0, -1):
        exact = at_least[k - 1] - (at_least[k] if k < len(at_least) else 0)
        sizes.extend([k] * exact)
    return sizes


def jordan_structure(L: np.ndarray, tolerance: float = CLUSTER_TOLERANCE) -> list[EigenStructure]:
    """
    Eigenvalues of `L` with multiplicities and Jordan block sizes.

    Block sizes come from the rank sequence of `(L - ρ)^k` (real `ρ`) or of
    `(L^2 - 2 Re ρ L + |ρ|^2)^k` (complex pairs).

    Args:
        L: A square matrix.
        tolerance: Relative eigenvalue clustering tolerance (grows for large clusters).

    Raises:
        ClusteringIndecisionError: If eigenvalues are neither clearly equal nor clearly distinct.
        RankIndecisionError: If a rank in the sequence is ambiguous.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    scale = max(float(np.linalg.norm(L, 2)), 1e-300)
    identity = np.eye(n)
    structures: list[EigenStructure] = []
    for cluster in _cluster(np.linalg.eigvals(L), scale, tolerance):
        center = complex(np.mean(cluster))
        count = len(cluster)
        limit = _cluster_tolerance(count, n, tolerance) * scale
        if abs(center.imag) <= limit:
            shifted = L - center.real * identity
            step_scale = max(float(np.linalg.norm(shifted, 2)), scale)
            dims = [0]
            power = identity
            for _ in range(count):
                power = power @ shifted
                dims.append(n - _rank(power, step_scale ** len(dims)))
            structures.append(
                EigenStructure(real=center.real, algebraic=count, geometric=dims[1], partition=_partition(dims))
            )
        elif center.imag > 0:
            quadratic = L @ L - 2 * center.real * L + abs(center) ** 2 * identity
            step_scale = max(float(np.linalg.norm(quadratic, 2)), scale**2)
            dims = [0]
            power = identity
            for k in range(1, count + 1):
                power = power @ quadratic
                dims.append((n - _rank(power, step_scale**k)) // 2)
            structures.append(
                EigenStructure(
                    real=center.real,
                    imag=center.imag,
                    algebraic=count,
                    geometric=dims[1],
                    partition=_partition(dims),
                )
            )
    structures.sort(key=lambda s: (s.real, s.imag))
    return structures


# Canonical blocks


class Block(BaseModel):
    """
    One indecomposable block of a self-adjoint pair.
    """

    model_config = ConfigDict(extra="forbid")

    real: float
    imag: float = 0.0
    size: int
    """Chain length `m` (the block has dimension `m`, or `2m` for a complex pair)."""
    sign: t.Optional[int] = None
    """`ε` for real blocks."""

    @property
    def dim(self) -> int:
        return 2 * self.size if self.imag else self.size


class PairBlocks(BaseModel):
    """
    Canonical form of `(G, L)`: `P^T G P` and `P^-1 L P` are the block matrices.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    blocks: list[Block]
    P: FloatArray
    residual_G: float
    residual_L: float
    signature: tuple[int, int]


def canonical_matrices(blocks: t.Sequence[Block]) -> tuple[np.ndarray, np.ndarray]:
    """The block diagonal `(G, L)` for a list of blocks."""
    g_parts, l_parts = [], []
    for block in blocks:
        m = block.size
        if block.imag:
            g_parts.append(np.fliplr(np.eye(2 * m)))
            rotation = np.array([[block.real, block.imag], [-block.imag, block.real]])
            l_parts.append(np.kron(np.eye(m), rotation) + np.kron(np.eye(m, k=1), np.eye(2)))
        else:
            g_parts.append((block.sign or 1) * np.fliplr(np.eye(m)))
            l_parts.append(block.real * np.eye(m) + np.eye(m, k=1))
    if not g_parts:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return linalg.block_diag(*g_parts), linalg.block_diag(*l_parts)


def block_signature(block: Block) -> tuple[int, int]:
    """Signature of the block of `G` belonging to a block."""
    if block.imag:
        return block.size, block.size
    half = block.size // 2
    if block.size % 2 == 0:
        return half, half
    return (half + 1, half) if (block.sign or 1) > 0 else (half, half + 1)


def random_blocks(rng: np.random.Generator, p: int, q: int, *, max_size: int = 3) -> list[Block]:
    """
    Random canonical blocks whose `G` has signature `(p, q)`.

    Real eigenvalues are integers in `[-2, 2]`, complex ones `α ± iβ` with
    integer `α` in `[-1, 1]` and `β` in `{1, 2}`.
    """
    n = p + q
    while True:
        blocks: list[Block] = []
        remaining = n
        while remaining > 0:
            if remaining >= 2 and rng.random() < 0.25:
                size = int(rng.integers(1, min(2, remaining // 2) + 1))
                blocks.append(Block(real=float(rng.integers(-1, 2)), imag=float(rng.integers(1, 3)), size=size))
            else:
                size = int(rng.integers(1, min(max_size, remaining) + 1))
                blocks.append(Block(real=float(rng.integers(-2, 3)), size=size, sign=int(rng.choice([-1, 1]))))
            remaining -= blocks[-1].dim
        positive = sum(block_signature(block)[0] for block in blocks)
        if positive == p:
            return blocks


def random_pair(rng: np.random.Generator, p: int, q: int) -> tuple[np.ndarray, np.ndarray, list[Block]]:
    """
    A random self-adjoint pair `(G, L)` of signature `(p, q)`, conjugated from canonical
    blocks by a well conditioned basis change.

    Returns:
        `G`, `L` and the blocks they were built from.
    """
    blocks = random_blocks(rng, p, q)
    G_c, L_c = canonical_matrices(blocks)
    n = p + q
    left, _ = np.linalg.qr(rng.standard_normal((n, n)))
    right, _ = np.linalg.qr(rng.standard_normal((n, n)))
    P = left @ np.diag(rng.uniform(0.7, 1.4, n)) @ right
    P_inv = np.linalg.inv(P)
    G = P_inv.T @ G_c @ P_inv
    return 0.5 * (G + G.T), P @ L_c @ P_inv, blocks


def _series_inverse(c: np.ndarray) -> np.ndarray:
    out = np.zeros_like(c)
    out[0] = 1 / c[0]
    for k in range(1, len(c)):
        out[k] = -np.dot(c[1 : k + 1], out[k - 1 :: -1][:k]) / c[0]
    return out


def _series_sqrt(q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(q)
    out[0] = np.sqrt(q[0])
    for k in range(1, len(q)):
        out[k] = (q[k] - np.dot(out[1:k], out[k - 1 : 0 : -1])) / (2 * out[0])
    return out


def _null(matrix: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
    if matrix.shape[0] == 0:
        return np.eye(matrix.shape[1], dtype=matrix.dtype)
    _, singular, vh = linalg.svd(matrix, check_finite=False)
    scale = singular[0] if singular.size and singular[0] > 0 else 1.0
    rank = int(np.sum(singular > tolerance * scale))
    return vh[rank:].conj().T


def _pick_vector(form: np.ndarray) -> np.ndarray:
    """A vector `x` with `|x^T form x|` large, for a nonzero symmetric bilinear form."""
    if not np.iscomplexobj(form):
        values, vectors = np.linalg.eigh(0.5 * (form + form.T))
        return vectors[:, int(np.argmax(np.abs(values)))]
    size = form.shape[0]
    candidates = [np.eye(size, dtype=complex)[i] for i in range(size)]
    candidates += [candidates[i] + candidates[j] for i, j in itertools.combinations(range(size), 2)]
    return max(candidates, key=lambda x: abs(x @ form @ x))


def _chains(
    gram: np.ndarray, nilpotent: np.ndarray, sizes: list[int], *, complex_pair: bool
) -> list[tuple[np.ndarray, int]]:
    """
    Split a nilpotent self-adjoint `N` on a space with form `gram` into normalized chains.

    Returns:
        Chains `(vectors (dim, m), ε)`, with `N e_j = e_{j-1}` and Gram matrix `ε F_m`
        (`2i F_m` for complex pairs, where `ε` is unused).
    """
    chains: list[tuple[np.ndarray, int]] = []
    basis = np.eye(gram.shape[0], dtype=gram.dtype)
    for m in sizes:
        g = basis.T @ gram @ basis
        n_restricted = basis.conj().T @ nilpotent @ basis
        x = _pick_vector(g @ np.linalg.matrix_power(n_restricted, m - 1))
        powers = [x]
        for _ in range(m - 1):
            powers.append(n_restricted @ powers[-1])
        pairing = np.array([powers[0] @ g @ powers[j] for j in range(m)])
        reversed_pairing = pairing[::-1]
        if complex_pair:
            sign = 0
            target = 2j * _series_inverse(reversed_pairing)
        else:
            sign = 1 if reversed_pairing[0].real > 0 else -1
            target = sign * _series_inverse(reversed_pairing)
        root = _series_sqrt(target)
        top = sum(root[i] * powers[i] for i in range(m))
        chain = [top]
        for _ in range(m - 1):
            chain.insert(0, n_restricted @ chain[0])
        vectors = basis @ np.stack(chain, axis=1)
        chains.append((vectors, sign))
        span = np.stack(chain, axis=1)
        complement = _null(span.T @ g)
        basis = basis @ complement
    return chains


def _generalized_eigenspace(matrix: np.ndarray, power: int, n: int) -> np.ndarray:
    basis = _null(np.linalg.matrix_power(matrix, power), 1e-7)
    if basis.shape[1] != n:
        raise RankIndecisionError(linalg.svdvals(np.linalg.matrix_power(matrix, power)), 1e-7)
    return basis


def canonical_pair_form(
    G: np.ndarray, L: np.ndarray, tolerance: float = CLUSTER_TOLERANCE
) -> PairBlocks:
    """
    Canonical block form of a self-adjoint pair.

    Args:
        G: Symmetric nondegenerate matrix.
        L: `G`-self-adjoint matrix.
        tolerance: Relative eigenvalue clustering tolerance.

    Returns:
        The blocks and the transformation `P` with its residuals.

    Raises:
        ValueError: If `L` is not self-adjoint for `G` or `G` is degenerate.
        ClusteringIndecisionError: If eigenvalue clusters are ambiguous.
    """
    G = np.asarray(G, dtype=float)
    L = np.asarray(L, dtype=float)
    n = G.shape[0]
    if G.shape != (n, n) or L.shape != (n, n):
        raise ValueError(f"Expected square matrices of equal size, got {G.shape} and {L.shape}")
    if not check_self_adjoint(G, L):
        raise ValueError("L is not self-adjoint with respect to G")
    if abs(np.linalg.det(G)) < 1e-12 * max(float(np.max(np.abs(G))), 1e-300) ** n:
        raise ValueError("G is degenerate")

    identity = np.eye(n)
    blocks: list[Block] = []
    columns: list[np.ndarray] = []
    for structure in jordan_structure(L, tolerance):
        m_max = structure.partition[0]
        if not structure.is_complex:
            space = _generalized_eigenspace(L - structure.real * identity, m_max, structure.algebraic)
            gram = space.T @ G @ space
            nilpotent = space.T @ (L - structure.real * identity) @ space
            for vectors, sign in _chains(gram, nilpotent, structure.partition, complex_pair=False):
                columns.append(space @ vectors)
                blocks.append(Block(real=structure.real, size=vectors.shape[1], sign=sign))
        else:
            rho = complex(structure.real, structure.imag)
            space = _generalized_eigenspace((L - rho * identity).astype(complex), m_max, structure.algebraic)
            gram = space.T @ G @ space
            nilpotent = space.conj().T @ (L - rho * identity) @ space
            for vectors, _ in _chains(gram, nilpotent, structure.partition, complex_pair=True):
                chain = space @ vectors
                interleaved = np.empty((n, 2 * chain.shape[1]))
                interleaved[:, 0::2] = chain.real
                interleaved[:, 1::2] = chain.imag
                columns.append(interleaved)
                blocks.append(Block(real=structure.real, imag=structure.imag, size=chain.shape[1]))

    P = np.concatenate(columns, axis=1)
    trace_array(P, "canonical basis")
    G_c, L_c = canonical_matrices(blocks)
    residual_G = float(np.linalg.norm(P.T @ G @ P - G_c) / max(1.0, np.linalg.norm(G) * np.linalg.norm(P) ** 2))
    residual_L = float(np.linalg.norm(L @ P - P @ L_c) / max(1.0, np.linalg.norm(L) * np.linalg.norm(P)))
    logger.debug(f"Canonical form with {len(blocks)} block(s), residuals {residual_G:.1e}, {residual_L:.1e}")
    return PairBlocks(blocks=blocks, P=P, residual_G=residual_G, residual_L=residual_L, signature=signature(G))


def nontrivial_block_count(blocks: t.Sequence[Block]) -> int:
    """Number of real Jordan blocks of size at least 2."""
    return sum(1 for block in blocks if not block.imag and block.size >= 2)
