import numpy as np
import pytest

from conemob import corpus
from conemob.canonical import (
    Block,
    block_signature,
    canonical_matrices,
    canonical_pair_form,
    check_self_adjoint,
    jordan_structure,
    nontrivial_block_count,
    random_blocks,
    random_pair,
)
from conemob.error import ClusteringIndecisionError
from conemob.util import signature


def _key(block: Block) -> tuple[float, float, int, int]:
    return round(block.real, 6), round(block.imag, 6), block.size, block.sign or 0


def test_jordan_structure_of_a_diagonal_matrix() -> None:
    structures = jordan_structure(np.diag([1.0, 2.0, 1.0]))
    assert [(s.real, s.algebraic, s.geometric, s.partition) for s in structures] == [
        (pytest.approx(1.0), 2, 2, [1, 1]),
        (pytest.approx(2.0), 1, 1, [1]),
    ]


def test_jordan_structure_of_nilpotent_blocks() -> None:
    L = np.zeros((5, 5))
    L[0, 1] = L[1, 2] = 1.0
    L[3, 4] = 1.0
    (structure,) = jordan_structure(L)
    assert structure.real == pytest.approx(0.0)
    assert structure.algebraic == 5
    assert structure.geometric == 2
    assert structure.partition == [3, 2]


def test_jordan_structure_of_a_rotation() -> None:
    (structure,) = jordan_structure(np.array([[1.0, 2.0], [-2.0, 1.0]]))
    assert structure.is_complex
    assert structure.real == pytest.approx(1.0)
    assert structure.imag == pytest.approx(2.0)
    assert structure.partition == [1]


def test_jordan_structure_of_example2() -> None:
    entry = corpus.get("example2")
    assert entry.endomorphism is not None and entry.point is not None
    (structure,) = jordan_structure(entry.endomorphism.value(entry.point))
    assert structure.partition == [2, 2, 2]


def test_ambiguous_eigenvalues_raise() -> None:
    with pytest.raises(ClusteringIndecisionError):
        jordan_structure(np.diag([1.0, 1.0 + 5e-7]))


@pytest.mark.parametrize("p, q", [(0, 4), (1, 3), (2, 2), (3, 2)])
def test_canonical_form_of_random_pairs(p: int, q: int) -> None:
    rng = np.random.default_rng(p * 10 + q)
    for _ in range(20):
        G, L, blocks = random_pair(rng, p, q)
        assert check_self_adjoint(G, L)
        result = canonical_pair_form(G, L)
        assert result.residual_G < 1e-8
        assert result.residual_L < 1e-8
        assert sorted(map(_key, result.blocks)) == sorted(map(_key, blocks))
        assert result.signature == signature(G) == (p, q)


def test_canonical_form_recovers_the_matrices() -> None:
    blocks = [Block(real=1.0, size=2, sign=-1), Block(real=0.0, imag=1.0, size=1)]
    G, L = canonical_matrices(blocks)
    result = canonical_pair_form(G, L)
    G_c, L_c = canonical_matrices(result.blocks)
    assert np.allclose(result.P.T @ G @ result.P, G_c)
    assert np.allclose(np.linalg.solve(result.P, L @ result.P), L_c)


def test_canonical_displays() -> None:
    G8, L8 = canonical_matrices([Block(real=0.0, imag=1.0, size=1)] * 2)
    assert np.array_equal(L8, [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]])
    assert np.array_equal(G8, [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    G9, L9 = canonical_matrices([Block(real=0.0, imag=1.0, size=2)])
    assert np.array_equal(L9, [[0, 1, 1, 0], [-1, 0, 0, 1], [0, 0, 0, 1], [0, 0, -1, 0]])
    assert np.array_equal(G9, np.fliplr(np.eye(4)))
    assert [b.size for b in canonical_pair_form(G9, L9).blocks] == [2]


@pytest.mark.parametrize(
    "G, L",
    [
        pytest.param(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]), id="not_self_adjoint"),
        pytest.param(np.diag([1.0, 0.0]), np.eye(2), id="degenerate"),
        pytest.param(np.eye(2), np.eye(3), id="shape_mismatch"),
    ],
)
def test_canonical_form_rejects(G: np.ndarray, L: np.ndarray) -> None:
    with pytest.raises(ValueError):
        canonical_pair_form(G, L)


@pytest.mark.parametrize(
    "block, expected",
    [
        pytest.param(Block(real=0.0, size=3, sign=1), (2, 1), id="odd_positive"),
        pytest.param(Block(real=0.0, size=3, sign=-1), (1, 2), id="odd_negative"),
        pytest.param(Block(real=2.0, size=2, sign=-1), (1, 1), id="even"),
        pytest.param(Block(real=0.0, imag=1.0, size=2), (2, 2), id="complex"),
    ],
)
def test_block_signature(block: Block, expected: tuple[int, int]) -> None:
    assert block_signature(block) == expected
    G, _ = canonical_matrices([block])
    assert signature(G) == expected


def test_random_blocks_have_the_requested_signature() -> None:
    rng = np.random.default_rng(3)
    for p, q in [(1, 3), (2, 2), (4, 0)]:
        blocks = random_blocks(rng, p, q)
        assert sum(block.dim for block in blocks) == p + q
        assert tuple(map(sum, zip(*map(block_signature, blocks)))) == (p, q)


def test_nontrivial_block_count() -> None:
    blocks = [
        Block(real=0.0, size=2, sign=1),
        Block(real=1.0, size=1, sign=1),
        Block(real=0.0, imag=1.0, size=2),
        Block(real=3.0, size=3, sign=-1),
    ]
    assert nontrivial_block_count(blocks) == 2
