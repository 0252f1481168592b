import numpy as np
import pytest

from bbmsd.gf2 import (BitMatrix, BitVector, Reducer, in_rowspan, inverse, kernel_basis, matvec, parity,
                       popcount, rank, row_reduce, solve)
from oracles import dense_rank


def random_matrix(rng, r, c, density=0.5):
    return BitMatrix.from_array((rng.random((r, c)) < density).astype(np.uint8))


def test_popcount_parity():
    assert popcount(0b10110) == 3
    assert parity(0b10110) == 1
    assert parity(0) == 0


def test_vector_roundtrip():
    v = BitVector.from_list([1, 0, 1, 1])
    assert v.to_list() == [1, 0, 1, 1]
    assert v.support() == [0, 2, 3]
    assert v.weight() == 3
    assert BitVector.from_support(4, [0, 2, 3]) == v


def test_vector_dot():
    a = BitVector.from_list([1, 1, 0, 1])
    b = BitVector.from_list([1, 0, 1, 1])
    assert a.dot(b) == 0
    assert a.dot(a) == 1


def test_array_roundtrip():
    rng = np.random.default_rng(1)
    arr = (rng.random((7, 13)) < 0.5).astype(np.uint8)
    assert np.array_equal(BitMatrix.from_array(arr).to_array(), arr)


@pytest.mark.parametrize("seed", range(10))
def test_rank_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    M = random_matrix(rng, 9, 14, 0.3)
    assert rank(M) == dense_rank(M.to_array())


@pytest.mark.parametrize("seed", range(5))
def test_matmul_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, 5, 8)
    B = random_matrix(rng, 8, 6)
    assert np.array_equal((A @ B).to_array(), (A.to_array().astype(int) @ B.to_array()) % 2)


def test_transpose_involution():
    rng = np.random.default_rng(3)
    M = random_matrix(rng, 6, 11)
    assert M.T.T == M
    assert np.array_equal(M.T.to_array(), M.to_array().T)


@pytest.mark.parametrize("seed", range(5))
def test_kernel_is_annihilated(seed):
    rng = np.random.default_rng(seed)
    M = random_matrix(rng, 6, 12)
    ker = kernel_basis(M)
    assert len(ker) == 12 - rank(M)
    for v in ker:
        assert matvec(M, v).weight() == 0


def test_solve_and_inverse():
    rng = np.random.default_rng(7)
    while True:
        M = random_matrix(rng, 8, 8)
        if rank(M) == 8:
            break
    Minv = inverse(M)
    assert M @ Minv == BitMatrix.identity(8)
    b = BitVector.from_list([1, 0, 0, 1, 1, 0, 1, 0])
    x = solve(M, b)
    assert matvec(M, x) == b


def test_reducer_and_rowspan():
    rows = [0b1100, 0b0110]
    assert in_rowspan(0b1010, rows)
    assert not in_rowspan(0b0001, rows)
    red = Reducer(4)
    assert red.add(0b1100) and red.add(0b0110)
    assert not red.add(0b1010)
    assert red.contains(0b1010)


def test_row_reduce_rank():
    rows = [0b111, 0b110, 0b001]
    reduced, _ = row_reduce(rows, 3)
    assert len([r for r in reduced if r]) == 2
