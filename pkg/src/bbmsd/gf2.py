"""Dense GF(2) linear algebra on int-packed rows.

Row ``i`` of a :class:`BitMatrix` is a Python int whose bit ``j`` is the
entry in column ``j``. Python ints are word-packed internally, so XOR of two
rows is a word-parallel operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def popcount(x: int) -> int:
    return x.bit_count()


def parity(x: int) -> int:
    return x.bit_count() & 1


@dataclass(frozen=True)
class BitVector:
    length: int
    bits: int = 0

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("negative length")
        if self.bits >> self.length:
            raise ValueError("bits set beyond vector length")

    @classmethod
    def from_list(cls, values: Iterable[int]) -> "BitVector":
        values = list(values)
        bits = 0
        for j, v in enumerate(values):
            if v & 1:
                bits |= 1 << j
        return cls(len(values), bits)

    @classmethod
    def from_support(cls, length: int, support: Iterable[int]) -> "BitVector":
        bits = 0
        for j in support:
            if not 0 <= j < length:
                raise IndexError(j)
            bits ^= 1 << j
        return cls(length, bits)

    def __getitem__(self, j: int) -> int:
        if not 0 <= j < self.length:
            raise IndexError(j)
        return (self.bits >> j) & 1

    def __len__(self) -> int:
        return self.length

    def weight(self) -> int:
        return self.bits.bit_count()

    def support(self) -> list[int]:
        return [j for j in range(self.length) if (self.bits >> j) & 1]

    def to_list(self) -> list[int]:
        return [(self.bits >> j) & 1 for j in range(self.length)]

    def __xor__(self, other: "BitVector") -> "BitVector":
        if other.length != self.length:
            raise ValueError("length mismatch")
        return BitVector(self.length, self.bits ^ other.bits)

    def __and__(self, other: "BitVector") -> "BitVector":
        if other.length != self.length:
            raise ValueError("length mismatch")
        return BitVector(self.length, self.bits & other.bits)

    def dot(self, other: "BitVector") -> int:
        if other.length != self.length:
            raise ValueError("length mismatch")
        return parity(self.bits & other.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.to_list())


class BitMatrix:
    """Immutable binary matrix with int-packed rows."""

    __slots__ = ("_rows", "_ncols")

    def __init__(self, rows: Sequence[int], ncols: int):
        mask = ~((1 << ncols) - 1)
        rows = tuple(int(r) for r in rows)
        for r in rows:
            if r < 0 or r & mask:
                raise ValueError("row has bits beyond column count")
        self._rows = rows
        self._ncols = ncols

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> "BitMatrix":
        return cls([0] * nrows, ncols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls([1 << i for i in range(n)], n)

    @classmethod
    def from_array(cls, arr) -> "BitMatrix":
        arr = np.asarray(arr, dtype=np.uint8) & 1
        if arr.ndim != 2:
            raise ValueError("expected a 2D array")
        weights = 1 << np.arange(arr.shape[1], dtype=object)
        rows = [int(np.dot(row.astype(object), weights)) if arr.shape[1] else 0 for row in arr]
        return cls(rows, arr.shape[1])

    @classmethod
    def from_vectors(cls, vectors: Sequence[BitVector], ncols: int | None = None) -> "BitMatrix":
        if ncols is None:
            if not vectors:
                raise ValueError("column count needed for an empty vector list")
            ncols = vectors[0].length
        for v in vectors:
            if v.length != ncols:
                raise ValueError("inconsistent vector lengths")
        return cls([v.bits for v in vectors], ncols)

    # access -----------------------------------------------------------
    @property
    def nrows(self) -> int:
        return len(self._rows)

    @property
    def ncols(self) -> int:
        return self._ncols

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self._rows), self._ncols)

    @property
    def rows(self) -> tuple[int, ...]:
        return self._rows

    def row(self, i: int) -> BitVector:
        return BitVector(self._ncols, self._rows[i])

    def __getitem__(self, ij: tuple[int, int]) -> int:
        i, j = ij
        if not (0 <= i < self.nrows and 0 <= j < self._ncols):
            raise IndexError(ij)
        return (self._rows[i] >> j) & 1

    def column(self, j: int) -> BitVector:
        if not 0 <= j < self._ncols:
            raise IndexError(j)
        bits = 0
        for i, r in enumerate(self._rows):
            if (r >> j) & 1:
                bits |= 1 << i
        return BitVector(self.nrows, bits)

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.uint8)
        for i, r in enumerate(self._rows):
            for j in range(self._ncols):
                if (r >> j) & 1:
                    out[i, j] = 1
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMatrix) and self._ncols == other._ncols and self._rows == other._rows

    def __hash__(self) -> int:
        return hash((self._rows, self._ncols))

    def __repr__(self) -> str:
        return f"BitMatrix({self.nrows}x{self.ncols})"

    def __str__(self) -> str:
        return "\n".join(str(self.row(i)) for i in range(self.nrows))

    # algebra ----------------------------------------------------------
    def transpose(self) -> "BitMatrix":
        cols = [0] * self._ncols
        for i, r in enumerate(self._rows):
            while r:
                low = r & -r
                j = low.bit_length() - 1
                cols[j] |= 1 << i
                r ^= low
        return BitMatrix(cols, self.nrows)

    @property
    def T(self) -> "BitMatrix":
        return self.transpose()

    def __matmul__(self, other):
        if isinstance(other, BitVector):
            return matvec(self, other)
        if not isinstance(other, BitMatrix):
            return NotImplemented
        if self._ncols != other.nrows:
            raise ValueError(f"dimension mismatch {self.shape} @ {other.shape}")
        out = []
        orows = other.rows
        for r in self._rows:
            acc = 0
            while r:
                low = r & -r
                acc ^= orows[low.bit_length() - 1]
                r ^= low
            out.append(acc)
        return BitMatrix(out, other.ncols)

    def __add__(self, other: "BitMatrix") -> "BitMatrix":
        if self.shape != other.shape:
            raise ValueError("shape mismatch")
        return BitMatrix([a ^ b for a, b in zip(self._rows, other._rows)], self._ncols)

    def hstack(self, other: "BitMatrix") -> "BitMatrix":
        if self.nrows != other.nrows:
            raise ValueError("row count mismatch")
        return BitMatrix([a | (b << self._ncols) for a, b in zip(self._rows, other._rows)],
                         self._ncols + other._ncols)

    def vstack(self, other: "BitMatrix") -> "BitMatrix":
        if self._ncols != other._ncols:
            raise ValueError("column count mismatch")
        return BitMatrix(self._rows + other._rows, self._ncols)

    def is_zero(self) -> bool:
        return not any(self._rows)

    def rank(self) -> int:
        return rank(self)


def matvec(M: BitMatrix, v: BitVector) -> BitVector:
    if v.length != M.ncols:
        raise ValueError(f"dimension mismatch: matrix has {M.ncols} columns, vector length {v.length}")
    bits = 0
    for i, r in enumerate(M.rows):
        if parity(r & v.bits):
            bits |= 1 << i
    return BitVector(M.nrows, bits)


def row_reduce(rows: Sequence[int], ncols: int) -> tuple[list[int], list[int]]:
    """Reduced row echelon form; pivots are taken lowest column first.

    Returns ``(reduced_rows, pivot_columns)`` with zero rows dropped.
    """
    work = list(rows)
    pivots: list[int] = []
    r = 0
    for col in range(ncols):
        bit = 1 << col
        p = next((i for i in range(r, len(work)) if work[i] & bit), None)
        if p is None:
            continue
        work[r], work[p] = work[p], work[r]
        prow = work[r]
        for i in range(len(work)):
            if i != r and work[i] & bit:
                work[i] ^= prow
        pivots.append(col)
        r += 1
        if r == len(work):
            break
    return work[:r], pivots


def rank(M: BitMatrix) -> int:
    return len(row_reduce(M.rows, M.ncols)[1])


def rank_rows(rows: Sequence[int], ncols: int) -> int:
    return len(row_reduce(rows, ncols)[1])


def kernel_basis(M: BitMatrix) -> list[BitVector]:
    """Basis of {v : M v = 0}, one vector per free column."""
    reduced, pivots = row_reduce(M.rows, M.ncols)
    pivot_set = set(pivots)
    basis = []
    for free in range(M.ncols):
        if free in pivot_set:
            continue
        v = 1 << free
        for row, pc in zip(reduced, pivots):
            if (row >> free) & 1:
                v |= 1 << pc
        basis.append(BitVector(M.ncols, v))
    return basis


class Reducer:
    """Incremental echelon basis supporting membership and coordinate queries.

    Each stored row carries a tag recording which inserted vectors it is the
    sum of, so :meth:`express` returns the combination that produces a vector.
    """

    def __init__(self, ncols: int):
        self.ncols = ncols
        self._pivot_rows: dict[int, tuple[int, int]] = {}
        self._count = 0

    def __len__(self) -> int:
        return len(self._pivot_rows)

    def _reduce(self, v: int) -> tuple[int, int]:
        tag = 0
        while v:
            top = v.bit_length() - 1
            entry = self._pivot_rows.get(top)
            if entry is None:
                break
            v ^= entry[0]
            tag ^= entry[1]
        return v, tag

    def add(self, v: int) -> bool:
        """Insert ``v``; returns False if it was already in the span."""
        idx = self._count
        self._count += 1
        rem, tag = self._reduce(v)
        if rem == 0:
            return False
        self._pivot_rows[rem.bit_length() - 1] = (rem, tag ^ (1 << idx))
        return True

    def contains(self, v: int) -> bool:
        return self._reduce(v)[0] == 0

    def residue(self, v: int) -> int:
        return self._reduce(v)[0]

    def express(self, v: int) -> int | None:
        """Bitmask of inserted vectors summing to ``v``, or None."""
        rem, tag = self._reduce(v)
        return tag if rem == 0 else None


def in_rowspan(v: int, rows: Sequence[int]) -> bool:
    red = Reducer(0)
    for r in rows:
        red.add(r)
    return red.contains(v)


def solve(M: BitMatrix, b: BitVector) -> BitVector | None:
    """Some x with M x = b, or None if inconsistent."""
    Mt = M.transpose()
    red = Reducer(M.nrows)
    for c in Mt.rows:
        red.add(c)
    tag = red.express(b.bits)
    if tag is None:
        return None
    return BitVector(M.ncols, tag)


def inverse(M: BitMatrix) -> BitMatrix:
    n = M.nrows
    if M.ncols != n:
        raise ValueError("matrix is not square")
    aug = [r | (1 << (n + i)) for i, r in enumerate(M.rows)]
    reduced, pivots = row_reduce(aug, 2 * n)
    if pivots[:n] != list(range(n)) or len(reduced) < n:
        raise ValueError("matrix is singular")
    return BitMatrix([r >> n for r in reduced[:n]], n)
