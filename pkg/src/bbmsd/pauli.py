"""Logical Pauli operators on k qubits as (x, z) bitmasks, phases dropped."""

from __future__ import annotations

from typing import NamedTuple


class Pauli(NamedTuple):
    x: int = 0
    z: int = 0

    @classmethod
    def from_label(cls, label: str) -> "Pauli":
        x = z = 0
        for i, ch in enumerate(label):
            if ch in "XY":
                x |= 1 << i
            if ch in "ZY":
                z |= 1 << i
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli character {ch!r}")
        return cls(x, z)

    @classmethod
    def Z(cls, *qubits: int) -> "Pauli":
        return cls(0, sum(1 << q for q in qubits))

    @classmethod
    def X(cls, *qubits: int) -> "Pauli":
        return cls(sum(1 << q for q in qubits), 0)

    @classmethod
    def Y(cls, *qubits: int) -> "Pauli":
        m = sum(1 << q for q in qubits)
        return cls(m, m)

    def label(self, k: int) -> str:
        out = []
        for i in range(k):
            b = ((self.x >> i) & 1, (self.z >> i) & 1)
            out.append({(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[b])
        return "".join(out)

    @property
    def support(self) -> int:
        return self.x | self.z

    def weight(self) -> int:
        return self.support.bit_count()

    def is_identity(self) -> bool:
        return not (self.x or self.z)

    @property
    def basis_class(self) -> str:
        if self.x and not self.z:
            return "pure-X"
        if self.z and not self.x:
            return "pure-Z"
        if not self.x and not self.z:
            return "identity"
        return "mixed"

    def __mul__(self, other: "Pauli") -> "Pauli":
        return Pauli(self.x ^ other.x, self.z ^ other.z)

    def commutes(self, other: "Pauli") -> bool:
        return ((self.x & other.z).bit_count() + (self.z & other.x).bit_count()) % 2 == 0

    def restrict(self, mask: int) -> "Pauli":
        return Pauli(self.x & mask, self.z & mask)


def apply_linear(images: tuple[int, ...], v: int) -> int:
    """Apply the GF(2) map sending basis vector j to ``images[j]``."""
    out = 0
    j = 0
    while v:
        if v & 1:
            out ^= images[j]
        v >>= 1
        j += 1
    return out
