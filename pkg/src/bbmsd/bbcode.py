"""Bivariate bicycle codes, their shift automorphisms and LPU-native measurements."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gf2
from .gf2 import BitMatrix, Reducer
from .pauli import Pauli, apply_linear


class CodeError(ValueError):
    pass


Monomial = tuple[int, int]


@dataclass(frozen=True)
class BBCodeSpec:
    ell: int
    em: int
    a_terms: tuple[Monomial, ...]
    b_terms: tuple[Monomial, ...]
    lpu_qubits: int = 0
    name: str = ""
    generators: tuple[Monomial, ...] | None = None
    pivot: int = 0
    dual: int | None = None
    # "auto": derive two automorphism-equivariant blocks; "none": no blocks;
    # or an explicit pair of index tuples.
    blocks: str | tuple[tuple[int, ...], tuple[int, ...]] = "auto"

    def __post_init__(self):
        if self.ell < 1 or self.em < 1:
            raise CodeError("ell and em must be positive")
        for label, terms in (("a_terms", self.a_terms), ("b_terms", self.b_terms)):
            if len(terms) != 3:
                raise CodeError(f"{label} needs exactly 3 monomials")
        reduce = lambda ts: tuple((i % self.ell, j % self.em) for i, j in ts)
        object.__setattr__(self, "a_terms", reduce(self.a_terms))
        object.__setattr__(self, "b_terms", reduce(self.b_terms))
        if self.generators is not None:
            object.__setattr__(self, "generators", reduce(self.generators))

    @property
    def n(self) -> int:
        return 2 * self.ell * self.em


PRESETS = {
    "gross": BBCodeSpec(12, 6, ((3, 0), (0, 1), (0, 2)), ((0, 3), (1, 0), (2, 0)), lpu_qubits=90, name="gross"),
    "two-gross": BBCodeSpec(12, 12, ((3, 0), (0, 2), (0, 7)), ((0, 3), (1, 0), (2, 0)), lpu_qubits=158, name="two-gross"),
}


def preset(name: str) -> BBCodeSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise CodeError(f"unknown code preset {name!r}; choose from {sorted(PRESETS)}") from None


def _parse_terms(text: str) -> tuple[Monomial, ...]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        a, b = (int(s) for s in part.split(","))
        out.append((a, b))
    return tuple(out)


def parse_code_spec(text: str) -> BBCodeSpec:
    """Parse the ``key = value`` code spec format.

    Keys: ell, em, a_terms, b_terms, lpu_qubits, name, generators, pivot,
    dual, blocks. Monomial lists are written ``a,b; a,b; a,b``; blocks are
    ``auto``, ``none`` or ``0 1 2 3 4 5 | 6 7 8 9 10 11``.
    """
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CodeError(f"malformed line {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        fields[key] = value
    missing = {"ell", "em", "a_terms", "b_terms"} - set(fields)
    if missing:
        raise CodeError(f"code spec missing {sorted(missing)}")
    kw: dict = {}
    if "generators" in fields and fields["generators"] != "auto":
        kw["generators"] = _parse_terms(fields["generators"])
    if "blocks" in fields:
        b = fields["blocks"]
        if b in ("auto", "none"):
            kw["blocks"] = b
        else:
            left, right = b.split("|")
            kw["blocks"] = (tuple(int(s) for s in left.split()), tuple(int(s) for s in right.split()))
    if "dual" in fields:
        kw["dual"] = int(fields["dual"])
    return BBCodeSpec(
        ell=int(fields["ell"]),
        em=int(fields["em"]),
        a_terms=_parse_terms(fields["a_terms"]),
        b_terms=_parse_terms(fields["b_terms"]),
        lpu_qubits=int(fields.get("lpu_qubits", 0)),
        name=fields.get("name", ""),
        pivot=int(fields.get("pivot", 0)),
        **kw,
    )


def load_code_spec(path_or_preset) -> BBCodeSpec:
    if isinstance(path_or_preset, BBCodeSpec):
        return path_or_preset
    if str(path_or_preset) in PRESETS:
        return PRESETS[str(path_or_preset)]
    return parse_code_spec(Path(path_or_preset).read_text())


# construction --------------------------------------------------------------

def monomial_matrix(ell: int, em: int, a: int, b: int) -> np.ndarray:
    """Permutation matrix of x^a y^b with x = S_ell (x) I_em, y = I_ell (x) S_em."""
    sx = np.roll(np.eye(ell, dtype=np.uint8), a, axis=1)
    sy = np.roll(np.eye(em, dtype=np.uint8), b, axis=1)
    return np.kron(sx, sy)


def shift_permutation(ell: int, em: int, a: int, b: int) -> np.ndarray:
    """Data-qubit permutation of x^a y^b: qubit q moves to ``perm[q]``."""
    i, j = np.divmod(np.arange(ell * em), em)
    half = ((i + a) % ell) * em + (j + b) % em
    return np.concatenate([half, half + ell * em])


def _to_bits(v: int, n: int) -> np.ndarray:
    return np.array([(v >> q) & 1 for q in range(n)], dtype=np.uint8)


def _from_bits(arr: np.ndarray) -> int:
    out = 0
    for q in np.flatnonzero(arr):
        out |= 1 << int(q)
    return out


def _permute(v: int, perm: np.ndarray, n: int) -> int:
    bits = _to_bits(v, n)
    out = np.zeros(n, dtype=np.uint8)
    out[perm] = bits
    return _from_bits(out)


@dataclass(frozen=True)
class ShiftAutomorphism:
    """One logical action of the shift group.

    ``z_images[j]`` (``x_images[j]``) is the coordinate bitmask of the image
    of logical Z_j (X_j).
    """

    shift: Monomial
    physical_shifts: tuple[Monomial, ...]
    z_images: tuple[int, ...]
    x_images: tuple[int, ...]
    generator_word: tuple[int, ...] = ()

    @property
    def generator_cost(self) -> int:
        return len(self.generator_word)

    def act(self, p: Pauli) -> Pauli:
        return Pauli(apply_linear(self.x_images, p.x), apply_linear(self.z_images, p.z))

    @property
    def key(self) -> tuple:
        return (self.z_images, self.x_images)

    def is_identity(self) -> bool:
        return all(img == 1 << j for j, img in enumerate(self.z_images))


@dataclass
class BBCode:
    spec: BBCodeSpec
    hx: BitMatrix
    hz: BitMatrix
    logical_x: list[int]
    logical_z: list[int]
    pivot: int
    dual: int | None
    blocks: tuple[tuple[int, ...], tuple[int, ...]] | None
    automorphisms: list[ShiftAutomorphism] = field(default_factory=list)
    generators: tuple[Monomial, ...] = ()

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def k(self) -> int:
        return len(self.logical_x)

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def physical_qubits(self) -> int:
        return 2 * self.n + self.spec.lpu_qubits

    @property
    def usable_logicals(self) -> list[int]:
        return [q for q in range(self.k) if q != self.pivot]

    def symplectic_pairing(self) -> np.ndarray:
        return np.array([[(x & z).bit_count() & 1 for z in self.logical_z] for x in self.logical_x], dtype=np.uint8)

    @cached_property
    def native_set(self) -> "NativeSet":
        return native_set(self)

    @cached_property
    def shift_count(self) -> int:
        return self.spec.ell * self.spec.em

    def automorphism_by_shift(self, shift: Monomial) -> ShiftAutomorphism:
        shift = (shift[0] % self.spec.ell, shift[1] % self.spec.em)
        for g in self.automorphisms:
            if shift in g.physical_shifts:
                return g
        raise KeyError(shift)

    def retarget_cost(self, g_from: ShiftAutomorphism, g_to: ShiftAutomorphism) -> int:
        """Generator applications needed to move the measurement frame."""
        a = (g_to.shift[0] - g_from.shift[0], g_to.shift[1] - g_from.shift[1])
        return self.automorphism_by_shift(a).generator_cost


def default_generators(spec: BBCodeSpec) -> tuple[Monomial, ...]:
    """Shifts A_i A_j^-1 and B_i B_j^-1 for i != j.

    These move a data qubit along two edges of the Tanner graph through one
    check qubit, so each is one round of the syndrome-circuit connectivity.
    """
    gens = []
    for terms in (spec.a_terms, spec.b_terms):
        for s, t in itertools.permutations(terms, 2):
            g = ((s[0] - t[0]) % spec.ell, (s[1] - t[1]) % spec.em)
            if g not in gens and g != (0, 0):
                gens.append(g)
    return tuple(gens)


def _symplectic_basis(hx: BitMatrix, hz: BitMatrix, n: int) -> tuple[list[int], list[int]]:
    def candidates(kernel_of: BitMatrix, stabilizers: BitMatrix) -> list[int]:
        red = Reducer(n)
        for r in stabilizers.rows:
            red.add(r)
        out = []
        for v in gf2.kernel_basis(kernel_of):
            if red.add(v.bits):
                out.append(v.bits)
        return out

    xs = candidates(hz, hx)
    zs = candidates(hx, hz)
    k = len(xs)
    if len(zs) != k:
        raise CodeError("X and Z logical counts differ")
    if k == 0:
        return [], []
    pairing = BitMatrix([sum(((x & z).bit_count() & 1) << j for j, z in enumerate(zs)) for x in xs], k)
    zmat = gf2.inverse(pairing).transpose() @ BitMatrix(zs, n)
    return xs, list(zmat.rows)


def _change_basis(logical_x, logical_z, zbasis: Sequence[int], n: int):
    """New symplectic basis whose Z operators have coordinates ``zbasis``."""
    k = len(logical_z)
    B = BitMatrix(list(zbasis), k)
    new_z = (B @ BitMatrix(logical_z, n)).rows
    new_x = (gf2.inverse(B).transpose() @ BitMatrix(logical_x, n)).rows
    return list(new_x), list(new_z)


def _logical_actions(spec, logical_x, logical_z, hx, hz):
    """Map each physical shift to its (z_images, x_images) coordinate action."""
    n, k = spec.n, len(logical_x)
    stab_x, stab_z = Reducer(n), Reducer(n)
    for r in hx.rows:
        stab_x.add(r)
    for r in hz.rows:
        stab_z.add(r)
    actions = {}
    for a in range(spec.ell):
        for b in range(spec.em):
            perm = shift_permutation(spec.ell, spec.em, a, b)
            z_img, x_img = [], []
            for zj in logical_z:
                pz = _permute(zj, perm, n)
                coords = sum(((pz & x).bit_count() & 1) << i for i, x in enumerate(logical_x))
                rebuilt = 0
                for i in range(k):
                    if (coords >> i) & 1:
                        rebuilt ^= logical_z[i]
                if not stab_z.contains(pz ^ rebuilt):
                    raise CodeError(f"shift {(a, b)} image of a Z logical is not expressible in the basis")
                z_img.append(coords)
            for xj in logical_x:
                px = _permute(xj, perm, n)
                coords = sum(((px & z).bit_count() & 1) << i for i, z in enumerate(logical_z))
                rebuilt = 0
                for i in range(k):
                    if (coords >> i) & 1:
                        rebuilt ^= logical_x[i]
                if not stab_x.contains(px ^ rebuilt):
                    raise CodeError(f"shift {(a, b)} image of an X logical is not expressible in the basis")
                x_img.append(coords)
            actions[(a, b)] = (tuple(z_img), tuple(x_img))
    return actions


def _bfs_costs(spec, actions, generators):
    """Minimal generator words per logical action, searched over physical shifts."""
    start = (0, 0)
    words = {start: ()}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for gi, g in enumerate(generators):
            t = ((s[0] + g[0]) % spec.ell, (s[1] + g[1]) % spec.em)
            if t not in words:
                words[t] = words[s] + (gi,)
                queue.append(t)
    best: dict[tuple, tuple[Monomial, tuple[int, ...]]] = {}
    for shift in sorted(actions):
        key = actions[shift]
        w = words.get(shift)
        if w is None:
            continue
        if key not in best or len(w) < len(best[key][1]):
            best[key] = (shift, w)
    return best


def _orbit_block_basis(actions, order, k):
    """Z-coordinate basis (b1 + b2) with identical action on two halves, or None.

    b1 is spanned by automorphism images of Z_0; b2 repeats the same
    automorphisms on a second generator chosen as the smallest coordinate
    vector for which the action on both halves is identical.
    """
    if k % 2:
        return None
    half = k // 2

    def orbit_basis(z):
        red = Reducer(k)
        vecs, used = [], []
        for key in order:
            v = apply_linear(key[0], z)
            if red.add(v):
                vecs.append(v)
                used.append(key)
        return vecs, used

    b1, used = orbit_basis(1)
    if len(b1) != half:
        return None
    for zd in range(2, 1 << k):
        b2 = [apply_linear(key[0], zd) for key in used]
        if gf2.rank_rows(b1 + b2, k) != k:
            continue
        basis = b1 + b2
        red = Reducer(k)
        for v in basis:
            red.add(v)
        ok = True
        for key in order:
            for j in range(half):
                c1 = red.express(apply_linear(key[0], basis[j]))
                c2 = red.express(apply_linear(key[0], basis[half + j]))
                if c1 >> half or c2 != (c1 << half):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return basis
    return None


def build_code(spec: BBCodeSpec) -> BBCode:
    ell, em = spec.ell, spec.em
    A = sum(monomial_matrix(ell, em, *t) for t in spec.a_terms) % 2
    B = sum(monomial_matrix(ell, em, *t) for t in spec.b_terms) % 2
    hx = BitMatrix.from_array(np.hstack([A, B]))
    hz = BitMatrix.from_array(np.hstack([B.T, A.T]))
    assert (hx @ hz.transpose()).is_zero(), "X and Z checks do not commute"
    n = spec.n
    logical_x, logical_z = _symplectic_basis(hx, hz, n)
    k = len(logical_x)
    if k == 0:
        raise CodeError("code encodes no logical qubits")
    generators = spec.generators if spec.generators is not None else default_generators(spec)

    actions = _logical_actions(spec, logical_x, logical_z, hx, hz)
    blocks = None
    if spec.blocks == "auto":
        best = _bfs_costs(spec, actions, generators)
        order = sorted(best, key=lambda key: (len(best[key][1]), best[key][0]))
        zbasis = _orbit_block_basis(actions, order, k)
        if zbasis is not None:
            logical_x, logical_z = _change_basis(logical_x, logical_z, zbasis, n)
            actions = _logical_actions(spec, logical_x, logical_z, hx, hz)
            blocks = (tuple(range(k // 2)), tuple(range(k // 2, k)))
    elif spec.blocks != "none":
        blocks = tuple(tuple(b) for b in spec.blocks)

    dual = spec.dual
    if dual is None and blocks is not None:
        dual = blocks[1][blocks[0].index(spec.pivot)] if spec.pivot in blocks[0] else None
    if not 0 <= spec.pivot < k:
        raise CodeError(f"pivot {spec.pivot} out of range for k={k}")

    best = _bfs_costs(spec, actions, generators)
    grouped: dict[tuple, list[Monomial]] = {}
    for shift, key in actions.items():
        grouped.setdefault(key, []).append(shift)
    autos = []
    for key, shifts in grouped.items():
        if key not in best:
            continue  # unreachable from the generator set
        shift, word = best[key]
        autos.append(ShiftAutomorphism(shift, tuple(sorted(shifts)), key[0], key[1], word))
    autos.sort(key=lambda g: (g.generator_cost, g.shift))
    return BBCode(spec, hx, hz, logical_x, logical_z, spec.pivot, dual, blocks, autos, tuple(generators))


# native measurements -------------------------------------------------------

@dataclass(frozen=True)
class NativeMeasurement:
    pauli: Pauli
    frame: ShiftAutomorphism
    base: Pauli

    @property
    def basis_class(self) -> str:
        return self.pauli.basis_class

    @property
    def generator_cost(self) -> int:
        return self.frame.generator_cost


def lpu_base_products(pivot: int, dual: int | None) -> list[Pauli]:
    """The 15 nontrivial products of X/Z on the pivot and its dual."""
    out = []
    if dual is None:
        for x, z in ((1, 0), (0, 1), (1, 1)):
            out.append(Pauli(x << pivot, z << pivot))
        return out
    for xp, zp, xd, zd in itertools.product((0, 1), repeat=4):
        p = Pauli((xp << pivot) | (xd << dual), (zp << pivot) | (zd << dual))
        if not p.is_identity():
            out.append(p)
    return out


class NativeSet:
    """All Paulis measurable with one frame change and one LPU measurement."""

    def __init__(self, code: BBCode):
        self.code = code
        self.k = code.k
        self.recipes: dict[Pauli, NativeMeasurement] = {}
        self.raw_count = 0
        for g in code.automorphisms:
            for base in lpu_base_products(code.pivot, code.dual):
                self.raw_count += 1
                p = g.act(base)
                old = self.recipes.get(p)
                if old is None or g.generator_cost < old.generator_cost:
                    self.recipes[p] = NativeMeasurement(p, g, base)
        self._z_type = [p for p in self.recipes if p.x == 0]

    def __len__(self) -> int:
        return len(self.recipes)

    def __contains__(self, p: Pauli) -> bool:
        return p in self.recipes

    def __iter__(self):
        return iter(self.recipes.values())

    def lookup(self, p: Pauli) -> NativeMeasurement | None:
        if p.is_identity():
            return None
        return self.recipes.get(p)

    def count_by_class(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for p in self.recipes:
            out[p.basis_class] = out.get(p.basis_class, 0) + 1
        return out

    def z_type(self) -> list[Pauli]:
        return list(self._z_type)


def native_set(code: BBCode) -> NativeSet:
    return NativeSet(code)


def is_native(p: Pauli, natives: NativeSet) -> NativeMeasurement | None:
    return natives.lookup(p)
