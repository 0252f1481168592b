"""Triorthogonal distillation protocols.

A protocol is a binary matrix whose rows are logical qubits and whose
columns are commuting Z-type pi/8 rotations. The first ``k`` rows are
outputs; the remaining rows are checks measured in the X basis at the end.

Two kinds are supported. ``"t"`` protocols distill |T> states: outputs have
odd weight, checks even weight, and all pairwise and triple overlaps are even.
``"ccz"`` protocols distill CCZ states: every row has even weight, and the
triple overlap of the three outputs in one CCZ group is odd.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from .gf2 import BitVector


class ProtocolError(ValueError):
    pass


SHIPPED = {
    "15-to-1": "15to1.txt",
    "20-to-4": "20to4.txt",
    "8-to-CCZ": "8toccz.txt",
    "49-to-1": "49to1.txt",
    "64-to-2CCZ": "64to2ccz.txt",
}


@dataclass(frozen=True)
class TriorthogonalMatrix:
    rows: tuple[int, ...]
    n: int
    k: int
    kind: str = "t"
    groups: tuple[tuple[int, ...], ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        if self.kind not in ("t", "ccz"):
            raise ProtocolError(f"unknown protocol kind {self.kind!r}")
        if not 0 <= self.k <= len(self.rows):
            raise ProtocolError("output count exceeds row count")
        for r in self.rows:
            if r < 0 or r >> self.n:
                raise ProtocolError("row wider than column count")
        if self.kind == "ccz" and not self.groups:
            if self.k % 3:
                raise ProtocolError("CCZ protocols need outputs in groups of three")
            object.__setattr__(self, "groups", tuple(tuple(range(i, i + 3)) for i in range(0, self.k, 3)))

    @classmethod
    def from_strings(cls, lines: Sequence[str], k: int, **kw) -> "TriorthogonalMatrix":
        lines = [s.strip() for s in lines]
        n = len(lines[0]) if lines else 0
        rows = []
        for s in lines:
            if len(s) != n or set(s) - {"0", "1"}:
                raise ProtocolError(f"malformed row {s!r}")
            rows.append(sum(1 << j for j, ch in enumerate(s) if ch == "1"))
        return cls(tuple(rows), n, k, **kw)

    @classmethod
    def from_array(cls, arr, k: int, **kw) -> "TriorthogonalMatrix":
        arr = np.asarray(arr, dtype=np.uint8)
        return cls.from_strings(["".join(str(int(b)) for b in row) for row in arr], k, **kw)

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def outputs(self) -> range:
        return range(self.k)

    @property
    def checks(self) -> range:
        return range(self.k, self.m)

    @property
    def check_mask(self) -> int:
        return ((1 << self.m) - 1) ^ ((1 << self.k) - 1)

    @property
    def output_mask(self) -> int:
        return (1 << self.k) - 1

    @property
    def row_parity(self) -> tuple[int, ...]:
        return tuple(r.bit_count() & 1 for r in self.rows)

    def row(self, i: int) -> BitVector:
        return BitVector(self.n, self.rows[i])

    def column(self, j: int) -> int:
        """Bitmask over rows of column ``j``."""
        return sum(1 << i for i, r in enumerate(self.rows) if (r >> j) & 1)

    def columns(self) -> list[int]:
        return [self.column(j) for j in range(self.n)]

    def to_array(self) -> np.ndarray:
        return np.array([[(r >> j) & 1 for j in range(self.n)] for r in self.rows], dtype=np.uint8).reshape(self.m, self.n)

    def to_strings(self) -> list[str]:
        return ["".join(str((r >> j) & 1) for j in range(self.n)) for r in self.rows]

    def with_rows(self, rows: Sequence[int]) -> "TriorthogonalMatrix":
        return TriorthogonalMatrix(tuple(rows), self.n, self.k, self.kind, self.groups, self.name)

    def permute_columns(self, order: Sequence[int]) -> "TriorthogonalMatrix":
        """New matrix whose column ``j`` is old column ``order[j]``."""
        cols = self.columns()
        new_rows = [0] * self.m
        for j, src in enumerate(order):
            c = cols[src]
            for i in range(self.m):
                if (c >> i) & 1:
                    new_rows[i] |= 1 << j
        return self.with_rows(new_rows)

    def __str__(self) -> str:
        return "\n".join(self.to_strings())


# verification --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "parity", "pair", "triple", "rank"
    rows: tuple[int, ...]
    overlap: int

    def __str__(self) -> str:
        if self.kind == "parity":
            return f"row {self.rows[0]} has weight {self.overlap} with the wrong parity"
        if self.kind == "rank":
            return "rows are linearly dependent"
        label = "pairwise" if self.kind == "pair" else "triple"
        return f"{label} overlap of rows {self.rows} is {self.overlap}"


@dataclass
class VerificationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def verify_triorthogonal(G: TriorthogonalMatrix) -> VerificationReport:
    report = VerificationReport()
    rows = G.rows
    for i, r in enumerate(rows):
        w = r.bit_count()
        want_odd = G.kind == "t" and i < G.k
        if (w & 1) != want_odd:
            report.violations.append(Violation("parity", (i,), w))
    for a, b in itertools.combinations(range(G.m), 2):
        w = (rows[a] & rows[b]).bit_count()
        if w & 1:
            report.violations.append(Violation("pair", (a, b), w))
    group_set = {frozenset(g) for g in G.groups}
    for a, b, c in itertools.combinations(range(G.m), 3):
        w = (rows[a] & rows[b] & rows[c]).bit_count()
        want = 1 if frozenset((a, b, c)) in group_set else 0
        if (w & 1) != want:
            report.violations.append(Violation("triple", (a, b, c), w))
    return report


# rotation orientation --------------------------------------------------------

def _solve_parity(equations: list[tuple[int, int]], n: int) -> int | None:
    """Solve mask . N = rhs over GF(2); free variables are zero."""
    pivots: dict[int, int] = {}
    for mask, rhs in equations:
        v = mask | (rhs << n)
        for col, row in pivots.items():
            if (v >> col) & 1:
                v ^= row
        low = v & ((1 << n) - 1)
        if not low:
            if v >> n:
                return None
            continue
        col = (low & -low).bit_length() - 1
        for c2 in list(pivots):
            if (pivots[c2] >> col) & 1:
                pivots[c2] ^= v
        pivots[col] = v
    sol = 0
    for col, row in pivots.items():
        if row >> n:
            sol |= 1 << col
    return sol


def _sign_equations(G: TriorthogonalMatrix, outputs: bool) -> list[tuple[int, int]]:
    rows = G.rows
    eqs = []
    for i in G.checks:
        eqs.append((rows[i], (rows[i].bit_count() // 2) & 1))
        for j in range(G.m):
            if j != i and (j < G.k or j > i):
                ov = rows[i] & rows[j]
                eqs.append((ov, (ov.bit_count() // 2) & 1))
    if outputs:
        for a, b in itertools.combinations(G.outputs, 2):
            ov = rows[a] & rows[b]
            eqs.append((ov, (ov.bit_count() // 2) & 1))
    return eqs


def rotation_signs(G: TriorthogonalMatrix) -> tuple[int, ...]:
    """Orientation (+1 or -1) of each column's pi/8 rotation.

    Every injection gadget can realize either orientation at the same cost.
    The orientations are chosen so that each check's signed weight and its
    signed overlaps with every other row are multiples of 4. The noiseless
    check outcomes are then deterministic and no Clifford correction is
    needed before readout. When possible the outputs are also left without
    CZ phases between them. Unconstrained columns stay positive.
    """
    for outputs in (True, False):
        eqs = _sign_equations(G, outputs)
        sol = _solve_parity(eqs, G.n)
        if sol is not None:
            return tuple(-1 if (sol >> j) & 1 else 1 for j in range(G.n))
    raise ProtocolError("no rotation orientation makes the check outcomes deterministic")


def signed_weight(row: int, signs: Sequence[int]) -> int:
    return sum(signs[j] for j in range(len(signs)) if (row >> j) & 1)


def expected_check_outcome(row: int, signs: Sequence[int]) -> int:
    """Noiseless X outcome of a check row: (-1)^(w/4) for signed weight w."""
    w = signed_weight(row, signs)
    if w % 4:
        raise ProtocolError(f"signed check weight {w} is not a multiple of 4")
    return -1 if (w // 4) % 2 else 1


# fault enumeration ---------------------------------------------------------

@dataclass
class FaultPolynomial:
    """Counts of Z-type input fault patterns by weight.

    ``counts[w] = (detected, benign, malignant)``.
    """

    n: int
    counts: dict[int, tuple[int, int, int]]
    t: int | None
    c: int

    @property
    def w_max(self) -> int:
        return max(self.counts) if self.counts else -1

    def malignant(self, w: int) -> int:
        return self.counts.get(w, (0, 0, 0))[2]

    def accept_prob(self, p: float) -> float:
        """Probability that no check fires under i.i.d. Z faults of rate p."""
        return sum((b + mal) * p**w * (1 - p) ** (self.n - w) for w, (_, b, mal) in self.counts.items())

    def output_error(self, p: float) -> float:
        """Probability of an undetected output error, conditioned on acceptance."""
        bad = sum(mal * p**w * (1 - p) ** (self.n - w) for w, (_, _, mal) in self.counts.items())
        return bad / self.accept_prob(p)

    def leading_term(self, p: float) -> float:
        return self.c * p**self.t if self.t is not None else 0.0


def _all_syndromes(cols: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    syn = np.zeros(1, dtype=np.int64)
    wt = np.zeros(1, dtype=np.int8)
    for c in cols:
        syn = np.concatenate([syn, syn ^ c])
        wt = np.concatenate([wt, wt + 1])
    return syn, wt


def _bounded_syndromes(cols: Sequence[int], w_max: int):
    """Yield (weight, syndrome array) over all column subsets of each weight."""
    n = len(cols)
    colarr = np.array(cols, dtype=np.int64)
    syn = np.zeros(1, dtype=np.int64)
    last = np.full(1, -1, dtype=np.int64)
    yield 0, syn
    for w in range(1, w_max + 1):
        reps = n - 1 - last
        new_syn = np.repeat(syn, reps)
        starts = np.repeat(last + 1, reps)
        offsets = np.arange(len(new_syn)) - np.repeat(np.cumsum(reps) - reps, reps)
        idx = starts + offsets
        syn = new_syn ^ colarr[idx]
        last = idx
        yield w, syn


def enumerate_faults(G: TriorthogonalMatrix, w_max: int | None = None) -> FaultPolynomial:
    """Classify every Z-fault pattern up to weight ``w_max``.

    A pattern is detected if it flips any check row, benign if it flips
    nothing, and malignant if it flips only output rows. The default is a
    full enumeration for n <= 24 and weight 5 beyond.
    """
    if w_max is None:
        w_max = G.n if G.n <= 24 else 5
    if w_max > G.n or w_max < 0:
        raise ProtocolError(f"w_max={w_max} outside [0, {G.n}]")
    cols = G.columns()
    cmask = G.check_mask
    counts: dict[int, tuple[int, int, int]] = {}

    def classify(w, syn):
        benign = int(np.count_nonzero(syn == 0))
        detected = int(np.count_nonzero(syn & cmask))
        counts[w] = (detected, benign, len(syn) - benign - detected)

    if w_max == G.n and G.n <= 26:
        syn, wt = _all_syndromes(cols)
        for w in range(G.n + 1):
            classify(w, syn[wt == w])
    else:
        for w, syn in _bounded_syndromes(cols, w_max):
            classify(w, syn)
    for w, row in counts.items():
        assert sum(row) == comb(G.n, w)
    t = next((w for w in sorted(counts) if counts[w][2]), None)
    c = counts[t][2] if t is not None else 0
    return FaultPolynomial(G.n, counts, t, c)


# footprint -----------------------------------------------------------------

INF = float("inf")


@dataclass
class WorkingProfile:
    first_ones: list[float]
    last_ones: list[float]
    working_sets: list[frozenset[int]]

    @property
    def peak(self) -> int:
        return max((len(w) for w in self.working_sets), default=0)

    @property
    def sizes(self) -> list[int]:
        return [len(w) for w in self.working_sets]


def footprint(G: TriorthogonalMatrix) -> WorkingProfile:
    first, last = [], []
    for r in G.rows:
        if r:
            first.append((r & -r).bit_length() - 1)
            last.append(r.bit_length() - 1)
        else:
            first.append(INF)
            last.append(-INF)
    working = []
    for j in range(G.n):
        ws = set()
        for i in range(G.m):
            if j < first[i]:
                continue
            if i < G.k or j <= last[i]:
                ws.add(i)
        working.append(frozenset(ws))
    return WorkingProfile(first, last, working)


def assign_slots(G: TriorthogonalMatrix) -> tuple[list[int | None], int]:
    """Greedy interval packing of working rows into reusable qubit slots.

    Returns the slot of every row (None for all-zero rows) and the slot count,
    which equals the footprint peak. Lowest free slot is taken first.
    """
    prof = footprint(G)
    slot: list[int | None] = [None] * G.m
    free: list[int] = []
    used = 0
    starts: dict[int, list[int]] = {}
    ends: dict[int, list[int]] = {}
    for i in range(G.m):
        if prof.first_ones[i] == INF:
            continue
        starts.setdefault(int(prof.first_ones[i]), []).append(i)
        if i >= G.k:
            ends.setdefault(int(prof.last_ones[i]), []).append(i)
    for j in range(G.n):
        for i in starts.get(j, []):
            if free:
                free.sort()
                slot[i] = free.pop(0)
            else:
                slot[i] = used
                used += 1
        for i in ends.get(j, []):
            free.append(slot[i])
    return slot, used


def peak_footprint(rows: Sequence[int], k: int, n: int) -> int:
    """Fast peak of the working-set profile, used inside search loops."""
    delta = [0] * (n + 1)
    for i, r in enumerate(rows):
        if not r:
            continue
        f = (r & -r).bit_length() - 1
        end = n if i < k else r.bit_length()
        delta[f] += 1
        delta[end] -= 1
    best = cur = 0
    for d in delta[:n]:
        cur += d
        best = max(best, cur)
    return best


# file format ---------------------------------------------------------------

def parse_protocol(text: str, validate: bool = True, name: str = "") -> TriorthogonalMatrix:
    lines = []
    for raw in text.splitlines():
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append(s)
    if not lines:
        raise ProtocolError("empty protocol file")
    header = lines[0].split()
    if len(header) not in (3, 4):
        raise ProtocolError(f"bad header {lines[0]!r}; expected 'm n k [t|ccz]'")
    try:
        m, n, k = (int(x) for x in header[:3])
    except ValueError as exc:
        raise ProtocolError(f"bad header {lines[0]!r}") from exc
    kind = header[3] if len(header) == 4 else "t"
    body = lines[1:]
    if len(body) != m:
        raise ProtocolError(f"header declares {m} rows, found {len(body)}")
    for s in body:
        if len(s) != n:
            raise ProtocolError(f"row {s!r} has width {len(s)}, expected {n}")
    G = TriorthogonalMatrix.from_strings(body, k, kind=kind, name=name) if m else TriorthogonalMatrix((), n, k, kind, name=name)
    if validate:
        report = verify_triorthogonal(G)
        if not report.valid:
            raise ProtocolError(f"not triorthogonal: {report}")
    return G


def load_protocol(path, validate: bool = True) -> TriorthogonalMatrix:
    path = Path(path)
    return parse_protocol(path.read_text(), validate=validate, name=path.stem)


def format_protocol(G: TriorthogonalMatrix) -> str:
    header = f"{G.m} {G.n} {G.k}" + (" ccz" if G.kind == "ccz" else "")
    lines = [f"# {G.name}"] if G.name else []
    return "\n".join(lines + [header] + G.to_strings()) + "\n"


def save_protocol(G: TriorthogonalMatrix, path) -> None:
    Path(path).write_text(format_protocol(G))


def shipped_protocol(name: str) -> TriorthogonalMatrix:
    try:
        fname = SHIPPED[name]
    except KeyError:
        raise ProtocolError(f"unknown protocol {name!r}; choose from {sorted(SHIPPED)}") from None
    text = resources.files("bbmsd.data").joinpath(fname).read_text()
    return parse_protocol(text, name=name)


def shipped_names() -> list[str]:
    return list(SHIPPED)
