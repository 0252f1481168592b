"""Compile triorthogonal protocols into schedules of native BB-code operations.

Pipeline: choose which logical qubit hosts each protocol row (or recycled
slot), extend each rotation with Z masks on idle qubits until it is native,
order the rotations to minimize automorphism rounds, then expand every
rotation into the steps of the selected injection scheme.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bbcode import BBCode, ShiftAutomorphism
from .noise import NoiseTable
from .pauli import Pauli
from .protocol import TriorthogonalMatrix, assign_slots, footprint, rotation_signs
from . import tsp

SCHEMES = ("pivot-based", "direct-factory", "direct-source")
SCHEMA = "schedule.v1"
SEARCH_LIMIT = 2_000_000


class CompileError(ValueError):
    pass


def _bits(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if (mask >> i) & 1)


# native lookup ---------------------------------------------------------------

@dataclass(frozen=True)
class Recipe:
    """How to measure Q (times Z on the pivot in the pivot scheme) natively."""

    frame: ShiftAutomorphism
    base: Pauli
    measured: Pauli

    @property
    def cost(self) -> int:
        return self.frame.generator_cost


def z_candidates(code: BBCode, scheme: str, tracks: int) -> list[tuple[int, Recipe]]:
    """Z-type natives usable for rotations, keyed by their data part.

    Pivot scheme: the measured operator must contain Z on the pivot, which is
    stripped from the key. Direct factory: the pivot is busy with corrections
    and must not appear. Direct source: any Z-type native.
    """
    p = code.pivot
    out = []
    if tracks == 2:
        base = Pauli.Z(p)
        for g in code.automorphisms:
            img = g.act(base)
            out.append((img.z & ~(1 << p), Recipe(g, base, img)))
        return out
    for nm in code.native_set:
        q = nm.pauli
        if q.x:
            continue
        has_pivot = (q.z >> p) & 1
        if scheme == "pivot-based":
            if not has_pivot:
                continue
            key = q.z & ~(1 << p)
        elif scheme == "direct-factory":
            if has_pivot:
                continue
            key = q.z
        else:
            key = q.z
        if key:
            out.append((key, Recipe(nm.frame, nm.base, q)))
    return out


class MaskTable:
    """Best masked recipe for every Z-type Pauli over a fixed active set."""

    def __init__(self, candidates, active: int, pool: int, k: int):
        self.active = active
        self.pool = pool
        size = 1 << k
        self.cost = np.full(size, np.inf)
        self.best: dict[int, tuple] = {}
        for key, recipe in candidates:
            mask = key & ~active
            if mask & ~pool:
                continue
            target = key & active
            if not target:
                continue
            rank = (mask.bit_count(), _bits(mask), recipe.cost, recipe.frame.shift, recipe.base)
            old = self.best.get(target)
            if old is None or rank < old[0]:
                self.best[target] = (rank, mask, recipe)
        for target, (rank, _, _) in self.best.items():
            self.cost[target] = rank[2]

    def lookup(self, target: int) -> tuple[int, Recipe] | None:
        hit = self.best.get(target)
        if hit is None:
            return None
        return hit[1], hit[2]


# mapping ---------------------------------------------------------------------

@dataclass
class MappingAssignment:
    slot_to_logical: tuple[int, ...]
    row_slot: tuple[int | None, ...]
    mask_pool: tuple[int, ...]
    native_count: int
    total_cost: int
    columns: int
    search: str

    @property
    def row_to_logical(self) -> dict[int, int]:
        return {r: self.slot_to_logical[s] for r, s in enumerate(self.row_slot) if s is not None}


def usable_logicals(code: BBCode, scheme: str, tracks: int) -> list[int]:
    if tracks == 2:
        if code.blocks is None:
            raise CompileError("dual-track compilation needs block metadata on the code")
        return [q for q in code.blocks[0] if q != code.pivot]
    if scheme == "direct-source":
        return list(range(code.k))
    return code.usable_logicals


def _column_slots(G: TriorthogonalMatrix, row_slot) -> np.ndarray:
    nslots = max((s for s in row_slot if s is not None), default=-1) + 1
    cols = np.zeros((G.n, nslots), dtype=np.int64)
    for r, s in enumerate(row_slot):
        if s is None:
            continue
        for j in range(G.n):
            if (G.rows[r] >> j) & 1:
                cols[j, s] = 1
    return cols


def _score_perms(cols: np.ndarray, perms: np.ndarray, table: MaskTable) -> tuple[np.ndarray, np.ndarray]:
    weights = np.left_shift(np.int64(1), perms)  # (nperm, s)
    masks = cols @ weights.T  # (ncol, nperm)
    cost = table.cost[masks]
    native = np.isfinite(cost)
    return native.sum(axis=0), np.where(native, cost, 0).sum(axis=0)


def optimize_mapping(
    G: TriorthogonalMatrix,
    code: BBCode,
    scheme: str = "pivot-based",
    tracks: int = 1,
    recycle: bool = False,
    seed: int = 0,
    search: str = "auto",
    masking: bool = True,
) -> MappingAssignment:
    """Place protocol rows (or recycled slots) on logical qubits.

    Maximizes the number of rotations that are native after masking, then
    minimizes the summed generator cost of the chosen recipes.
    """
    if scheme not in SCHEMES:
        raise CompileError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if recycle:
        row_slot, nslots = assign_slots(G)
    else:
        row_slot, nslots = list(range(G.m)), G.m
    usable = usable_logicals(code, scheme, tracks)
    if nslots > len(usable):
        raise CompileError(
            f"protocol needs {nslots} logical qubits but only {len(usable)} are available"
            + ("" if recycle else "; try recycling")
        )
    cands = z_candidates(code, scheme, tracks)
    cols = _column_slots(G, row_slot) if nslots else np.zeros((G.n, 0), dtype=np.int64)
    tables: dict[int, MaskTable] = {}

    def table_for(active_mask: int) -> MaskTable:
        t = tables.get(active_mask)
        if t is None:
            pool = sum(1 << q for q in usable) & ~active_mask if masking else 0
            t = MaskTable(cands, active_mask, pool, code.k)
            tables[active_mask] = t
        return t

    if nslots == 0:
        return MappingAssignment((), tuple(row_slot), tuple(usable), G.n, 0, G.n, "trivial")

    n_eval = 1
    for i in range(nslots):
        n_eval *= len(usable) - i
    if search == "auto":
        search = "exhaustive" if n_eval <= SEARCH_LIMIT else "local"

    best_key, best = None, None
    if search == "exhaustive":
        for subset in itertools.combinations(usable, nslots):
            amask = sum(1 << q for q in subset)
            table = table_for(amask)
            perms = np.array(list(itertools.permutations(subset)), dtype=np.int64)
            for start in range(0, len(perms), 50_000):
                chunk = perms[start:start + 50_000]
                count, cost = _score_perms(cols, chunk, table)
                order = np.lexsort((cost, -count))
                i = int(order[0])
                key = (-int(count[i]), int(cost[i]))
                if best_key is None or key < best_key:
                    best_key, best = key, tuple(int(q) for q in chunk[i])
    elif search == "local":
        rng = np.random.default_rng(seed)

        def score(assign):
            table = table_for(sum(1 << q for q in assign))
            c, w = _score_perms(cols, np.array([assign], dtype=np.int64), table)
            return (-int(c[0]), int(w[0]))

        for _ in range(24):
            cur = tuple(int(q) for q in rng.permutation(usable)[:nslots])
            cur_key = score(cur)
            improved = True
            while improved:
                improved = False
                moves = []
                for a in range(nslots):
                    for b in range(a + 1, nslots):
                        m = list(cur)
                        m[a], m[b] = m[b], m[a]
                        moves.append(tuple(m))
                    for q in usable:
                        if q not in cur:
                            m = list(cur)
                            m[a] = q
                            moves.append(tuple(m))
                for m in moves:
                    k = score(m)
                    if k < cur_key:
                        cur, cur_key, improved = m, k, True
            if best_key is None or cur_key < best_key or (cur_key == best_key and cur < best):
                best_key, best = cur_key, cur
    else:
        raise CompileError(f"unknown mapping search {search!r}")

    pool = tuple(q for q in usable if q not in best) if masking else ()
    return MappingAssignment(best, tuple(row_slot), pool, -best_key[0], best_key[1], G.n, search)


# rotations -------------------------------------------------------------------

@dataclass
class RotationStep:
    column: int
    rows: tuple[int, ...]
    pauli: int  # Z support over logical indices
    mask: int = 0
    recipe: Recipe | None = None
    native_unmasked: bool = False

    @property
    def effective(self) -> int:
        return self.pauli | self.mask

    @property
    def native(self) -> bool:
        return self.recipe is not None


def rotation_paulis(G: TriorthogonalMatrix, mapping: MappingAssignment) -> list[RotationStep]:
    out = []
    for j in range(G.n):
        rows = tuple(r for r in range(G.m) if (G.rows[r] >> j) & 1)
        z = 0
        for r in rows:
            z |= 1 << mapping.slot_to_logical[mapping.row_slot[r]]
        out.append(RotationStep(j, rows, z))
    return out


def apply_masking(step: RotationStep, code: BBCode, mapping: MappingAssignment,
                  scheme: str = "pivot-based", tracks: int = 1, active: int | None = None) -> RotationStep:
    """Smallest set of idle |0> qubits whose Z factors make the rotation native."""
    if active is None:
        active = sum(1 << q for q in mapping.slot_to_logical)
    pool = sum(1 << q for q in mapping.mask_pool)
    table = MaskTable(z_candidates(code, scheme, tracks), active, pool, code.k)
    unmasked = table.best.get(step.pauli)
    hit = table.lookup(step.pauli)
    step = RotationStep(step.column, step.rows, step.pauli, native_unmasked=bool(unmasked and unmasked[1] == 0))
    if hit is not None:
        step.mask, step.recipe = hit
    return step


def nativity_report(steps: Sequence[RotationStep], k: int) -> list[dict]:
    rows = []
    for s in steps:
        rows.append({
            "column": s.column,
            "pauli": Pauli(0, s.pauli).label(k),
            "native_unmasked": s.native_unmasked,
            "native": s.native,
            "mask": list(_bits(s.mask)),
            "frame": list(s.recipe.frame.shift) if s.recipe else None,
            "base": s.recipe.base.label(k) if s.recipe else None,
            "generator_cost": s.recipe.cost if s.recipe else None,
        })
    return rows


# cost matrix and ordering ----------------------------------------------------

@dataclass
class CostMatrix:
    nodes: list[int]  # rotation columns; node 0 of ``w`` is the starting frame
    frames: list[ShiftAutomorphism]
    w: np.ndarray


def _frame(step: RotationStep, code: BBCode) -> ShiftAutomorphism:
    # non-native rotations are synthesized in the identity frame
    return step.recipe.frame if step.recipe is not None else code.automorphisms[0]


def build_cost_matrix(steps: Sequence[RotationStep], code: BBCode,
                      start: ShiftAutomorphism | None = None) -> CostMatrix:
    """Retarget costs between rotation frames; row/column 0 is the start frame."""
    start = start or code.automorphisms[0]
    frames = [start] + [_frame(s, code) for s in steps]
    n = len(frames)
    w = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a != b:
                w[a, b] = code.retarget_cost(frames[a], frames[b])
    return CostMatrix([s.column for s in steps], frames, w)


def schedule_tsp(matrix: CostMatrix, method: str = "auto") -> tuple[list[int], float]:
    """Order the rotations of a cost matrix; returns columns and path cost."""
    order, cost = tsp.shortest_path(matrix.w, start=0, method=method)
    return [matrix.nodes[i - 1] for i in order], cost


# schedule --------------------------------------------------------------------

@dataclass
class Step:
    kind: str
    cost_key: str | None = None
    units: float = 1.0
    prob: float = 1.0
    tracks: tuple[int, ...] = (0,)
    column: int | None = None
    rows: tuple[int, ...] = ()
    logicals: tuple[int, ...] = ()
    mask: tuple[int, ...] = ()
    pauli: str = ""
    basis_class: str = ""
    generators: tuple[int, ...] = ()
    shift: tuple[int, int] | None = None
    serialize_prob: float = 0.0
    outputs: tuple[int, ...] = ()
    cost: float = 0.0

    def expected_units(self) -> float:
        return self.prob * (self.units + self.serialize_prob)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        kw = dict(d)
        for name in ("tracks", "rows", "logicals", "mask", "generators", "outputs"):
            kw[name] = tuple(kw.get(name, ()))
        if kw.get("shift") is not None:
            kw["shift"] = tuple(kw["shift"])
        return cls(**kw)


@dataclass
class CompiledSchedule:
    protocol_name: str
    protocol_rows: list[str]
    k_out: int
    protocol_kind: str
    groups: list[list[int]]
    code: str
    n_logical: int
    pivot: int
    dual: int | None
    scheme: str
    tracks: int
    recycle: bool
    rounds: int
    row_slot: list[int | None]
    slot_logical: list[list[int]]
    ordering: list[int]
    automorphism_cost: int
    steps: list[Step] = field(default_factory=list)
    natives: list[dict] = field(default_factory=list)
    # orientation of each column's rotation, +1 for exp(-i pi/8 P)
    signs: list[int] = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return len(self.slot_logical[0]) if self.slot_logical else 0

    @property
    def native_count(self) -> int:
        return sum(1 for r in self.natives if r["native"])

    @property
    def native_unmasked_count(self) -> int:
        return sum(1 for r in self.natives if r["native_unmasked"])

    def rotation_count(self) -> int:
        return len(self.ordering)

    def expected_units(self, kind: str) -> float:
        return sum(s.expected_units() for s in self.steps if s.cost_key == kind)

    def total_cost(self) -> float:
        return sum(s.cost for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "protocol": {"name": self.protocol_name, "rows": self.protocol_rows, "k": self.k_out,
                         "kind": self.protocol_kind, "groups": self.groups},
            "code": self.code,
            "n_logical": self.n_logical,
            "pivot": self.pivot,
            "dual": self.dual,
            "scheme": self.scheme,
            "tracks": self.tracks,
            "recycle": self.recycle,
            "rounds": self.rounds,
            "row_slot": self.row_slot,
            "slot_logical": self.slot_logical,
            "ordering": self.ordering,
            "automorphism_cost": self.automorphism_cost,
            "natives": self.natives,
            "signs": self.signs,
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CompiledSchedule":
        if d.get("schema") != SCHEMA:
            raise CompileError(f"unsupported schedule schema {d.get('schema')!r}")
        p = d["protocol"]
        return cls(
            protocol_name=p["name"], protocol_rows=p["rows"], k_out=p["k"], protocol_kind=p["kind"],
            groups=p["groups"], code=d["code"], n_logical=d["n_logical"], pivot=d["pivot"], dual=d["dual"],
            scheme=d["scheme"], tracks=d["tracks"], recycle=d["recycle"], rounds=d["rounds"],
            row_slot=d["row_slot"], slot_logical=d["slot_logical"], ordering=d["ordering"],
            automorphism_cost=d["automorphism_cost"], natives=d["natives"],
            steps=[Step.from_dict(s) for s in d["steps"]],
            signs=d.get("signs") or [1] * len(p["rows"][0] if p["rows"] else ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "CompiledSchedule":
        return cls.from_dict(json.loads(text))

    def protocol(self) -> TriorthogonalMatrix:
        return TriorthogonalMatrix.from_strings(self.protocol_rows, self.k_out, kind=self.protocol_kind,
                                                groups=tuple(tuple(g) for g in self.groups) or None,
                                                name=self.protocol_name)


@dataclass(frozen=True)
class CompileOptions:
    scheme: str = "pivot-based"
    tracks: int = 1
    recycle: bool | None = None  # None: recycle only when the protocol does not fit
    rounds: int = 7
    masking: bool = True
    tsp_method: str = "auto"
    seed: int = 0


def _segments(G: TriorthogonalMatrix, recycle: bool) -> tuple[list[list[int]], dict, dict]:
    """Column blocks with a fixed live-row set, plus init and readout events."""
    prof = footprint(G)
    live_rows = [i for i in range(G.m) if G.rows[i]]
    if not recycle:
        return [list(range(G.n))] if G.n else [], {0: live_rows}, {}
    starts: dict[int, list[int]] = {}
    ends: dict[int, list[int]] = {}
    for i in live_rows:
        starts.setdefault(int(prof.first_ones[i]), []).append(i)
        if i >= G.k and int(prof.last_ones[i]) < G.n - 1:
            ends.setdefault(int(prof.last_ones[i]), []).append(i)
    segments, cur = [], []
    for j in range(G.n):
        if j in starts and cur:
            segments.append(cur)
            cur = []
        cur.append(j)
        if j in ends:
            segments.append(cur)
            cur = []
    if cur:
        segments.append(cur)
    return segments, starts, ends


def build_schedule(G: TriorthogonalMatrix, code: BBCode, mapping: MappingAssignment,
                   rotations: Sequence[RotationStep], options: CompileOptions) -> CompiledSchedule:
    scheme, tracks = options.scheme, options.tracks
    if tracks not in (1, 2):
        raise CompileError("tracks must be 1 or 2")
    if tracks == 2 and scheme != "pivot-based":
        raise CompileError("dual-track compilation is defined for the pivot-based scheme")
    table = NoiseTable.timesteps_only(code.name, options.rounds)
    by_col = {r.column: r for r in rotations}
    recycle = options.recycle
    segments, starts, ends = _segments(G, bool(recycle))
    all_tracks = tuple(range(tracks))
    slot_logical = [list(mapping.slot_to_logical)]
    if tracks == 2:
        b0, b1 = code.blocks
        slot_logical.append([b1[b0.index(q)] for q in mapping.slot_to_logical])

    steps: list[Step] = []

    def emit(step: Step):
        if step.cost_key is not None:
            step.cost = table.step_cost(step.cost_key) * step.expected_units()
        steps.append(step)

    frame = code.automorphisms[0]
    ordering: list[int] = []
    auto_cost = 0
    for seg in segments:
        first = seg[0]
        if first in starts:
            emit(Step("init", "in_module", rows=tuple(starts[first]), tracks=all_tracks,
                      logicals=tuple(slot_logical[0][mapping.row_slot[r]] for r in starts[first])))
        seg_rots = [by_col[j] for j in seg]
        if options.tsp_method == "none":
            order = list(seg)
        else:
            matrix = build_cost_matrix(seg_rots, code, start=frame)
            order, _ = schedule_tsp(matrix, options.tsp_method)
        for j in order:
            rot = by_col[j]
            target = _frame(rot, code)
            delta = (target.shift[0] - frame.shift[0], target.shift[1] - frame.shift[1])
            word = code.automorphism_by_shift(delta).generator_word
            if word:
                emit(Step("automorphism", "automorphism", units=len(word), tracks=all_tracks,
                          generators=word, shift=target.shift))
                auto_cost += len(word)
            frame = target
            _expand_rotation(rot, code, scheme, tracks, emit)
            ordering.append(j)
        last = seg[-1]
        if last in ends:
            emit(Step("measure_out", "in_module", rows=tuple(ends[last]), tracks=all_tracks,
                      logicals=tuple(slot_logical[0][mapping.row_slot[r]] for r in ends[last])))
    done = {r for rs in ends.values() for r in rs}
    checks = tuple(r for r in range(G.k, G.m) if G.rows[r] and r not in done)
    emit(Step("final_readout", "in_module", units=G.k + 1, rows=checks, outputs=tuple(range(G.k)),
              tracks=all_tracks))

    return CompiledSchedule(
        protocol_name=G.name, protocol_rows=G.to_strings(), k_out=G.k, protocol_kind=G.kind,
        groups=[list(g) for g in (G.groups or ())], code=code.name, n_logical=code.k, pivot=code.pivot,
        dual=code.dual, scheme=scheme, tracks=tracks, recycle=bool(recycle), rounds=options.rounds,
        row_slot=list(mapping.row_slot), slot_logical=slot_logical, ordering=ordering,
        automorphism_cost=auto_cost, steps=steps, natives=nativity_report(rotations, code.k),
        signs=list(rotation_signs(G)),
    )


def _expand_rotation(rot: RotationStep, code: BBCode, scheme: str, tracks: int, emit) -> None:
    k = code.k
    all_tracks = tuple(range(tracks))
    logicals = _bits(rot.pauli)
    mask = _bits(rot.mask)
    q_label = Pauli(0, rot.effective).label(k)
    common = dict(column=rot.column, rows=rot.rows, logicals=logicals, mask=mask, tracks=all_tracks)
    if not rot.native:
        # Clifford conjugation into a native frame and back
        emit(Step("conjugation", "in_module", units=2, pauli=q_label, basis_class="pure-Z", **common))
    if scheme == "pivot-based":
        emit(Step("inter_module", "inter_module", pauli="source*pivot", **common))
        emit(Step("lpu_measure", "in_module", pauli=q_label, basis_class="pure-Z", **common))
        # the pivot is read in X or in Y depending on the previous outcome;
        # paired tracks must serialize unless both read X
        emit(Step("pivot_measure", "in_module", prob=1.0, serialize_prob=0.75 if tracks == 2 else 0.0,
                  basis_class="X-or-Y", **common))
    elif scheme == "direct-factory":
        emit(Step("inter_module", "inter_module", pauli=q_label, basis_class="pure-Z", **common))
        emit(Step("correction", "in_module", units=2, prob=0.5, pauli=q_label, **common))
    else:
        emit(Step("inter_module", "inter_module", pauli=q_label, basis_class="pure-Z", **common))
        emit(Step("source_measure", None, units=0, basis_class="X-or-Y", **common))


def compile_protocol(G: TriorthogonalMatrix, code: BBCode, options: CompileOptions | None = None,
                     mapping: MappingAssignment | None = None, signs=None) -> CompiledSchedule:
    """Full pipeline: mapping, masking, ordering and scheme expansion."""
    options = options or CompileOptions()
    recycle = options.recycle
    if recycle is None:
        capacity = len(usable_logicals(code, options.scheme, options.tracks))
        recycle = G.m > capacity
        options = CompileOptions(**{**asdict(options), "recycle": recycle})
    if mapping is None:
        mapping = optimize_mapping(G, code, options.scheme, options.tracks, recycle, options.seed,
                                   masking=options.masking)
    rotations = [apply_masking(rot, code, mapping, options.scheme, options.tracks)
                 for rot in rotation_paulis(G, mapping)]
    sched = build_schedule(G, code, mapping, rotations, options)
    if signs is not None:
        if len(signs) != G.n or any(v not in (1, -1) for v in signs):
            raise CompileError("rotation signs must be one +1 or -1 per column")
        sched.signs = [int(v) for v in signs]
    return sched
