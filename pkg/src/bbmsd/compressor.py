"""Footprint compression of triorthogonal protocols.

The footprint of a protocol depends on the column order and on which
generators of the even-row (check) space are used. For a fixed column order
the best generators are computed directly: the check rows are brought into
minimal-span form (distinct leading and distinct trailing columns), and every
output row has its leading one pushed right by adding check rows. Simulated
annealing then searches over column orders.

Only even rows are ever added, so triorthogonality, row parities, the check
space and the fault polynomial are all preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .protocol import (
    TriorthogonalMatrix,
    assign_slots,
    enumerate_faults,
    footprint,
    peak_footprint,
    rotation_signs,
    verify_triorthogonal,
)
from . import gf2


class CompressionError(ValueError):
    pass


# ops log ---------------------------------------------------------------------

@dataclass(frozen=True)
class ColPerm:
    order: tuple[int, ...]  # new column j is old column order[j]

    def apply(self, rows: list[int], k: int) -> list[int]:
        out = []
        for r in rows:
            v = 0
            for j, src in enumerate(self.order):
                if (r >> src) & 1:
                    v |= 1 << j
            out.append(v)
        return out


@dataclass(frozen=True)
class RowPermWithinBlocks:
    order: tuple[int, ...]  # new row i is old row order[i]

    def apply(self, rows: list[int], k: int) -> list[int]:
        if sorted(self.order[:k]) != list(range(k)):
            raise CompressionError("row permutation mixes output and check blocks")
        return [rows[i] for i in self.order]


@dataclass(frozen=True)
class RowAdd:
    src: int
    dst: int

    def apply(self, rows: list[int], k: int) -> list[int]:
        if self.src < k:
            raise CompressionError(f"row addition from odd row {self.src}")
        out = list(rows)
        out[self.dst] ^= out[self.src]
        return out


def replay(G: TriorthogonalMatrix, ops) -> TriorthogonalMatrix:
    rows = list(G.rows)
    for op in ops:
        rows = op.apply(rows, G.k)
    return G.with_rows(rows)


def op_to_dict(op) -> dict:
    if isinstance(op, ColPerm):
        return {"op": "col_perm", "order": list(op.order)}
    if isinstance(op, RowPermWithinBlocks):
        return {"op": "row_perm", "order": list(op.order)}
    return {"op": "row_add", "src": op.src, "dst": op.dst}


def op_from_dict(d: dict):
    kind = d["op"]
    if kind == "col_perm":
        return ColPerm(tuple(d["order"]))
    if kind == "row_perm":
        return RowPermWithinBlocks(tuple(d["order"]))
    if kind == "row_add":
        return RowAdd(d["src"], d["dst"])
    raise CompressionError(f"unknown op {kind!r}")


# inner optimization ------------------------------------------------------------

def _low(v: int) -> int:
    return (v & -v).bit_length() - 1


def reduce_rows(rows: list[int], k: int) -> tuple[list[int], list[RowAdd]]:
    """Minimal-span check rows and right-pushed output rows for a fixed order."""
    rows = list(rows)
    log: list[RowAdd] = []
    checks = list(range(k, len(rows)))

    def add(src, dst):
        rows[dst] ^= rows[src]
        log.append(RowAdd(src, dst))

    # distinct leading columns among check rows
    changed = True
    while changed:
        changed = False
        lead: dict[int, int] = {}
        for i in checks:
            if not rows[i]:
                continue
            f = _low(rows[i])
            if f in lead:
                j = lead[f]
                # keep the row with the earlier trailing one as the pivot
                a, b = (j, i) if rows[j].bit_length() <= rows[i].bit_length() else (i, j)
                add(a, b)
                changed = True
                break
            lead[f] = i
    # distinct trailing columns; the row that starts earlier absorbs the other
    changed = True
    while changed:
        changed = False
        trail: dict[int, int] = {}
        for i in checks:
            if not rows[i]:
                continue
            t = rows[i].bit_length()
            if t in trail:
                j = trail[t]
                a, b = (j, i) if _low(rows[j]) > _low(rows[i]) else (i, j)
                add(a, b)
                changed = True
                break
            trail[t] = i
    # push each output row's first one to the right
    lead = {_low(rows[i]): i for i in checks if rows[i]}
    for o in range(k):
        while rows[o] and _low(rows[o]) in lead:
            add(lead[_low(rows[o])], o)
    return rows, log


def order_cost(rows: list[int], k: int, n: int, order) -> tuple[int, int]:
    """(peak, total working area) of the reduced matrix under a column order."""
    permuted = ColPerm(tuple(order)).apply(rows, k)
    reduced, _ = reduce_rows(permuted, k)
    peak = peak_footprint(reduced, k, n)
    area = 0
    for i, r in enumerate(reduced):
        if r:
            area += (n if i < k else r.bit_length()) - _low(r)
    return peak, area


# annealing ---------------------------------------------------------------------

@dataclass
class CompressionResult:
    g_prime: TriorthogonalMatrix
    ops_log: list = field(default_factory=list)
    footprint_before: int = 0
    footprint_after: int = 0
    reuse_map: list[int | None] = field(default_factory=list)
    slots: int = 0
    history: list[int] = field(default_factory=list)
    iterations: int = 0
    seed: int = 0
    # rotation orientations of the original protocol carried through the column permutation
    signs: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "footprint_before": self.footprint_before,
            "footprint_after": self.footprint_after,
            "reuse_map": self.reuse_map,
            "seed": self.seed,
            "iterations": self.iterations,
            "signs": list(self.signs),
            "ops_log": [op_to_dict(op) for op in self.ops_log],
        }


def _finish(G: TriorthogonalMatrix, order, seed: int, history, iterations) -> CompressionResult:
    ops: list = [ColPerm(tuple(order))] if list(order) != list(range(G.n)) else []
    rows = ColPerm(tuple(order)).apply(list(G.rows), G.k)
    rows, adds = reduce_rows(rows, G.k)
    ops.extend(adds)
    # order check rows by first column so recycled slots read naturally
    checks = sorted(range(G.k, G.m), key=lambda i: (rows[i] == 0, _low(rows[i]) if rows[i] else 0, i))
    perm = tuple(range(G.k)) + tuple(checks)
    if perm != tuple(range(G.m)):
        ops.append(RowPermWithinBlocks(perm))
    g_prime = replay(G, ops)
    before = footprint(G).peak
    after = footprint(g_prime).peak
    if after > before:
        # never worse than the input
        g_prime, ops, after = G, [], before
    slots, nslots = assign_slots(g_prime)
    base = rotation_signs(G)
    perm = next((op.order for op in ops if isinstance(op, ColPerm)), tuple(range(G.n)))
    signs = tuple(base[src] for src in perm)
    return CompressionResult(g_prime, ops, before, after, slots, nslots, history, iterations, seed, signs)


def _anneal(G: TriorthogonalMatrix, rng: np.random.Generator, budget: int, target: int | None,
            t0: float, t1: float, patience: int | None = None):
    n, k = G.n, G.k
    rows = list(G.rows)
    order = list(range(n))
    cur = order_cost(rows, k, n, order)
    best, best_order = cur, list(order)
    history = [best[0]]
    it = 0
    last_gain = 0
    for it in range(1, budget + 1):
        temp = t0 * (t1 / t0) ** (it / budget)
        cand = list(order)
        u = rng.random()
        i, j = sorted(rng.choice(n, size=2, replace=False))
        if u < 0.5:
            cand[i], cand[j] = cand[j], cand[i]
        elif u < 0.8:
            c = cand.pop(j)
            cand.insert(i, c)
        else:
            cand[i:j + 1] = cand[i:j + 1][::-1]
        new = order_cost(rows, k, n, cand)
        # peak dominates; area breaks plateaus
        delta = (new[0] - cur[0]) * n * G.m + (new[1] - cur[1])
        if delta <= 0 or rng.random() < math.exp(-delta / max(temp, 1e-12)):
            order, cur = cand, new
            if cur < best:
                if cur[0] < best[0]:
                    last_gain = it
                best, best_order = cur, list(order)
        history.append(best[0])
        if target is not None and best[0] <= target:
            break
        if patience is not None and it - last_gain >= patience:
            break
    return best, best_order, history, it


def compress(G: TriorthogonalMatrix, target: int | None = None, budget: int = 100_000, seed: int = 0,
             restarts: int = 1, patience: int | None = None) -> CompressionResult:
    """Reduce the footprint peak; deterministic for a given seed.

    A restart stops early once the peak reaches ``target`` or, when ``patience``
    is set, after that many iterations without a lower peak.
    """
    report = verify_triorthogonal(G)
    if not report.valid:
        raise CompressionError(f"input protocol is not triorthogonal: {report}")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        scale = float(G.n)
        cost, order, history, iters = _anneal(G, rng, budget, target, t0=scale, t1=0.05, patience=patience)
        key = (cost, tuple(order))
        if best is None or key < best[0]:
            best = (key, order, history, iters)
        if target is not None and cost[0] <= target:
            break
    _, order, history, iters = best
    return _finish(G, order, seed, history, iters)


# equivalence -----------------------------------------------------------------

@dataclass
class EquivalenceReport:
    checks: dict[str, bool]
    details: dict[str, str]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]

    def __str__(self) -> str:
        lines = []
        for name, ok in self.checks.items():
            lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {self.details.get(name, '')}")
        return "\n".join(lines)


def _span_equal(a: list[int], b: list[int], n: int) -> bool:
    ra, rb = gf2.rank_rows(a, n), gf2.rank_rows(b, n)
    return ra == rb == gf2.rank_rows(a + b, n)


CHANNEL_QUBITS = 20


def verify_equivalence(G: TriorthogonalMatrix, result: CompressionResult, w_max: int | None = None,
                       channel: bool | None = None, code=None) -> EquivalenceReport:
    """Four-part contract between a protocol and its compressed form.

    triorthogonal: the compressed matrix passes verification with the same k.
    row_spaces: check spans agree and outputs agree modulo the check span.
    fault_polynomial: malignant/detected/benign counts agree up to ``w_max``.
    channel: noiseless recycled and unrecycled schedules give the same output
    state with certain acceptance. Runs by default whenever the bare protocol
    fits the state-vector limit (CHANNEL_QUBITS).
    """
    Gp = result.g_prime
    checks: dict[str, bool] = {}
    details: dict[str, str] = {}

    rep = verify_triorthogonal(Gp)
    checks["triorthogonal"] = rep.valid and Gp.k == G.k and Gp.m == G.m and Gp.n == G.n
    details["triorthogonal"] = "valid" if rep.valid else str(rep)

    order = next((op.order for op in result.ops_log if isinstance(op, ColPerm)), tuple(range(G.n)))
    orig = ColPerm(tuple(order)).apply(list(G.rows), G.k)
    ev_a, ev_b = orig[G.k:], list(Gp.rows[G.k:])
    ok = _span_equal(ev_a, ev_b, G.n)
    odd_ok = True
    red = gf2.Reducer(G.n)
    for r in ev_a:
        red.add(r)
    # output rows are matched as a set: the row permutation keeps the odd block
    for i in range(G.k):
        if not any(red.contains(orig[j] ^ Gp.rows[i]) for j in range(G.k)):
            odd_ok = False
    checks["row_spaces"] = ok and odd_ok
    details["row_spaces"] = f"check span equal: {ok}; outputs equal modulo checks: {odd_ok}"

    if w_max is None:
        w_max = G.n if G.n <= 20 else min(5, G.n)
    pa = enumerate_faults(G, w_max)
    pb = enumerate_faults(Gp, w_max)
    checks["fault_polynomial"] = pa.counts == pb.counts
    details["fault_polynomial"] = f"weights <= {w_max}; t={pb.t}, c={pb.c}"

    if channel is None:
        channel = sum(1 for r in G.rows if r) <= CHANNEL_QUBITS
    if channel:
        ok, msg = _channel_check(G, result, code)
        checks["channel"] = ok
        details["channel"] = msg
    return EquivalenceReport(checks, details)


def _channel_check(G: TriorthogonalMatrix, result: CompressionResult, code) -> tuple[bool, str]:
    """Noiseless recycled schedule of G' against the bare protocol G.

    The protocol has no external inputs (every row starts in |+>), so one
    run per side spans the input set. Both runs stay pure and are compared
    as state vectors. The reference side is the protocol itself, one qubit
    per row, so it does not depend on the code's capacity.
    """
    from .bbcode import build_code, preset
    from .compiler import CompileOptions, compile_protocol
    from .simulator import SimulationError, noiseless_output, protocol_output

    code = code or build_code(preset("gross"))
    opts = dict(tsp_method="none", masking=False)
    try:
        a = protocol_output(G)
        signs = result.signs or rotation_signs(result.g_prime)
        recycled = compile_protocol(result.g_prime, code, CompileOptions(recycle=True, **opts), signs=signs)
        b = noiseless_output(recycled)
    except (SimulationError, ValueError) as exc:
        return False, f"noiseless run failed: {exc}"
    fid = float(abs(np.vdot(a, b)) ** 2)
    live = sum(1 for r in G.rows if r)
    return abs(1 - fid) <= 1e-10, f"output fidelity {fid:.12f} ({live} vs {recycled.n_slots} qubits)"


# recycled schedules ----------------------------------------------------------

def emit_recycled_schedule(result: CompressionResult, code, scheme: str = "pivot-based", **kw):
    from .compiler import CompileError, CompileOptions, compile_protocol, usable_logicals

    capacity = len(usable_logicals(code, scheme, kw.get("tracks", 1)))
    if result.footprint_after > capacity:
        raise CompressionError(f"footprint {result.footprint_after} exceeds {capacity} available logical qubits")
    try:
        return compile_protocol(result.g_prime, code, CompileOptions(scheme=scheme, recycle=True, **kw),
                                signs=result.signs or None)
    except CompileError as exc:
        raise CompressionError(str(exc)) from exc


def slot_reuse_valid(G: TriorthogonalMatrix, reuse_map: list[int | None]) -> bool:
    """Sweep-line check that no slot hosts two working rows at any column."""
    prof = footprint(G)
    for j, ws in enumerate(prof.working_sets):
        seen = set()
        for i in ws:
            s = reuse_map[i]
            if s is None or s in seen:
                return False
            seen.add(s)
    return True
