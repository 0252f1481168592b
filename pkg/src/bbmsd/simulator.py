"""Exact logical-level density-matrix simulation of compiled schedules.

Each logical qubit of the factory is one simulated qubit; qubit i is bit i of
the density-matrix index. Every operation is a Pauli-structured map, so it
costs a few index gathers and elementwise products on the 2^q x 2^q array.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .compiler import CompiledSchedule, Step
from .noise import SOURCES, TABLE_VERSION, NoiseModel, NoiseTable
from .pauli import Pauli
from .protocol import FaultPolynomial, ProtocolError, TriorthogonalMatrix, expected_check_outcome, rotation_signs

QUBIT_CAP = 12
THETA = -math.pi / 8  # exp(i THETA P) is the rotation realized by each gadget
ROTATION_KINDS = ("conjugation", "inter_module", "lpu_measure", "pivot_measure", "correction", "source_measure")


class SimulationError(RuntimeError):
    pass


# density matrices --------------------------------------------------------------

class DensityMatrix:
    """Subnormalized density matrix; the trace tracks the post-selection weight."""

    def __init__(self, q: int, data: np.ndarray | None = None):
        if q > QUBIT_CAP:
            raise SimulationError(f"{q} qubits exceed the simulation cap of {QUBIT_CAP}")
        self.q = q
        self.dim = 1 << q
        if data is None:
            data = np.zeros((self.dim, self.dim), dtype=complex)
            data[0, 0] = 1.0
        self.rho = data
        self._index = np.arange(self.dim)
        self._cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_state(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        q = int(round(math.log2(len(psi))))
        return cls(q, np.outer(psi, psi.conj()))

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.q, self.rho.copy())

    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    # Pauli action: P|b> = i^{|x&z|} (-1)^{|b&z|} |b^x>
    def _pauli(self, p: Pauli) -> tuple[np.ndarray, np.ndarray]:
        key = (p.x, p.z)
        hit = self._cache.get(key)
        if hit is None:
            src = self._index ^ p.x
            par = np.zeros(self.dim, dtype=np.int64)
            masked = src & p.z
            for b in range(self.q):
                par ^= (masked >> b) & 1
            phase = (1j ** ((p.x & p.z).bit_count() % 4)) * (1 - 2 * par)
            hit = (src, phase.astype(complex))
            self._cache[key] = hit
        return hit

    def left(self, p: Pauli, rho: np.ndarray | None = None) -> np.ndarray:
        rho = self.rho if rho is None else rho
        src, ph = self._pauli(p)
        out = rho[src] if p.x else rho.copy()
        return out * ph[:, None]

    def right(self, p: Pauli, rho: np.ndarray | None = None) -> np.ndarray:
        rho = self.rho if rho is None else rho
        src, ph = self._pauli(p)
        out = rho[:, src] if p.x else rho.copy()
        # (rho P)[a, c] = rho[a, c^x] * phase(c), and P is Hermitian
        return out * np.conj(ph)[None, :]

    def conj(self, p: Pauli, rho: np.ndarray | None = None) -> np.ndarray:
        rho = self.rho if rho is None else rho
        src, ph = self._pauli(p)
        out = rho[np.ix_(src, src)] if p.x else rho
        return out * np.outer(ph, np.conj(ph))

    # channels
    def apply_pauli(self, p: Pauli) -> None:
        self.rho = self.conj(p)

    def rotate(self, p: Pauli, theta: float) -> None:
        """rho -> exp(i theta P) rho exp(-i theta P)."""
        c, s = math.cos(theta), math.sin(theta)
        self.rho = c * c * self.rho + s * s * self.conj(p) + 1j * s * c * (self.left(p) - self.right(p))

    def project(self, p: Pauli, sign: int, rho: np.ndarray | None = None) -> np.ndarray:
        """(I + sign P)/2 rho (I + sign P)/2, without touching the state."""
        rho = self.rho if rho is None else rho
        return 0.25 * (rho + sign * (self.left(p, rho) + self.right(p, rho)) + self.conj(p, rho))

    def pauli_channel(self, terms: list[tuple[Pauli, float]]) -> None:
        total = sum(pr for _, pr in terms)
        if total == 0:
            return
        out = (1.0 - total) * self.rho
        for p, pr in terms:
            if pr:
                out = out + pr * self.conj(p)
        self.rho = out

    def _full_twirl(self, qubits) -> np.ndarray:
        out = self.rho
        for q in qubits:
            acc = out.copy()
            for p in (Pauli.X(q), Pauli.Y(q), Pauli.Z(q)):
                acc = acc + self.conj(p, out)
            out = acc / 4.0
        return out

    def depolarize(self, qubits, p: float) -> None:
        """Uniform depolarizing on a qubit subset: each non-identity Pauli with p/(4^w - 1)."""
        qubits = sorted(set(qubits))
        if p == 0 or not qubits:
            return
        w = len(qubits)
        n = 4 ** w
        mixed = self._full_twirl(qubits)
        self.rho = (1.0 - p) * self.rho + p / (n - 1) * (n * mixed - self.rho)

    def reset_plus(self, qubit: int) -> None:
        """Measure X and flip to +: prepares |+> on the qubit, discarding it."""
        x = Pauli.X(qubit)
        self.rho = self.project(x, 1) + self.conj(Pauli.Z(qubit), self.project(x, -1))

    def reset_magic(self, qubit: int) -> None:
        self.reset_plus(qubit)
        self.rotate(Pauli.Z(qubit), THETA)

    def measure_with_feedback(self, p: Pauli, flip: float, correction=None) -> None:
        """Measure P; a recorded -1 triggers ``correction`` (a Pauli or a callable on arrays)."""
        plus, minus = self.project(p, 1), self.project(p, -1)
        rec_plus = (1 - flip) * plus + flip * minus
        rec_minus = (1 - flip) * minus + flip * plus
        self.rho = rec_plus + self._correct(rec_minus, correction)

    def _correct(self, rho: np.ndarray, correction) -> np.ndarray:
        if correction is None:
            return rho
        if isinstance(correction, Pauli):
            return self.conj(correction, rho)
        return correction(rho)

    def postselect(self, p: Pauli, sign: int = 1, flip: float = 0.0) -> float:
        """Keep the branch whose recorded outcome is ``sign``; returns its probability."""
        before = self.trace()
        keep = (1 - flip) * self.project(p, sign) + flip * self.project(p, -sign)
        self.rho = keep
        return self.trace() / before if before > 0 else 0.0

    def reduced(self, keep: list[int]) -> np.ndarray:
        """Partial trace onto ``keep`` (returned in the listed qubit order)."""
        q = self.q
        t = self.rho.reshape((2,) * (2 * q))
        axes_keep = [q - 1 - i for i in keep]
        drop = [a for a in range(q) if a not in axes_keep]
        letters = "abcdefghijklmnopqrstuvwxyz"
        row = list(letters[:q])
        col = list(letters[q:2 * q])
        for a in drop:
            col[a] = row[a]
        # output qubit keep[0] is the least significant bit
        out_row = "".join(row[a] for a in reversed(axes_keep))
        out_col = "".join(col[a] for a in reversed(axes_keep))
        spec = "".join(row) + "".join(col) + "->" + out_row + out_col
        d = 1 << len(keep)
        return np.einsum(spec, t).reshape(d, d)

    def check(self, tol_herm: float = 1e-10, tol_psd: float = 1e-8) -> None:
        if np.max(np.abs(self.rho - self.rho.conj().T)) > tol_herm:
            raise SimulationError("density matrix lost Hermiticity")
        if self.dim <= 512 and np.linalg.eigvalsh(self.rho).min() < -tol_psd:
            raise SimulationError("density matrix lost positivity")


def apply_rotation(dm: DensityMatrix, p: Pauli, theta: float) -> DensityMatrix:
    out = dm.copy()
    out.rotate(p, theta)
    return out


def apply_channel(dm: DensityMatrix, qubits, p: float) -> DensityMatrix:
    out = dm.copy()
    out.depolarize(qubits, p)
    return out


def measure_with_feedback(dm: DensityMatrix, p: Pauli, flip_prob: float, correction=None) -> DensityMatrix:
    out = dm.copy()
    out.measure_with_feedback(p, flip_prob, correction)
    return out


def postselect(dm: DensityMatrix, checks, outcomes=None) -> tuple[DensityMatrix, float]:
    out = dm.copy()
    outcomes = outcomes or [1] * len(checks)
    total = out.trace()
    for p, s in zip(checks, outcomes):
        out.postselect(p, s)
    accept = out.trace() / total if total > 0 else 0.0
    if accept <= 1e-15:
        raise SimulationError("post-selection has zero acceptance probability")
    out.rho = out.rho / out.trace()
    return out, accept


# schedule walk ---------------------------------------------------------------

@dataclass
class SimulationReport:
    p_out: float
    accept_prob: float
    per_output: list[float] = field(default_factory=list)
    source_breakdown: dict[str, float] = field(default_factory=dict)
    qubits: int = 0
    max_trace_drift: float = 0.0
    schedule_hash: str = ""
    noise: dict = field(default_factory=dict)
    table_version: str = TABLE_VERSION

    def to_dict(self) -> dict:
        return {
            "p_out": self.p_out,
            "accept_prob": self.accept_prob,
            "per_output": self.per_output,
            "source_breakdown": self.source_breakdown,
            "qubits": self.qubits,
            "schedule_hash": self.schedule_hash,
            "noise": self.noise,
            "table_version": self.table_version,
            "shots": "exact",
        }


def schedule_hash(schedule: CompiledSchedule) -> str:
    return hashlib.sha256(schedule.to_json().encode()).hexdigest()[:16]


class _Walker:
    def __init__(self, schedule: CompiledSchedule, noise: NoiseModel, check_every_step: bool = False):
        self.s = schedule
        self.noise = noise
        self.nslots = schedule.n_slots
        self.anc = self.nslots  # pivot or source qubit
        self.dm = DensityMatrix(self.nslots + 1)
        self.live: set[int] = set()
        self.check = check_every_step
        self.max_drift = 0.0
        self.weight = 1.0
        signs = schedule.signs or [1] * schedule.protocol().n
        G = schedule.protocol()
        self.signs = signs
        self.expected = {r: expected_check_outcome(G.rows[r], signs) for r in G.checks if G.rows[r]}

    def slot(self, row: int) -> int:
        return self.s.row_slot[row]

    def data_z(self, rows) -> Pauli:
        z = 0
        for r in rows:
            z |= 1 << self.slot(r)
        return Pauli(0, z)

    def run(self) -> DensityMatrix:
        steps = [st for st in self.s.steps if 0 in st.tracks]
        i = 0
        while i < len(steps):
            st = steps[i]
            if st.kind in ROTATION_KINDS:
                j = i
                while j < len(steps) and steps[j].kind in ROTATION_KINDS and steps[j].column == st.column:
                    j += 1
                before = self.dm.trace()
                self.rotation(steps[i:j])
                self._drift(before)
                i = j
                continue
            before = self.dm.trace()
            getattr(self, "do_" + st.kind)(st)
            if st.kind in ("automorphism", "init"):
                self._drift(before)
            i += 1
        return self.dm

    def _drift(self, before: float) -> None:
        self.max_drift = max(self.max_drift, abs(self.dm.trace() - before))
        if self.check:
            self.dm.check()

    # non-rotation steps
    def do_init(self, st: Step) -> None:
        for r in st.rows:
            self.dm.reset_plus(self.slot(r))
            self.live.add(self.slot(r))

    def do_automorphism(self, st: Step) -> None:
        if self.noise.p_auto == 0:
            return
        for _ in range(int(st.units)):
            for q in sorted(self.live):
                self.dm.depolarize([q], self.noise.p_auto)

    def _memory(self, qubits) -> None:
        p = self.noise.p_memory
        if p == 0:
            return
        if self.noise.memory_scope == "all":
            qubits = sorted(self.live | set(qubits))
        self.dm.depolarize(qubits, p)

    def _readout(self, rows) -> None:
        qs = [self.slot(r) for r in rows]
        if not qs:
            return
        self._memory(qs)
        flip = self.noise.p_meas if self.noise.readout_flips else 0.0
        for r, q in zip(rows, qs):
            self.dm.postselect(Pauli.X(q), self.expected[r], flip)

    def do_measure_out(self, st: Step) -> None:
        self._readout(st.rows)
        for r in st.rows:
            self.live.discard(self.slot(r))

    def do_final_readout(self, st: Step) -> None:
        self._readout(st.rows)

    # rotation gadgets
    def _inject(self) -> None:
        """Noisy magic state on the ancilla (pivot or source)."""
        a = self.anc
        n = self.noise
        self.dm.reset_magic(a)
        if n.input_kind == "dephasing" or n.twirl:
            self.dm.pauli_channel([(Pauli.Z(a), n.input_z_prob)])
        else:
            third = n.p_in / 3.0
            self.dm.pauli_channel([(Pauli.X(a), third), (Pauli.Y(a), third), (Pauli.Z(a), third)])

    def rotation(self, group: list[Step]) -> None:
        kinds = [g.kind for g in group]
        st = group[0]
        P = self.data_z(st.rows)
        data_qubits = [self.slot(r) for r in st.rows]
        n = self.noise
        if "conjugation" in kinds:
            for _ in range(2):
                self.dm.pauli_channel([(P, n.p_meas)])
                self._memory(data_qubits)
        scheme = self.s.scheme
        a = self.anc
        sign = self.signs[st.column]
        if scheme == "pivot-based":
            self._inject()
            if n.p_inter:
                # two-qubit depolarizing on (source, pivot) during teleportation;
                # after the source is read out this leaves X, Y, Z on the pivot
                # with 4/15 of the rate each
                q = 4.0 * n.p_inter / 15.0
                self.dm.pauli_channel([(Pauli.X(a), q), (Pauli.Y(a), q), (Pauli.Z(a), q)])
            self._pivot_gadget(P, data_qubits, sign, pivot_noise=True)
        elif scheme == "direct-source":
            self._inject()
            self._pivot_gadget(P, data_qubits, sign, pivot_noise=False, joint_depolarizing=n.p_inter)
        else:
            self._inject()
            self._factory_gadget(P, data_qubits, sign)

    def _pivot_gadget(self, P: Pauli, data_qubits, sign: int, pivot_noise: bool,
                      joint_depolarizing: float = 0.0) -> None:
        """Teleport the pivot's |T> onto P.

        The recorded outcome s of P (x) Z_pivot selects the pivot readout: X
        when s equals the column's orientation, Y otherwise. Either way the
        net rotation is exp(i sign THETA P).
        """
        n = self.noise
        a = self.anc
        dm = self.dm
        joint = Pauli(P.x, P.z | (1 << a))
        flip1 = n.p_meas if pivot_noise else 0.0
        flip2 = n.p_meas if pivot_noise else 0.0
        plus, minus = dm.project(joint, 1), dm.project(joint, -1)
        total = None
        for rec in (1, -1):
            basis = Pauli.X(a) if rec == sign else Pauli.Y(a)
            true_s, wrong_s = (plus, minus) if rec == 1 else (minus, plus)
            branch = (1 - flip1) * true_s + flip1 * wrong_s
            sub = DensityMatrix(dm.q, branch)
            sub._cache = dm._cache
            if joint_depolarizing:
                sub.depolarize(data_qubits + [a], joint_depolarizing)
            if pivot_noise:
                sub_mem = n.p_memory
                if sub_mem:
                    if n.memory_scope == "all":
                        sub.depolarize(sorted(self.live | {a}), sub_mem)
                    else:
                        sub.depolarize(data_qubits + [a], sub_mem)
                        sub.depolarize([a], sub_mem)
            sub.measure_with_feedback(basis, flip2, P)
            total = sub.rho if total is None else total + sub.rho
        dm.rho = total

    def _factory_gadget(self, P: Pauli, data_qubits, sign: int) -> None:
        n = self.noise
        a = self.anc
        dm = self.dm
        joint = Pauli(P.x, P.z | (1 << a))
        plus, minus = dm.project(joint, 1), dm.project(joint, -1)
        out = None
        for s, part in ((1, plus), (-1, minus)):
            sub = DensityMatrix(dm.q, part)
            sub._cache = dm._cache
            if n.p_inter:
                sub.depolarize(data_qubits + [a], n.p_inter)
            # source read out in X; a -1 outcome is fixed by the Pauli P
            sub.measure_with_feedback(Pauli.X(a), 0.0, P)
            if s != sign:
                # the rotation came out with the opposite sign; fix it with a
                # pi/4 rotation synthesized from two pivot-assisted measurements
                sub.rotate(P, 2 * sign * THETA)
                for _ in range(2):
                    sub.pauli_channel([(P, n.p_meas)])
                    if n.p_memory:
                        sub.depolarize(data_qubits, n.p_memory)
            out = sub.rho if out is None else out + sub.rho
        dm.rho = out


def _output_state(schedule: CompiledSchedule, noise: NoiseModel, check: bool = False):
    w = _Walker(schedule, noise, check)
    dm = w.run()
    accept = dm.trace()
    if accept <= 1e-15:
        raise SimulationError("post-selection has zero acceptance probability")
    outputs = [schedule.row_slot[r] for r in range(schedule.k_out)]
    rho = dm.reduced(outputs) / accept
    return rho, accept, w


def ideal_target(schedule: CompiledSchedule) -> np.ndarray:
    """Pure output state of the noiseless run (the factory's resource state)."""
    rho, accept, _ = _output_state(schedule, NoiseModel())
    vals, vecs = np.linalg.eigh(rho)
    if vals[-1] < 1 - 1e-8 or abs(accept - 1) > 1e-8:
        raise SimulationError("noiseless run does not produce a deterministic pure output")
    return vecs[:, -1]


def _infidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    return float(max(0.0, 1.0 - np.real(np.vdot(psi, rho @ psi))))


def simulate(schedule: CompiledSchedule, noise: NoiseModel, breakdown: bool = False,
             check_every_step: bool = False) -> SimulationReport:
    """Run the schedule as an exact channel; report output error and acceptance."""
    if schedule.n_slots + 1 > QUBIT_CAP:
        raise SimulationError(f"schedule needs {schedule.n_slots + 1} qubits; cap is {QUBIT_CAP}")
    target = ideal_target(schedule)
    rho, accept, walker = _output_state(schedule, noise, check_every_step)
    p_out = _infidelity(rho, target)
    per_output = []
    k = schedule.k_out
    if k > 1 and schedule.protocol_kind == "t":
        ideal = np.outer(target, target.conj())
        dm_ideal = DensityMatrix(k, ideal)
        dm_out = DensityMatrix(k, rho)
        for i in range(k):
            t_i = dm_ideal.reduced([i])
            vals, vecs = np.linalg.eigh(t_i)
            per_output.append(_infidelity(dm_out.reduced([i]), vecs[:, -1]))
    report = SimulationReport(p_out, accept, per_output, qubits=schedule.n_slots + 1,
                              max_trace_drift=walker.max_drift, schedule_hash=schedule_hash(schedule),
                              noise=_noise_dict(noise))
    if breakdown:
        for src in SOURCES:
            r2, _, _ = _output_state(schedule, noise.without(src))
            report.source_breakdown[src] = max(0.0, p_out - _infidelity(r2, target))
    return report


def _noise_dict(noise: NoiseModel) -> dict:
    return {
        "p_in": noise.p_in, "p_auto": noise.p_auto, "p_intra": noise.p_intra, "p_inter": noise.p_inter,
        "lambda": noise.lam, "p_meas": noise.p_meas, "p_memory": noise.p_memory,
        "input_kind": noise.input_kind, "twirl": noise.twirl, "memory_scope": noise.memory_scope,
        "readout_flips": noise.readout_flips,
    }


# union bound -----------------------------------------------------------------

@dataclass
class UnionBound:
    total: float
    source_term: float
    operation_terms: dict[str, float]


def union_bound(schedule: CompiledSchedule, noise: NoiseModel, poly: FaultPolynomial) -> UnionBound:
    """c * q^t for the injected states plus every operation's full error rate.

    q is the Z-equivalent input fault probability plus the whole inter-module
    rate, since an injection fault acts as a faulty input state.
    """
    q = noise.input_z_prob + noise.p_inter
    if poly.t is not None:
        src = poly.c * q ** poly.t
    else:
        # nothing malignant up to the enumerated weight: bound the rest
        w = poly.w_max + 1
        src = math.comb(poly.n, w) * q ** w if w <= poly.n else 0.0
    ops = {"automorphism": 0.0, "in_module": 0.0}
    for st in schedule.steps:
        if 0 not in st.tracks:
            continue
        if st.cost_key == "automorphism":
            ops["automorphism"] += noise.p_auto * st.expected_units()
        elif st.cost_key == "in_module":
            ops["in_module"] += (noise.p_meas + noise.p_memory) * st.expected_units()
    return UnionBound(src + sum(ops.values()), src, ops)


# noiseless state-vector run ----------------------------------------------------

def noiseless_output(schedule: CompiledSchedule, tol: float = 1e-9) -> np.ndarray:
    """Output state of the noiseless schedule as a state vector.

    Noiseless runs stay pure, so this scales to schedules beyond the
    density-matrix cap. Every readout must hit its expected outcome with
    certainty; recycled slots are returned to |+> after their readout.
    """
    G = schedule.protocol()
    signs = schedule.signs or [1] * G.n
    events = []
    seen = set()
    for st in schedule.steps:
        if 0 not in st.tracks:
            continue
        if st.kind in ROTATION_KINDS:
            if st.column not in seen:
                seen.add(st.column)
                events.append(("rotate", st.column, st.rows))
        elif st.kind in ("measure_out", "final_readout"):
            events.append(("readout", None, st.rows))
    return _state_vector_run(G, signs, schedule.n_slots, schedule.row_slot, events, tol)


def protocol_output(G: TriorthogonalMatrix, signs=None, tol: float = 1e-9) -> np.ndarray:
    """Output state of the bare protocol: one qubit per row, no recycling.

    Independent of any code or compilation, so it serves as the reference
    for recycled schedules.
    """
    signs = list(signs) if signs is not None else list(rotation_signs(G))
    live = [r for r in range(G.m) if G.rows[r]]
    slot = [None] * G.m
    for s, r in enumerate(live):
        slot[r] = s
    events = []
    for j in range(G.n):
        rows = tuple(r for r in live if (G.rows[r] >> j) & 1)
        events.append(("rotate", j, rows))
    events.append(("readout", None, tuple(r for r in live if r >= G.k)))
    return _state_vector_run(G, signs, len(live), slot, events, tol)


def _state_vector_run(G: TriorthogonalMatrix, signs, q: int, slot, events, tol: float) -> np.ndarray:
    if q > 22:
        raise SimulationError(f"{q} slots is too many for the state-vector check")
    idx = np.arange(1 << q, dtype=np.int64)
    psi = np.full(1 << q, 2.0 ** (-q / 2), dtype=complex)

    def parity(mask):
        v = idx & mask
        out = np.zeros_like(v)
        while mask:
            low = mask & -mask
            out ^= (v & low) != 0
            mask ^= low
        return out

    for kind, column, rows in events:
        if kind == "rotate":
            mask = 0
            for r in rows:
                mask |= 1 << slot[r]
            z = 1.0 - 2.0 * parity(mask)
            psi = psi * np.exp(1j * signs[column] * THETA * z)
            continue
        for r in rows:
            s = slot[r]
            want = expected_check_outcome(G.rows[r], signs)
            proj = 0.5 * (psi + want * psi[idx ^ (1 << s)])
            norm = np.vdot(proj, proj).real
            if abs(norm - 1) > tol:
                raise SimulationError(f"noiseless readout of row {r} is not deterministic (p={norm:.6f})")
            psi = proj / math.sqrt(norm)
            if want == -1:
                # return the slot to |+>
                psi = psi * np.where((idx >> s) & 1, -1.0, 1.0)
    outs = [slot[r] for r in range(G.k)]
    # every non-output slot is now |+>; contract it away
    out = np.zeros(1 << len(outs), dtype=complex)
    bits = np.zeros_like(idx)
    for j, s in enumerate(outs):
        bits |= ((idx >> s) & 1) << j
    np.add.at(out, bits, psi)
    return out / np.linalg.norm(out)
