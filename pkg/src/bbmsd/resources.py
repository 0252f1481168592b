"""Physical footprint, timesteps, space-time volume and factory composition."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .bbcode import BBCode, build_code, load_code_spec, preset, PRESETS
from .compiler import CompileOptions, CompiledSchedule, compile_protocol, usable_logicals
from .noise import BASE_ROUNDS, NoiseModel, NoiseTable
from .protocol import (
    FaultPolynomial,
    TriorthogonalMatrix,
    enumerate_faults,
    footprint,
    load_protocol,
    shipped_protocol,
    SHIPPED,
)
from .simulator import QUBIT_CAP, SimulationReport, UnionBound, simulate, union_bound


class ResourceError(ValueError):
    pass


# External reference rows (lattice-surgery distillation and cultivation on the
# surface code), kept only for side-by-side output. Not computed here.
BASELINES = (
    {"factory": "(15-to-1) SC(17,7,7)", "p_phys": 1e-3, "p_in": 1e-3, "qubits": 4620, "tau_i": 256,
     "volume": 1.2e6, "p_out": 4.5e-8},
    {"factory": "(Cultivation) SC d=3", "p_phys": 1e-3, "p_in": 1e-3, "qubits": 454, "tau_i": 351,
     "volume": 1.6e5, "p_out": 3e-6},
    {"factory": "(Cultivation) SC d=5", "p_phys": 1e-3, "p_in": 1e-3, "qubits": 463, "tau_i": 2167,
     "volume": 1.0e6, "p_out": 2e-9},
    {"factory": "(15-to-1) SC(11,5,5)", "p_phys": 1e-4, "p_in": 1e-4, "qubits": 2070, "tau_i": 180,
     "volume": 3.7e5, "p_out": 1.9e-11},
    {"factory": "(15-to-1) SC(11,5,5) + (15-to-1) SC(25,11,11)", "p_phys": 1e-3, "p_in": 1e-3,
     "qubits": 12420 + 18280, "tau_i": 495, "volume": 9.1e6, "p_out": 2.7e-12},
)

# first-round sources for two-round factories: (qubits, p_out) per p_phys
CULTIVATION = {
    "cultivation": {"qubits": 454, "p_out": 1e-6},
    "cultivation-d5": {"qubits": 463, "p_out": 2e-9},
}

CSV_HEADER = ("factory", "code", "protocol", "scheme", "tracks", "p_phys", "p_in", "lambda", "qubits",
              "steps", "accept_prob", "tau_i", "volume", "union_bound", "p_out_sim")


def physical_qubits(code: BBCode) -> int:
    """Data plus check qubits of the block and the attached LPU."""
    return code.physical_qubits


def timesteps(schedule: CompiledSchedule, table: NoiseTable) -> float:
    """Expected single-shot duration: every step's units times its cost."""
    return sum(st.expected_units() * table.step_cost(st.cost_key) for st in schedule.steps if st.cost_key)


def outputs_per_batch(schedule: CompiledSchedule) -> int:
    per_track = schedule.k_out if schedule.protocol_kind == "t" else max(1, len(schedule.groups))
    return per_track * schedule.tracks


@dataclass(frozen=True)
class ResourceEstimate:
    phys_qubits: int
    steps_single_shot: float
    accept_prob: float
    outputs_per_batch: int = 1

    def __post_init__(self):
        if not 0 < self.accept_prob <= 1 + 1e-12:
            raise ResourceError(f"accept_prob {self.accept_prob} outside (0, 1]")

    @property
    def tau_i(self) -> float:
        """Expected steps per accepted batch (whole-batch restart on discard)."""
        return self.steps_single_shot / min(self.accept_prob, 1.0)

    @property
    def volume(self) -> float:
        return self.phys_qubits * self.tau_i

    @property
    def tau_per_output(self) -> float:
        return self.tau_i / self.outputs_per_batch

    @property
    def volume_per_output(self) -> float:
        return self.volume / self.outputs_per_batch

    def to_dict(self) -> dict:
        return {
            "phys_qubits": self.phys_qubits, "steps_single_shot": self.steps_single_shot,
            "accept_prob": self.accept_prob, "tau_i": self.tau_i, "volume": self.volume,
            "outputs_per_batch": self.outputs_per_batch, "tau_per_output": self.tau_per_output,
            "volume_per_output": self.volume_per_output,
        }


# factory configuration ---------------------------------------------------------

@dataclass(frozen=True)
class FactoryConfig:
    code: str = "gross"  # preset name or code spec path
    protocol: str = "15-to-1"  # shipped name or protocol file path
    scheme: str = "pivot-based"
    tracks: int = 1
    recycle: bool | None = None
    rounds: int = BASE_ROUNDS
    p_phys: float = 1e-3
    p_in: float = 1e-3
    lam: float = 0.9
    input_kind: str = "depolarizing"
    readout_flips: bool = True
    compress: bool | None = None  # None: compress only when the protocol does not fit
    compress_budget: int = 100_000
    compress_restarts: int = 8
    compress_patience: int = 10_000  # stop a restart after this many iterations without a lower peak
    seed: int = 0
    tsp_method: str = "auto"
    simulate: bool | None = None  # None: simulate when within the qubit cap
    w_max: int | None = None
    name: str = ""

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        tr = "x2" if self.tracks == 2 else ""
        return f"({self.protocol}){tr} {self.code_name}"

    @property
    def code_name(self) -> str:
        return self.code if self.code in PRESETS else Path(self.code).stem

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def resolve_code(ref: str) -> BBCode:
    if ref in PRESETS:
        return build_code(preset(ref))
    path = Path(ref)
    if not path.exists():
        raise ResourceError(f"unknown code {ref!r}: not a preset ({', '.join(PRESETS)}) or a file")
    return build_code(load_code_spec(path))


def resolve_protocol(ref: str) -> TriorthogonalMatrix:
    if ref in SHIPPED:
        return shipped_protocol(ref)
    path = Path(ref)
    if not path.exists():
        raise ResourceError(f"unknown protocol {ref!r}: not shipped ({', '.join(SHIPPED)}) or a file")
    return load_protocol(path)


_CODE_CACHE: dict[str, BBCode] = {}


def _code(ref: str) -> BBCode:
    if ref not in _CODE_CACHE:
        _CODE_CACHE[ref] = resolve_code(ref)
    return _CODE_CACHE[ref]


@dataclass
class FactoryReport:
    config: FactoryConfig
    estimate: ResourceEstimate
    union: UnionBound
    poly: FaultPolynomial
    schedule: CompiledSchedule
    simulation: SimulationReport | None = None
    compression: object | None = None

    @property
    def p_out_sim(self) -> float | None:
        return self.simulation.p_out if self.simulation else None

    def csv_row(self) -> dict:
        c, e = self.config, self.estimate
        return {
            "factory": c.label, "code": c.code_name, "protocol": c.protocol, "scheme": c.scheme,
            "tracks": c.tracks, "p_phys": f"{c.p_phys:.6g}", "p_in": f"{c.p_in:.6g}", "lambda": f"{c.lam:.6g}",
            "qubits": e.phys_qubits, "steps": f"{e.steps_single_shot:.6g}", "accept_prob": f"{e.accept_prob:.10g}",
            "tau_i": f"{e.tau_i:.6g}", "volume": f"{e.volume:.6g}", "union_bound": f"{self.union.total:.6g}",
            "p_out_sim": "" if self.p_out_sim is None else f"{self.p_out_sim:.6g}",
        }

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "estimate": self.estimate.to_dict(),
            "union_bound": {"total": self.union.total, "source": self.union.source_term,
                            **self.union.operation_terms},
            "fault_polynomial": {"t": self.poly.t, "c": self.poly.c, "w_max": self.poly.w_max},
            "p_out_sim": self.p_out_sim,
            "compressed_footprint": getattr(self.compression, "footprint_after", None),
        }


def prepare_protocol(config: FactoryConfig, code: BBCode, G: TriorthogonalMatrix | None = None):
    """Load the protocol and compress it if it does not fit the code."""
    from .compressor import compress

    G = G if G is not None else resolve_protocol(config.protocol)
    capacity = len(usable_logicals(code, config.scheme, config.tracks))
    want = config.compress
    if want is None:
        want = G.m > capacity and footprint(G).peak > capacity
    result = None
    if want:
        # aim for the smallest footprint, not just one that fits: every live slot is simulated
        result = compress(G, target=None, budget=config.compress_budget, seed=config.seed,
                          restarts=config.compress_restarts, patience=config.compress_patience)
        G = result.g_prime
    if footprint(G).peak > capacity:
        raise ResourceError(f"protocol {config.protocol} needs {footprint(G).peak} logical qubits; "
                            f"{capacity} available")
    return G, result


def noise_model(config: FactoryConfig, code_name: str) -> tuple[NoiseModel, NoiseTable]:
    table = NoiseTable.lookup(code_name, config.p_phys, config.rounds)
    noise = NoiseModel.from_table(table, config.p_in, config.lam, input_kind=config.input_kind,
                                  readout_flips=config.readout_flips)
    return noise, table


def estimate(config: FactoryConfig, G: TriorthogonalMatrix | None = None) -> FactoryReport:
    """Compile, simulate and cost one factory configuration."""
    code = _code(config.code)
    G, comp = prepare_protocol(config, code, G)
    opts = CompileOptions(scheme=config.scheme, tracks=config.tracks, recycle=config.recycle,
                          rounds=config.rounds, tsp_method=config.tsp_method, seed=config.seed)
    schedule = compile_protocol(G, code, opts, signs=comp.signs if comp is not None else None)
    noise, table = noise_model(config, code.name)
    poly = enumerate_faults(G, config.w_max)
    ub = union_bound(schedule, noise, poly)
    run = config.simulate
    if run is None:
        run = schedule.n_slots + 1 <= QUBIT_CAP
    sim = simulate(schedule, noise) if run else None
    accept = sim.accept_prob if sim else poly.accept_prob(noise.input_z_prob)
    est = ResourceEstimate(physical_qubits(code), timesteps(schedule, table), accept, outputs_per_batch(schedule))
    return FactoryReport(config, est, ub, poly, schedule, sim, comp)


# two-round factories -----------------------------------------------------------

@dataclass(frozen=True)
class TwoRoundPlan:
    round1_kind: str
    round1_p_out: float
    round1_qubits: int
    round2: FactoryConfig

    def __post_init__(self):
        if not math.isclose(self.round2.p_in, self.round1_p_out, rel_tol=1e-12, abs_tol=0.0):
            raise ResourceError("second-round input error must equal the first-round output error")

    @classmethod
    def from_source(cls, source: str, round2: FactoryConfig, p_out: float | None = None,
                    qubits: int | None = None) -> "TwoRoundPlan":
        base = CULTIVATION.get(source, {})
        if p_out is None and "p_out" not in base:
            raise ResourceError(f"unknown first-round source {source!r}; give p_out explicitly")
        p1 = base["p_out"] if p_out is None else p_out
        q1 = base.get("qubits", 0) if qubits is None else qubits
        return cls(source, p1, q1, replace(round2, p_in=p1))


@dataclass
class TwoRoundReport:
    plan: TwoRoundPlan
    round2: FactoryReport

    @property
    def qubits(self) -> int:
        return self.plan.round1_qubits + self.round2.estimate.phys_qubits

    @property
    def volume(self) -> float:
        return self.round2.estimate.volume

    @property
    def p_out(self) -> float | None:
        return self.round2.p_out_sim

    def to_dict(self) -> dict:
        return {
            "round1": {"kind": self.plan.round1_kind, "p_out": self.plan.round1_p_out,
                       "qubits": self.plan.round1_qubits},
            "round2": self.round2.to_dict(),
            "qubits": self.qubits, "round2_volume": self.volume, "p_out": self.p_out,
        }


def compose_two_round(plan: TwoRoundPlan) -> TwoRoundReport:
    return TwoRoundReport(plan, estimate(plan.round2))


def analytic_output(c: int, t: int, p_in: float) -> float:
    return c * p_in**t


# sweeps ------------------------------------------------------------------------

def _row(cfg: FactoryConfig) -> dict:
    return estimate(cfg).csv_row()


def sweep(configs, writer=None, workers: int = 1) -> str:
    """Evaluate each configuration and return CSV text in input order."""
    configs = list(configs)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row, configs))
    else:
        rows = [_row(c) for c in configs]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if writer is not None:
        writer.write(text)
    return text


def table_one_grid() -> list[FactoryConfig]:
    """BB-code rows of the reference comparison at p_phys = 1e-3."""
    return [
        FactoryConfig(code="gross", protocol="8-to-CCZ", tracks=2, p_phys=1e-3, p_in=1e-3),
        FactoryConfig(code="gross", protocol="15-to-1", p_phys=1e-3, p_in=1e-3),
        FactoryConfig(code="gross", protocol="20-to-4", p_phys=1e-3, p_in=1e-3),
        FactoryConfig(code="two-gross", protocol="15-to-1", p_phys=1e-3, p_in=1e-3),
        FactoryConfig(code="two-gross", protocol="49-to-1", p_phys=1e-3, p_in=1e-3),
    ]
