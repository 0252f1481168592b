"""Logical error rates and timestep costs of BB-code operations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

BASE_ROUNDS = 7
TABLE_VERSION = "bb-logical-rates/1"

# (code, p_phys) -> kind -> (timesteps, logical error rate)
_TABLE = {
    ("gross", 1e-3): {"automorphism": (14, 10**-6.4), "in_module": (120, 10**-5.0), "inter_module": (120, 10**-2.7)},
    ("gross", 1e-4): {"automorphism": (14, 10**-12.2), "in_module": (120, 10**-9.0), "inter_module": (120, 10**-7.3)},
    ("two-gross", 1e-3): {"automorphism": (14, 10**-14.5), "in_module": (216, 10**-11.0), "inter_module": (216, 10**-9.0)},
    ("two-gross", 1e-4): {"automorphism": (14, 10**-37.0), "in_module": (216, 10**-20.0), "inter_module": (216, 10**-18.0)},
}

# (code, p_phys, rounds) -> (p_meas, p_memory) for in-module measurements with
# fewer syndrome-extraction rounds than the baseline.
_ROUNDS = {
    ("gross", 1e-3, 4): (10**-2.7, 10**-5.5),
    ("gross", 1e-3, 5): (10**-3.5, 10**-5.2),
}

KINDS = ("automorphism", "in_module", "inter_module")


class NoiseTableError(KeyError):
    pass


def _match(p: float, options) -> float | None:
    for q in options:
        if abs(p - q) <= 1e-9 * max(p, q):
            return q
    return None


@dataclass(frozen=True)
class NoiseTable:
    """Timesteps and error rates of one code at one physical error rate."""

    code: str
    p_phys: float
    timesteps: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    rounds: int = BASE_ROUNDS
    # explicit (p_meas, p_memory) split when the rounds knob is set
    split: tuple[float, float] | None = None

    @classmethod
    def lookup(cls, code: str, p_phys: float, rounds: int = BASE_ROUNDS) -> "NoiseTable":
        ps = [p for c, p in _TABLE if c == code]
        if not ps:
            raise NoiseTableError(f"no logical rates for code {code!r}")
        p = _match(p_phys, ps)
        if p is None:
            raise NoiseTableError(f"no logical rates for {code!r} at p_phys={p_phys:g}; have {sorted(ps)}")
        row = _TABLE[(code, p)]
        steps = {kind: row[kind][0] for kind in KINDS}
        rates = {kind: row[kind][1] for kind in KINDS}
        split = None
        if rounds != BASE_ROUNDS:
            key = (code, p, rounds)
            if key not in _ROUNDS:
                raise NoiseTableError(f"no reduced-round rates for {code!r} at p_phys={p_phys:g}, rounds={rounds}")
            split = _ROUNDS[key]
            rates["in_module"] = split[0] + split[1]
            # both measurement kinds run the same syndrome-extraction cycle
            for kind in ("in_module", "inter_module"):
                steps[kind] = round(steps[kind] * rounds / BASE_ROUNDS)
        return cls(code, p, steps, rates, rounds, split)

    @classmethod
    def timesteps_only(cls, code: str, rounds: int = BASE_ROUNDS) -> "NoiseTable":
        """Timesteps of a code without committing to an error-rate row."""
        ps = sorted(p for c, p in _TABLE if c == code)
        if not ps:
            return cls(code, 0.0, {"automorphism": 14, "in_module": 120, "inter_module": 120}, {}, rounds)
        base = _TABLE[(code, ps[0])]
        steps = {kind: base[kind][0] for kind in KINDS}
        if rounds != BASE_ROUNDS:
            for kind in ("in_module", "inter_module"):
                steps[kind] = round(steps[kind] * rounds / BASE_ROUNDS)
        return cls(code, 0.0, steps, {}, rounds)

    def step_cost(self, kind: str) -> int:
        try:
            return self.timesteps[kind]
        except KeyError:
            raise NoiseTableError(f"unknown cost key {kind!r}") from None

    def rate(self, kind: str) -> float:
        try:
            return self.rates[kind]
        except KeyError:
            raise NoiseTableError(f"unknown noise key {kind!r}") from None


def available_tables() -> list[tuple[str, float]]:
    return sorted(_TABLE)


@dataclass(frozen=True)
class NoiseModel:
    """Logical noise rates fed to the simulator and the union bound.

    ``lam`` is the share of the in-module rate realized as outcome flips; the
    rest is depolarizing memory error on the measured support. ``p_meas`` and
    ``p_memory`` override that split when both are given.
    """

    p_in: float = 0.0
    p_auto: float = 0.0
    p_intra: float = 0.0
    p_inter: float = 0.0
    lam: float = 0.9
    input_kind: str = "depolarizing"
    twirl: bool = True
    p_meas_override: float | None = None
    p_memory_override: float | None = None
    memory_scope: str = "support"
    readout_flips: bool = True

    def __post_init__(self):
        for name in ("p_in", "p_auto", "p_intra", "p_inter", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.input_kind not in ("dephasing", "depolarizing"):
            raise ValueError(f"unknown input kind {self.input_kind!r}")
        if self.memory_scope not in ("support", "all"):
            raise ValueError(f"unknown memory scope {self.memory_scope!r}")

    @property
    def p_meas(self) -> float:
        if self.p_meas_override is not None:
            return self.p_meas_override
        return self.lam * self.p_intra

    @property
    def p_memory(self) -> float:
        if self.p_memory_override is not None:
            return self.p_memory_override
        return (1.0 - self.lam) * self.p_intra

    @property
    def input_z_prob(self) -> float:
        """Probability of a Z-equivalent fault on an injected magic state."""
        if self.input_kind == "dephasing":
            return self.p_in
        # X and Y components twirl to Z with probability 1/2 each
        return 2.0 * self.p_in / 3.0

    @classmethod
    def from_table(cls, table: NoiseTable, p_in: float, lam: float = 0.9, **kw) -> "NoiseModel":
        extra = {}
        if table.split is not None:
            extra = {"p_meas_override": table.split[0], "p_memory_override": table.split[1]}
        return cls(
            p_in=p_in,
            p_auto=table.rate("automorphism"),
            p_intra=table.rate("in_module"),
            p_inter=table.rate("inter_module"),
            lam=lam,
            **extra,
            **kw,
        )

    def without(self, source: str) -> "NoiseModel":
        """Copy with one noise source switched off."""
        if source == "input":
            return replace(self, p_in=0.0)
        if source == "automorphism":
            return replace(self, p_auto=0.0)
        if source == "in_module":
            return replace(self, p_intra=0.0, p_meas_override=None if self.p_meas_override is None else 0.0,
                           p_memory_override=None if self.p_memory_override is None else 0.0)
        if source == "inter_module":
            return replace(self, p_inter=0.0)
        raise ValueError(f"unknown noise source {source!r}")

    def is_zero(self) -> bool:
        return self.p_in == self.p_auto == self.p_inter == 0.0 and self.p_meas == self.p_memory == 0.0


SOURCES = ("input", "automorphism", "in_module", "inter_module")
