import pytest

from bbmsd.bbcode import build_code, preset
from bbmsd.compiler import (SCHEMES, CompileError, CompileOptions, CompiledSchedule, compile_protocol,
                            optimize_mapping, usable_logicals)
from bbmsd.noise import NoiseTable
from bbmsd.protocol import rotation_signs, shipped_protocol
from bbmsd.resources import timesteps


@pytest.fixture(scope="module")
def gross():
    return build_code(preset("gross"))


@pytest.fixture(scope="module")
def sched15(gross):
    return compile_protocol(shipped_protocol("15-to-1"), gross)


def depth(s, rounds=7):
    return timesteps(s, NoiseTable.timesteps_only(s.code, rounds))


def test_masking_nativizes_15to1(sched15):
    report = "\n".join(str(r) for r in sched15.natives)
    assert sched15.native_count == 15, f"nativity report:\n{report}"
    assert sched15.native_unmasked_count <= 15


def test_masking_off_reduces_natives(gross):
    s = compile_protocol(shipped_protocol("15-to-1"), gross, CompileOptions(masking=False))
    assert s.native_count <= 15
    assert all(not r["mask"] for r in s.natives)


def test_mapping_is_injective(gross):
    G = shipped_protocol("15-to-1")
    m = optimize_mapping(G, gross, "pivot-based", 1, False, 0)
    live = [s for s in m.row_slot if s is not None]
    assert len(set(live)) == len(live)
    assert gross.pivot not in m.slot_to_logical
    assert set(m.slot_to_logical) <= set(usable_logicals(gross, "pivot-based", 1))


def test_every_column_rotated_once(sched15):
    assert sorted(sched15.ordering) == list(range(15))
    inter = [s.column for s in sched15.steps if s.kind == "inter_module"]
    assert sorted(inter) == list(range(15))


def test_pivot_scheme_step_pattern(sched15):
    kinds = [s.kind for s in sched15.steps if s.column == 0]
    assert kinds[-3:] == ["inter_module", "lpu_measure", "pivot_measure"]
    assert sched15.steps[-1].kind == "final_readout"


def test_json_roundtrip(sched15):
    again = CompiledSchedule.from_json(sched15.to_json())
    assert again.to_dict() == sched15.to_dict()
    assert again.protocol().rows == shipped_protocol("15-to-1").rows


def test_signs_recorded(sched15, gross):
    assert sched15.signs == list(rotation_signs(shipped_protocol("15-to-1")))
    G = shipped_protocol("8-to-CCZ")
    s = compile_protocol(G, gross)
    assert s.signs == list(rotation_signs(G))
    with pytest.raises(CompileError):
        compile_protocol(G, gross, signs=[1, 1])


@pytest.mark.parametrize("scheme", SCHEMES)
def test_schemes_compile(gross, scheme):
    s = compile_protocol(shipped_protocol("15-to-1"), gross, CompileOptions(scheme=scheme))
    assert s.scheme == scheme
    assert depth(s) > 0


def test_direct_schemes_are_shorter(gross):
    G = shipped_protocol("15-to-1")
    d = {sch: depth(compile_protocol(G, gross, CompileOptions(scheme=sch))) for sch in SCHEMES}
    assert d["direct-source"] < d["direct-factory"] < d["pivot-based"]


def test_deterministic(gross):
    G = shipped_protocol("20-to-4")
    a = compile_protocol(G, gross, CompileOptions(seed=3)).to_json()
    b = compile_protocol(G, gross, CompileOptions(seed=3)).to_json()
    assert a == b


def test_dual_track(gross):
    G = shipped_protocol("8-to-CCZ")
    single = compile_protocol(G, gross, CompileOptions(tracks=1))
    dual = compile_protocol(G, gross, CompileOptions(tracks=2))
    assert depth(dual) < 2 * depth(single)
    assert len(dual.slot_logical) == 2
    b0, b1 = gross.blocks
    assert set(dual.slot_logical[0]) <= set(b0) and set(dual.slot_logical[1]) <= set(b1)
    pivots = [s for s in dual.steps if s.kind == "pivot_measure"]
    assert pivots and all(s.serialize_prob > 0 and s.tracks == (0, 1) for s in pivots)


def test_option_errors(gross):
    G = shipped_protocol("15-to-1")
    with pytest.raises(CompileError):
        compile_protocol(G, gross, CompileOptions(tracks=3))
    with pytest.raises(CompileError):
        compile_protocol(G, gross, CompileOptions(tracks=2, scheme="direct-factory"))


def test_rounds_knob_shortens(gross):
    G = shipped_protocol("15-to-1")
    s7 = compile_protocol(G, gross, CompileOptions(rounds=7))
    s4 = compile_protocol(G, gross, CompileOptions(rounds=4))
    assert depth(s4, 4) < depth(s7, 7)


def test_recycling_init_and_measure(gross):
    G = shipped_protocol("15-to-1")
    s = compile_protocol(G, gross, CompileOptions(recycle=True))
    kinds = [st.kind for st in s.steps]
    assert kinds.count("init") >= 1
    assert s.recycle
