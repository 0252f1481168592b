import dataclasses

import pytest

from bbmsd.bbcode import build_code, preset
from bbmsd.compiler import CompileOptions, compile_protocol
from bbmsd.compressor import (ColPerm, CompressionError, RowAdd, RowPermWithinBlocks, compress,
                              emit_recycled_schedule, op_from_dict, op_to_dict, replay, slot_reuse_valid,
                              verify_equivalence)
from bbmsd.protocol import TriorthogonalMatrix, enumerate_faults, footprint, rotation_signs, shipped_protocol


@pytest.fixture(scope="module")
def gross():
    return build_code(preset("gross"))


@pytest.fixture(scope="module")
def two_gross():
    return build_code(preset("two-gross"))


@pytest.fixture(scope="module")
def c49():
    G = shipped_protocol("49-to-1")
    return G, compress(G, target=7, budget=100_000, seed=0, restarts=8)


def test_15to1(gross):
    G = shipped_protocol("15-to-1")
    r = compress(G, budget=5000, seed=0)
    assert r.footprint_before == 5
    # row additions reach one qubit below the column-permutation optimum
    assert r.footprint_after == 4
    assert verify_equivalence(G, r, code=gross).passed


@pytest.mark.parametrize("name", ["15-to-1", "20-to-4", "8-to-CCZ"])
def test_result_invariants(name):
    G = shipped_protocol(name)
    r = compress(G, budget=3000, seed=1)
    assert replay(G, r.ops_log).rows == r.g_prime.rows
    assert r.footprint_after == footprint(r.g_prime).peak <= r.footprint_before
    assert r.g_prime.k == G.k
    assert all(b <= a for a, b in zip(r.history, r.history[1:]))
    assert all(op.src >= G.k for op in r.ops_log if isinstance(op, RowAdd))
    assert slot_reuse_valid(r.g_prime, r.reuse_map)


def test_deterministic_given_seed():
    G = shipped_protocol("20-to-4")
    a = compress(G, budget=2000, seed=4)
    b = compress(G, budget=2000, seed=4)
    assert a.to_dict() == b.to_dict()


def test_ops_roundtrip():
    ops = [ColPerm((2, 0, 1)), RowPermWithinBlocks((0, 2, 1)), RowAdd(2, 0)]
    assert [op_from_dict(op_to_dict(op)) for op in ops] == ops
    with pytest.raises(CompressionError):
        op_from_dict({"op": "transpose"})


def test_move_guards():
    with pytest.raises(CompressionError):
        RowAdd(0, 1).apply([0b11, 0b01], 1)
    with pytest.raises(CompressionError):
        RowPermWithinBlocks((1, 0)).apply([0b11, 0b01], 1)


def test_identity_compression_passes():
    G = shipped_protocol("8-to-CCZ")
    r = compress(G, budget=0)
    assert r.ops_log == [] or replay(G, r.ops_log).rows == G.rows
    assert verify_equivalence(G, r).passed


def test_corrupt_move_named_failure():
    G = shipped_protocol("15-to-1")
    r = compress(G, budget=500)
    rows = list(r.g_prime.rows)
    rows[1] ^= rows[0]  # odd row into a check row breaks its parity
    bad = dataclasses.replace(r, g_prime=r.g_prime.with_rows(rows))
    rep = verify_equivalence(G, bad)
    assert not rep.passed
    assert "triorthogonal" in rep.failures()
    assert "triorthogonal" in str(rep)


def test_compressed_49to1(c49, two_gross):
    G, r = c49
    assert r.footprint_before == 13
    assert r.footprint_after <= 7
    rep = verify_equivalence(G, r, code=two_gross)
    assert rep.passed, str(rep)
    assert set(rep.checks) == {"triorthogonal", "row_spaces", "fault_polynomial", "channel"}


def test_compressed_64to2ccz(gross):
    G = shipped_protocol("64-to-2CCZ")
    r = compress(G, target=10, budget=100_000, seed=0, restarts=8)
    assert r.footprint_before == 17
    assert r.footprint_after <= 10
    assert r.g_prime.kind == "ccz" and r.g_prime.groups == G.groups
    rep = verify_equivalence(G, r, code=gross)
    assert rep.passed, str(rep)


def test_compressed_49to1_malignant_counts(c49):
    G, r = c49
    a, b = enumerate_faults(G, 5), enumerate_faults(r.g_prime, 5)
    assert [a.malignant(w) for w in range(6)] == [b.malignant(w) for w in range(6)]


def test_recycled_49to1_fits_two_gross(c49, two_gross):
    _, r = c49
    s = emit_recycled_schedule(r, two_gross)
    assert s.recycle and s.n_slots <= 11
    assert slot_reuse_valid(r.g_prime, r.reuse_map)


def test_capacity_exceeded(c49, gross):
    G, r = c49
    big = dataclasses.replace(r, footprint_after=12)
    with pytest.raises(CompressionError):
        emit_recycled_schedule(big, gross)


def test_no_recyclable_rows_same_schedule(gross):
    # both rows span the full width, so recycling has nothing to reuse
    G = TriorthogonalMatrix.from_strings(["1111111", "1000001"], 1)
    r = dataclasses.replace(compress(G, budget=0), g_prime=G, signs=list(rotation_signs(G)))
    a = emit_recycled_schedule(r, gross)
    b = compile_protocol(r.g_prime, gross, CompileOptions(recycle=False), signs=r.signs)
    assert [s.to_dict() for s in a.steps] == [s.to_dict() for s in b.steps]


def test_slot_reuse_checker_catches_overlap():
    G = shipped_protocol("15-to-1")
    assert not slot_reuse_valid(G, [0] * G.m)
