import math

import numpy as np
import pytest

from bbmsd.bbcode import build_code, preset
from bbmsd.compiler import CompileOptions, compile_protocol
from bbmsd.noise import NoiseModel, NoiseTable
from bbmsd.pauli import Pauli
from bbmsd.protocol import enumerate_faults, shipped_protocol
from bbmsd.simulator import (THETA, DensityMatrix, SimulationError, ideal_target, noiseless_output, postselect,
                             simulate, union_bound)
from oracles import dense_accept


@pytest.fixture(scope="module")
def gross():
    return build_code(preset("gross"))


@pytest.fixture(scope="module")
def scheds(gross):
    return {name: compile_protocol(shipped_protocol(name), gross)
            for name in ("15-to-1", "20-to-4", "8-to-CCZ")}


def table_noise(p_in=1e-3, **kw):
    return NoiseModel.from_table(NoiseTable.lookup("gross", 1e-3), p_in, 0.9, **kw)


def plus_state(q):
    psi = np.full(1 << q, 2 ** (-q / 2), dtype=complex)
    return DensityMatrix.from_state(psi)


def test_rotation_is_unitary():
    dm = plus_state(3)
    dm.rotate(Pauli.from_label("ZZI"), THETA)
    assert dm.trace() == pytest.approx(1.0, abs=1e-12)
    assert np.real(np.trace(dm.rho @ dm.rho)) == pytest.approx(1.0, abs=1e-12)
    dm.check()


def test_single_qubit_magic_rotation():
    dm = plus_state(1)
    dm.rotate(Pauli.Z(0), THETA)
    t = np.array([1, np.exp(1j * math.pi / 4)]) / math.sqrt(2)
    assert np.real(np.vdot(t, dm.rho @ t)) == pytest.approx(1.0, abs=1e-12)


def test_depolarize_trace_and_mixing():
    dm = plus_state(2)
    dm.depolarize([0, 1], 1.0 * 15 / 16)
    assert dm.trace() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(dm.rho, np.eye(4) / 4)


def test_projectors_sum_to_state():
    dm = plus_state(2)
    dm.rotate(Pauli.from_label("XY"), 0.3)
    p = Pauli.from_label("ZZ")
    both = dm.project(p, 1) + dm.project(p, -1)
    assert np.trace(both).real == pytest.approx(1.0)
    # the two branches together are the dephased state
    zz = np.diag([1, -1, -1, 1])
    assert np.allclose(both, (dm.rho + zz @ dm.rho @ zz) / 2)


def test_reduced_trace():
    dm = plus_state(3)
    dm.rotate(Pauli.from_label("ZZZ"), 0.7)
    r = dm.reduced([1])
    assert np.trace(r) == pytest.approx(1.0)


def test_postselect_orthogonal_flagged():
    dm = plus_state(1)
    with pytest.raises(SimulationError):
        postselect(dm, [Pauli.X(0)], [-1])
    out, acc = postselect(dm, [Pauli.X(0)], [1])
    assert acc == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["15-to-1", "20-to-4", "8-to-CCZ"])
def test_zero_noise(scheds, name):
    rep = simulate(scheds[name], NoiseModel())
    assert rep.accept_prob == pytest.approx(1.0, abs=1e-10)
    assert rep.p_out <= 1e-10


@pytest.mark.parametrize("name", ["15-to-1", "20-to-4"])
@pytest.mark.parametrize("p", [1e-1, 1e-2, 1e-3])
def test_dephasing_matches_enumeration_oracle(scheds, name, p):
    G = shipped_protocol(name)
    acc, err = dense_accept(G.to_strings(), G.k, p)
    rep = simulate(scheds[name], NoiseModel(p_in=p, input_kind="dephasing"))
    assert rep.accept_prob == pytest.approx(acc, rel=1e-6)
    # joint output error: any nontrivial output flip pattern
    assert rep.p_out == pytest.approx(err, rel=1e-6)


def test_15to1_cubic_leading_term(scheds):
    p = 1e-3
    rep = simulate(scheds["15-to-1"], NoiseModel(p_in=p, input_kind="dephasing"))
    # leading malignant term of the exact polynomial: 35 weight-3 patterns
    assert rep.p_out == pytest.approx(35 * p**3 * (1 - p) ** 12 / rep.accept_prob, rel=0.01)


def test_trace_drift_small(scheds):
    rep = simulate(scheds["15-to-1"], table_noise(), check_every_step=True)
    assert rep.max_trace_drift <= 1e-10
    assert 0 <= rep.p_out <= 1 and 0 < rep.accept_prob <= 1


@pytest.mark.parametrize("name", ["15-to-1", "20-to-4", "8-to-CCZ"])
def test_union_bound_dominates(scheds, name):
    noise = table_noise()
    rep = simulate(scheds[name], noise)
    ub = union_bound(scheds[name], noise, enumerate_faults(shipped_protocol(name)))
    assert ub.total >= rep.p_out


@pytest.mark.parametrize("field", ["p_in", "p_auto", "p_intra", "p_inter"])
def test_monotone_in_each_rate(scheds, field):
    base = NoiseModel(p_in=1e-3, p_auto=1e-6, p_intra=1e-5, p_inter=1e-3)
    values = [getattr(base, field) * f for f in (0.5, 1.0, 2.0)]
    outs = [simulate(scheds["15-to-1"], NoiseModel(**{**base.__dict__, field: v})).p_out for v in values]
    assert outs[0] < outs[1] < outs[2]


def test_breakdown_sources(scheds):
    rep = simulate(scheds["15-to-1"], table_noise(), breakdown=True)
    assert set(rep.source_breakdown) == {"input", "automorphism", "in_module", "inter_module"}
    assert all(v >= 0 for v in rep.source_breakdown.values())


@pytest.mark.parametrize("name", ["15-to-1", "20-to-4", "8-to-CCZ"])
def test_noiseless_state_vector_matches_target(scheds, name):
    psi = noiseless_output(scheds[name])
    target = ideal_target(scheds[name])
    assert abs(np.vdot(target, psi)) ** 2 == pytest.approx(1.0, abs=1e-10)


def test_ccz_target_is_ccz_state(scheds):
    target = ideal_target(scheds["8-to-CCZ"])
    ccz = np.ones(8, dtype=complex) / math.sqrt(8)
    ccz[7] = -ccz[7]
    # equal up to local Z-type Cliffords fixed by the rotation orientations
    assert np.allclose(np.abs(target), np.abs(ccz))


def test_qubit_cap(gross):
    s = compile_protocol(shipped_protocol("15-to-1"), gross)
    s.slot_logical = [list(range(20))]
    with pytest.raises(SimulationError):
        simulate(s, NoiseModel())


def test_report_serializable(scheds):
    d = simulate(scheds["15-to-1"], table_noise()).to_dict()
    assert d["shots"] == "exact"
    assert d["table_version"]
