import dataclasses
import io
import math

import pytest

from bbmsd.bbcode import BBCodeSpec, build_code, preset
from bbmsd.compiler import Step, compile_protocol
from bbmsd.noise import NoiseModel, NoiseTable
from bbmsd.protocol import shipped_protocol
from bbmsd.simulator import simulate
from bbmsd.resources import (CSV_HEADER, FactoryConfig, ResourceError, ResourceEstimate, TwoRoundPlan,
                             analytic_output, compose_two_round, estimate, physical_qubits, sweep, timesteps)


@pytest.fixture(scope="module")
def gross():
    return build_code(preset("gross"))


@pytest.fixture(scope="module")
def sched15(gross):
    return compile_protocol(shipped_protocol("15-to-1"), gross)


@pytest.fixture(scope="module")
def est15_gross():
    return estimate(FactoryConfig(code="gross", protocol="15-to-1"))


@pytest.fixture(scope="module")
def est15_two():
    return estimate(FactoryConfig(code="two-gross", protocol="15-to-1"))


def test_physical_qubits(gross):
    assert physical_qubits(gross) == 378
    assert physical_qubits(build_code(preset("two-gross"))) == 734


def test_physical_qubits_toy():
    spec = BBCodeSpec(3, 3, ((0, 0), (1, 0), (0, 1)), ((0, 0), (1, 0), (0, 1)), blocks="none")
    assert physical_qubits(build_code(spec)) == 36


def test_empty_schedule_costs_nothing(sched15):
    empty = dataclasses.replace(sched15, steps=[])
    assert timesteps(empty, NoiseTable.lookup("gross", 1e-3)) == 0


def test_generator_plus_measurement(sched15):
    steps = [Step("automorphism", "automorphism", units=1), Step("lpu_measure", "in_module")]
    s = dataclasses.replace(sched15, steps=steps)
    assert timesteps(s, NoiseTable.lookup("gross", 1e-3)) == 14 + 120


def test_rounds_scale_measurement_cost(sched15):
    s = dataclasses.replace(sched15, steps=[Step("lpu_measure", "in_module")])
    assert timesteps(s, NoiseTable.lookup("gross", 1e-3, rounds=4)) == round(120 * 4 / 7)


def test_estimate_invariants():
    est = ResourceEstimate(378, 1000.0, 0.5, 2)
    assert est.tau_i == 2000.0
    assert est.volume == 378 * 2000.0
    assert est.tau_per_output == 1000.0
    with pytest.raises(ResourceError):
        ResourceEstimate(378, 1000.0, 0.0)


def test_zero_noise_tau_equals_steps(sched15):
    sim = simulate(sched15, NoiseModel())
    assert sim.accept_prob == pytest.approx(1.0, abs=1e-10)
    steps = timesteps(sched15, NoiseTable.lookup("gross", 1e-3))
    est = ResourceEstimate(378, steps, min(sim.accept_prob, 1.0))
    assert est.tau_i == pytest.approx(steps, rel=1e-10)


def test_tau_at_least_steps(est15_gross):
    e = est15_gross.estimate
    assert e.tau_i >= e.steps_single_shot
    assert e.accept_prob < 1


def test_15to1_gross_tau(est15_gross):
    assert est15_gross.estimate.tau_i == pytest.approx(6122, rel=0.15)


def test_15to1_two_gross_volume(est15_two):
    assert est15_two.estimate.volume == pytest.approx(8.3e6, rel=0.20)


def test_phys_qubits_independent_of_noise():
    a = estimate(FactoryConfig(code="gross", protocol="15-to-1", p_in=1e-2))
    b = estimate(FactoryConfig(code="gross", protocol="15-to-1", p_in=1e-4))
    assert a.estimate.phys_qubits == b.estimate.phys_qubits == 378


def test_dual_track_per_output_volume():
    single = estimate(FactoryConfig(code="gross", protocol="8-to-CCZ", tracks=1))
    dual = estimate(FactoryConfig(code="gross", protocol="8-to-CCZ", tracks=2))
    assert dual.estimate.outputs_per_batch == 2 * single.estimate.outputs_per_batch
    assert dual.estimate.volume_per_output <= single.estimate.volume_per_output


def test_fewer_rounds_fewer_steps(est15_gross):
    fast = estimate(FactoryConfig(code="gross", protocol="15-to-1", rounds=4))
    assert fast.estimate.steps_single_shot < est15_gross.estimate.steps_single_shot
    assert fast.estimate.tau_i == pytest.approx(3808, rel=0.15)
    assert fast.p_out_sim >= est15_gross.p_out_sim


def test_two_round_requires_matching_input():
    with pytest.raises(ResourceError):
        TwoRoundPlan("cultivation", 1e-6, 454, FactoryConfig(p_in=1e-3))


def test_two_round_unknown_source():
    with pytest.raises(ResourceError):
        TwoRoundPlan.from_source("nonesuch", FactoryConfig())


def test_two_round_ideal_first_round():
    plan = TwoRoundPlan.from_source("ideal", FactoryConfig(code="gross", protocol="15-to-1"), p_out=0.0)
    rep = compose_two_round(plan)
    floor = estimate(FactoryConfig(code="gross", protocol="15-to-1", p_in=0.0))
    assert rep.p_out == pytest.approx(floor.p_out_sim, rel=1e-9)
    assert rep.qubits == 378


def test_two_round_cultivation():
    plan = TwoRoundPlan.from_source("cultivation", FactoryConfig(code="two-gross", protocol="15-to-1"))
    rep = compose_two_round(plan)
    assert rep.qubits == 454 + 734
    assert 8.2e-13 / 5 <= rep.p_out <= 8.2e-13 * 5


def test_analytic_output():
    assert analytic_output(35, 3, 1e-9) == pytest.approx(3.5e-26, rel=1e-12)


def test_sweep_empty_grid():
    text = sweep([])
    assert text.strip() == ",".join(CSV_HEADER)


def test_sweep_matches_estimates():
    cfgs = [FactoryConfig(code="gross", protocol="15-to-1"), FactoryConfig(code="gross", protocol="20-to-4")]
    buf = io.StringIO()
    text = sweep(cfgs, writer=buf)
    assert buf.getvalue() == text
    lines = text.strip().split("\n")
    assert len(lines) == 3
    for line, cfg in zip(lines[1:], cfgs):
        row = dict(zip(CSV_HEADER, line.split(",")))
        rep = estimate(cfg)
        assert math.isclose(float(row["tau_i"]), rep.estimate.tau_i, rel_tol=1e-5)
        assert math.isclose(float(row["p_out_sim"]), rep.p_out_sim, rel_tol=1e-5)


def test_sweep_is_deterministic():
    cfgs = [FactoryConfig(code="gross", protocol="15-to-1")]
    assert sweep(cfgs) == sweep(cfgs)
