import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from oracles import column_oracle
from tdvmm.devices import CellState, ConstantCurrentSink, IdealSink, solve_cell
from tdvmm.engine import (DesignPoint, design_point_from_params, design_point_params, differential_vmm,
                          encode_inputs, ideal_differential, ideal_output, interleave, output_coefficients,
                          program_array, quantize_output, replica_array, simulate_bank, simulate_column,
                          size_capacitor)
from tdvmm.errors import ConfigurationError, ContractViolation

T16 = 16e-9


def real_dp(m=6, n=1, **kw):
    return design_point_from_params({"m_rows": m, "n_cols": n, "v_gate_on": 0.3, "t_window": T16, **kw})


def stub_dp(m, i_max=100e-9, **kw):
    return design_point_from_params(dict(m_rows=m, n_cols=1, v_gate_on=0.3, t_window=T16, cell_model="ideal",
                                         ideal_i_min=0.0, ideal_i_max=i_max, **kw))


def stub_column(currents, dp, x, i_rep):
    sinks = [ConstantCurrentSink(c) for c in currents]
    cap = size_capacitor(dp, i_rep)
    rep = [ConstantCurrentSink(i_rep)] * dp.m_rows
    return simulate_column(sinks, encode_inputs(x, dp.t_window), dp, cap, replica=rep), cap


# ---------------------------------------------------------------- encoding and sizing

def test_encode_examples():
    assert encode_inputs([0.0, 1.0], 16e-9).durations.tolist() == [0.0, 16e-9]
    assert encode_inputs([0.5], 64e-9).durations[0] == pytest.approx(32e-9)
    with pytest.raises(ContractViolation):
        encode_inputs([1.2], T16)
    with pytest.raises(ContractViolation):
        encode_inputs([-0.1], T16)


def test_capacitor_examples():
    dp = stub_dp(10)
    assert size_capacitor(dp, 136.9e-9) == pytest.approx(109.52e-15, rel=1e-9)
    dp = replace(stub_dp(200), t_window=64e-9)
    assert size_capacitor(dp, 497e-9) == pytest.approx(31.808e-12, rel=1e-9)


def test_capacitor_with_reduced_current_budget():
    dp = design_point_from_params(dict(m_rows=1000, v_gate_on=0.3, t_window=T16, current_exponent=1 / 3,
                                       cell_model="ideal", ideal_i_min=0.0, ideal_i_max=1e-7))
    assert size_capacitor(dp, 1e-7) == pytest.approx(1000 ** (1 / 3) * 1e-7 * T16 / 0.2, rel=1e-12)


@pytest.mark.parametrize("bad", [dict(v_th_neuron=0.9), dict(v_th_neuron=0.0), dict(v_reset=1.1),
                                 dict(t_window=0.0), dict(output_bits=0), dict(m_rows=0),
                                 dict(max_current_scale=1.5)])
def test_design_point_validation(bad):
    params = dict(m_rows=4, v_gate_on=0.3, t_window=T16)
    params.update(bad)
    with pytest.raises(ConfigurationError):
        design_point_from_params(params)


def test_unknown_parameter_rejected():
    with pytest.raises(ConfigurationError):
        design_point_from_params(dict(m_rows=4, v_gate_on=0.3, t_window=T16, bogus=1))


def test_params_round_trip():
    dp = real_dp(8, 3, beta=8, l_gate=240e-9, swing=0.3, c_gd_coupling=1e-16)
    assert design_point_from_params(design_point_params(dp)) == dp


# ---------------------------------------------------------------- closed forms with constant sinks

def test_constant_sink_discharge_is_linear():
    dp = stub_dp(1)
    trace, cap = stub_column([80e-9], dp, [0.75], 100e-9)
    for t in (0.1 * T16, 0.5 * T16, 0.75 * T16):
        v = np.interp(t, trace.times, trace.v_cap)
        assert dp.v_reset - v == pytest.approx(80e-9 * t / cap, rel=1e-9)


def test_constant_sink_output_time():
    dp = stub_dp(4)
    currents = [100e-9, 50e-9, 20e-9, 0.0]
    x = np.array([1.0, 0.4, 0.9, 0.3])
    trace, cap = stub_column(currents, dp, x, 100e-9)
    y = np.dot(currents, x) / (4 * 100e-9)
    assert trace.t_out == pytest.approx(y * T16, abs=1e-9 * T16)
    assert trace.crossing_time == pytest.approx(2 * T16 - y * T16, abs=1e-9 * T16)


def test_charge_conservation():
    rng = np.random.default_rng(5)
    dp = stub_dp(8)
    for _ in range(20):
        currents = rng.uniform(0, 100e-9, 8)
        x = rng.random(8)
        trace, cap = stub_column(currents, dp, x, 100e-9)
        removed = np.dot(currents, x * T16) + 8 * 100e-9 * T16
        assert cap * (dp.v_reset - trace.v_final) == pytest.approx(removed, rel=1e-9)


def test_overflow_iff_charge_exceeds_swing():
    rng = np.random.default_rng(6)
    dp = stub_dp(4)
    seen = set()
    for _ in range(200):
        currents = rng.uniform(0, 200e-9, 4)
        x = rng.random(4)
        trace, cap = stub_column(currents, dp, x, 100e-9)
        charge = np.dot(currents, x * T16)
        if abs(charge / (cap * dp.swing) - 1) < 1e-6:
            continue
        assert trace.overflow == (charge > cap * dp.swing)
        seen.add(trace.overflow)
    assert seen == {True, False}


def test_constant_sink_column_needs_replica():
    dp = stub_dp(1)
    with pytest.raises(ContractViolation):
        simulate_column([ConstantCurrentSink(1e-8)], encode_inputs([1.0], T16), dp, 1e-13)


@pytest.mark.parametrize("m", [4, 16, 64])
def test_stub_array_matches_ideal_math(m):
    rng = np.random.default_rng(m)
    dp = replace(stub_dp(m), n_cols=50)
    w = rng.random((m, 50))
    x = rng.random(m)
    cap = size_capacitor(dp, 100e-9)
    res = simulate_bank(program_array(dp, w), encode_inputs(x, T16), dp, cap)
    np.testing.assert_allclose(res.t_out, T16 * (x @ w) / m, atol=1e-6 * T16)


# ---------------------------------------------------------------- real cells

def test_zero_inputs_give_zero_output():
    dp = real_dp()
    cap = size_capacitor(dp, dp.current_window[1])
    res = simulate_bank(program_array(dp, np.ones((6, 1))), encode_inputs(np.zeros(6), T16), dp, cap)
    assert res.t_out[0] <= 1e-3 * T16


FULL_SCALE_CASES = [
    pytest.param(dict(cell_model="ideal", ideal_i_min=20e-9, ideal_i_max=100e-9), id="sinks"),
    pytest.param(dict(l_gate=240e-9), id="0.3V-240nm"),
    pytest.param(dict(v_gate_on=0.5, r_on=250e3, r_off=2.25e6), id="0.5V-120nm"),
    pytest.param(dict(), id="0.3V-120nm", marks=pytest.mark.xfail(
        strict=True, reason="cell current varies ~13% across the swing; phase I lands 2e-3 T short")),
]


@pytest.mark.parametrize("kw", FULL_SCALE_CASES)
def test_full_inputs_give_full_output(kw):
    dp = real_dp(**kw)
    cap = size_capacitor(dp, dp.current_window[1])
    res = simulate_bank(program_array(dp, np.ones((6, 1))), encode_inputs(np.ones(6), T16), dp, cap)
    assert abs(res.t_out[0] - T16) <= 1e-3 * T16


def _oracle_check(dp, w, x):
    arr = program_array(dp, w)
    cap = size_capacitor(dp, dp.current_window[1])
    res = simulate_bank(arr, encode_inputs(x, dp.t_window), dp, cap)
    cells = [dp.cell.with_r0(r) for r in arr.level[:, 0]]
    rep = dp.cell.with_r0(dp.cell.rram.r_on)
    vg = dp.v_gate_on
    v1, tc, vf = column_oracle(lambda i, v: solve_cell(cells[i], vg, min(max(v, 0.0), 1.0))[0],
                               x * dp.t_window, dp.t_window, cap, dp.v_reset, dp.v_th_neuron,
                               lambda v: dp.m_rows * solve_cell(rep, vg, min(max(v, 0.0), 1.0))[0],
                               c_gd=dp.c_gd_coupling, v_gate=vg)
    return res, v1, tc, vf


@pytest.mark.parametrize("topology", ["source-connected", "drain-connected"])
def test_transient_against_adaptive_ode(topology):
    rng = np.random.default_rng(11)
    dp = real_dp(5, topology=topology, c_gd_coupling=0.1e-15)
    w = rng.random((5, 1))
    x = rng.random(5)
    res, v1, tc, vf = _oracle_check(dp, w, x)
    assert res.v_phase1_end[0] == pytest.approx(v1, abs=1e-9)
    assert abs(res.t_cross[0] - tc) < 1e-6 * T16
    assert res.v_final[0] == pytest.approx(vf, abs=1e-9)


def test_step_halving_is_converged():
    rng = np.random.default_rng(2)
    dp = real_dp(16, 8, c_gd_coupling=0.1e-15)
    fine = replace(dp, steps_per_window=2 * dp.steps_per_window)
    w = rng.random((16, 8))
    x = rng.random(16)
    cap = size_capacitor(dp, dp.current_window[1])
    a = simulate_bank(program_array(dp, w), encode_inputs(x, T16), dp, cap)
    b = simulate_bank(program_array(fine, w), encode_inputs(x, T16), fine, cap)
    assert np.max(np.abs(a.t_out - b.t_out)) < 1e-4 * T16


def test_trace_shape():
    rng = np.random.default_rng(4)
    dp = real_dp(6, c_gd_coupling=0.1e-15)
    arr = program_array(dp, rng.random((6, 1)))
    cells = [dp.cell.with_r0(r) for r in arr.level[:, 0]]
    cap = size_capacitor(dp, dp.current_window[1])
    tr = simulate_column(cells, encode_inputs(rng.random(6), T16), dp, cap)
    assert tr.v_cap[0] == dp.v_reset
    assert tr.phase_boundaries == (0.0, T16, 2 * T16)
    assert np.all(np.diff(tr.times) >= 0)
    for lo, hi in ((0, T16), (T16, 2 * T16)):
        inside = (tr.times >= lo) & (tr.times <= hi)
        assert np.all(np.diff(tr.v_cap[inside]) <= 1e-15)
    assert 0 <= tr.t_out <= T16


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), row=st.integers(0, 5), bump=st.floats(0.01, 0.5))
def test_output_monotone_in_input(seed, row, bump):
    rng = np.random.default_rng(seed)
    dp = real_dp(6, 3)
    arr = program_array(dp, rng.random((6, 3)))
    cap = size_capacitor(dp, dp.current_window[1])
    x = rng.random(6) * 0.5
    x2 = x.copy()
    x2[row] += bump
    a = simulate_bank(arr, encode_inputs(x, T16), dp, cap).t_out
    b = simulate_bank(arr, encode_inputs(x2, T16), dp, cap).t_out
    assert np.all(b >= a - 1e-9 * T16)


# ---------------------------------------------------------------- ideal reference

def test_ideal_coefficients():
    a, b = output_coefficients(np.ones(4), 25.8e-9, 136.9e-9, 4)
    assert a == pytest.approx(0.81154, abs=5e-6)
    assert a + b == pytest.approx(1.0)
    a, b = output_coefficients(np.ones(4), 0.0, 136.9e-9, 4)
    assert (a, b) == (1.0, 0.0)


@given(seed=st.integers(0, 2**31), i_min=st.floats(0, 0.9))
def test_ideal_output_identities(seed, i_min):
    rng = np.random.default_rng(seed)
    m = 7
    assert ideal_output(np.ones(m), np.ones(m), i_min, 1.0, m, T16) == pytest.approx(T16)
    w, x = rng.random(m), rng.random(m)
    assert ideal_output(w, x, 0.0, 1.0, m, T16) == pytest.approx(T16 * (x @ w) / m)


def test_ideal_differential_sweep():
    rng = np.random.default_rng(0)
    i_min, i_max, m = 25.8e-9, 136.9e-9, 9
    for _ in range(10_000):
        wp, wn, x = rng.random(m), rng.random(m), rng.random(m)
        got = ideal_differential(wp, wn, x, i_min, i_max, m, T16)
        expect = 0.0
        for k in range(m):
            expect += (wp[k] - wn[k]) * x[k]
        expect *= (i_max - i_min) / i_max * T16 / m
        assert abs(got - expect) <= 1e-14 * T16


# ---------------------------------------------------------------- differential and quantizer

def test_interleave_pairs_columns():
    wp, wn = np.arange(6.0).reshape(3, 2), -np.arange(6.0).reshape(3, 2)
    w = interleave(wp, wn)
    np.testing.assert_array_equal(w[:, 0::2], wp)
    np.testing.assert_array_equal(w[:, 1::2], wn)


def test_identical_columns_cancel():
    rng = np.random.default_rng(8)
    dp = real_dp(16, 4, c_gd_coupling=0.1e-15)
    w = rng.random((16, 4))
    out = differential_vmm(w, w, rng.random(16), dp)
    assert np.all(np.abs(out.signed) < 2e-3 * T16)


def test_zero_input_gives_exact_zero():
    rng = np.random.default_rng(9)
    dp = real_dp(8, 3)
    out = differential_vmm(rng.random((8, 3)), rng.random((8, 3)), np.zeros(8), dp)
    assert np.all(out.signed == 0.0)


def test_differential_tracks_reference():
    rng = np.random.default_rng(10)
    dp = real_dp(16, 6, l_gate=240e-9, r_off=10e6)
    wp, wn, x = rng.random((16, 6)), rng.random((16, 6)), rng.random(16)
    out = differential_vmm(wp, wn, x, dp)
    i_min, i_max = dp.current_window
    ref = ideal_differential(wp, wn, x, i_min, i_max, 16, T16)
    assert np.max(np.abs(out.signed - ref)) < 0.02 * T16
    np.testing.assert_array_equal(out.relu, np.maximum(out.signed, 0))


def test_quantizer_examples():
    dp = real_dp(output_bits=4)
    a = dp.a_coefficient
    assert quantize_output(0.0, dp) == 0
    assert quantize_output(a * T16, dp) == 15
    assert quantize_output(0.5 * a * T16, dp) == 8


@given(t=st.floats(-2 * T16, 2 * T16), bits=st.integers(1, 12))
def test_quantizer_range(t, bits):
    dp = real_dp(output_bits=bits)
    code = quantize_output(t, dp, a=0.8)
    assert 0 <= code <= 2 ** bits - 1


def test_replica_matches_top_of_window():
    dp = real_dp(4)
    rep = replica_array(dp, 2)
    assert np.all(rep.level == dp.cell.rram.r_on)
    sink = stub_dp(4)
    assert np.all(replica_array(sink, 2).level == sink.cell.i_max)
    assert isinstance(sink.cell, IdealSink)
    assert isinstance(dp.cell, CellState)


def test_mismatch_requires_rng():
    dp = real_dp(4, mismatch_sigma_vt=2e-3)
    with pytest.raises(ContractViolation):
        program_array(dp, np.ones((4, 1)))
    arr = program_array(dp, np.full((4, 1), 0.5), np.random.default_rng(0))
    assert arr.v_t0 is not None and np.std(arr.v_t0) > 0


def test_designpoint_defaults():
    dp = DesignPoint(m_rows=4, n_cols=4, v_gate_on=0.3, t_window=T16)
    assert (dp.v_reset, dp.v_th_neuron, dp.swing) == (0.9, 0.7, pytest.approx(0.2))
    assert dp.calibration_voltage == pytest.approx(0.8)
