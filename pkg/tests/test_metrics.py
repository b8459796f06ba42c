import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tdvmm.devices import ConstantCurrentSink
from tdvmm.engine import design_point_from_params, encode_inputs, simulate_column, size_capacitor
from tdvmm.errors import ConfigurationError, ContractViolation
from tdvmm.metrics import (ContinuousUniform, GridQuantized, PerfModel, TrialBatch, ZERO_IO, aggregate_error,
                           capacitor_energy, compute_error, expand_grid, parse_sampler, performance_estimate,
                           plot_rows, precision, run_design_point, run_trial, sweep, throughput)

T16 = 16e-9
SMALL = {"m_rows": 6, "v_gate_on": 0.3, "t_window": T16}


def dp_of(**kw):
    return design_point_from_params({**SMALL, **kw})


# ---------------------------------------------------------------- error and precision

def test_error_examples():
    assert compute_error(0.3 * T16, 0.3 * T16, T16) == 0.0
    for t in (1e-9, 64e-9):
        assert compute_error(0.486 * t, 0.5 * t, t) == pytest.approx(0.014)
    assert aggregate_error([0.02]) == (0.02, 0.02)


def test_aggregate_rejects_empty():
    with pytest.raises(ContractViolation):
        aggregate_error([])


@pytest.mark.parametrize("e,p", [(0.0074, 6), (0.045, 3), (0.25, 1), (0.9, 0), (1e-12, 32)])
def test_precision_examples(e, p):
    assert precision(e) == p


def test_precision_of_zero_error_is_cap():
    assert precision(0.0) == 32
    assert precision(0.0, cap=4) == 4
    with pytest.raises(ContractViolation):
        precision(-0.1)


@given(a=st.floats(1e-9, 1.0), b=st.floats(1e-9, 1.0))
def test_precision_monotone(a, b):
    lo, hi = sorted((a, b))
    assert precision(lo) >= precision(hi)


@given(a=st.floats(-1e-7, 1e-7), b=st.floats(-1e-7, 1e-7))
def test_error_symmetric(a, b):
    assert compute_error(a, b, T16) == compute_error(b, a, T16)


# ---------------------------------------------------------------- energy and throughput

def test_energy_without_discharge_is_zero():
    total, per = capacitor_energy([0.9, 0.9], 1e-13, 0.9)
    assert total == 0.0 and per.tolist() == [0.0, 0.0]


def test_energy_of_full_double_drain():
    dp = design_point_from_params(dict(m_rows=1, v_gate_on=0.3, t_window=T16, cell_model="ideal",
                                       ideal_i_min=0.0, ideal_i_max=1e-7))
    cap = size_capacitor(dp, 1e-7)
    trace = simulate_column([ConstantCurrentSink(1e-7)], encode_inputs([1.0], T16), dp, cap,
                            replica=[ConstantCurrentSink(1e-7)])
    total, _ = capacitor_energy([trace], cap, dp.v_reset)
    assert total == pytest.approx(2 * cap * dp.v_reset * dp.swing, rel=1e-9)


def test_energy_additive():
    v = np.array([0.6, 0.55, 0.8])
    total, per = capacitor_energy(v, 2e-13, 0.9)
    assert total == pytest.approx(sum(capacitor_energy([x], 2e-13, 0.9)[0] for x in v))
    assert per.sum() == pytest.approx(total)


def test_throughput_example():
    assert throughput(200, 200, T16) == pytest.approx(2.5e12, rel=1e-15)
    assert throughput(200, 200, T16, overhead=32e-9) == pytest.approx(1.25e12)


# ---------------------------------------------------------------- sampling and trials

def test_samplers():
    rng = np.random.default_rng(0)
    vals = GridQuantized(2).draw(rng, 1000)
    assert set(np.round(vals * 3, 12)) <= {0.0, 1.0, 2.0, 3.0}
    assert str(parse_sampler("grid4")) == "grid4"
    assert isinstance(parse_sampler("continuous"), ContinuousUniform)
    with pytest.raises(ConfigurationError):
        parse_sampler("gaussian")
    with pytest.raises(ConfigurationError):
        GridQuantized(0)


def test_trial_streams_independent_of_order():
    dp = dp_of()
    batch = TrialBatch(seed=3, n_trials=4)
    a = run_trial(dp, batch, 2)
    run_trial(dp, batch, 0)
    b = run_trial(dp, batch, 2)
    np.testing.assert_array_equal(a.t_out_sim, b.t_out_sim)


def test_seeded_report_is_identical():
    dp = dp_of(n_cols=3)
    batch = TrialBatch(seed=7, n_trials=6)
    assert run_design_point(dp, batch) == run_design_point(dp, batch)
    assert run_design_point(dp, batch) == run_design_point(dp, batch, jobs=2)
    assert run_design_point(dp, batch) != run_design_point(dp, TrialBatch(seed=8, n_trials=6))


def test_ideal_stubs_hit_integrator_floor():
    dp = dp_of(m_rows=16, cell_model="ideal", ideal_i_min=20e-9, ideal_i_max=120e-9)
    rep = run_design_point(dp, TrialBatch(n_trials=20))
    assert rep.e_out_max < 1e-3
    assert rep.status == "ok" and not rep.flagged


def test_differential_beats_single_ended():
    rep = run_design_point(dp_of(m_rows=16, n_cols=4), TrialBatch(n_trials=10))
    assert rep.e_out_max <= rep.e_single_ended_max


def test_report_fields_consistent():
    dp = dp_of(n_cols=2)
    rep = run_design_point(dp, TrialBatch(n_trials=3))
    assert rep.dynamic_range == pytest.approx(rep.i_max - rep.i_min)
    assert rep.capacitance == pytest.approx(size_capacitor(dp, rep.i_max))
    assert rep.p_out == precision(rep.e_out_max)
    assert rep.n_trials == 3
    assert rep.e_cl_total > 0


# ---------------------------------------------------------------- grids

def test_expand_grid_product_and_zip():
    pts = expand_grid({"a": [1, 2], "b": [3, 4], "c": [5, 6, 7]})
    assert len(pts) == 12
    pts = expand_grid({"a": [1, 2], "b": [3, 4], "c": [5, 6, 7]}, [["a", "b"]])
    assert len(pts) == 6
    assert all(p["b"] == p["a"] + 2 for p in pts)


def test_expand_grid_rejects_ragged_zip():
    with pytest.raises(ConfigurationError):
        expand_grid({"a": [1, 2], "b": [3]}, [["a", "b"]])


def test_sweep_isolates_failures():
    batch = TrialBatch(n_trials=2)
    reps = sweep(SMALL, [{"r_off": 2.5e6}, {"r_off": 2.5e3}], batch)
    assert reps[0].status == "ok"
    assert reps[1].status.startswith("error")
    assert math.isnan(reps[1].e_out_max)


def test_sweep_empty_grid():
    with pytest.raises(ConfigurationError):
        sweep(SMALL, [], TrialBatch(n_trials=1))


def test_sweep_flags_overflow():
    reps = sweep(SMALL, [{"m_rows": 16, "current_exponent": 0.0}], TrialBatch(n_trials=3))
    assert reps[0].status.startswith("flagged")
    assert reps[0].overflow_count > 0


def test_plot_rows_long_form():
    reps = sweep(SMALL, [{"t_window": 16e-9}, {"t_window": 32e-9}], TrialBatch(n_trials=2))
    rows = plot_rows(reps, ["t_window"], ["e_out_max", "p_out"])
    assert len(rows) == 4
    assert {r["metric"] for r in rows} == {"e_out_max", "p_out"}


# ---------------------------------------------------------------- performance estimate

def _estimate(m, perf):
    dp = dp_of(m_rows=m, n_cols=m)
    sim = run_design_point(dp, TrialBatch(n_trials=2), perf)
    return dp, sim, performance_estimate(dp, perf, sim)


def test_zero_io_efficiency():
    dp, sim, est = _estimate(8, ZERO_IO)
    assert est["energy_efficiency"] == pytest.approx(2 * 8 * 8 / sim.e_cl_total, rel=1e-12)
    assert sim.energy_efficiency == pytest.approx(est["energy_efficiency"], rel=1e-12)


def test_estimate_breakdown_sums():
    dp, sim, est = _estimate(8, PerfModel())
    assert est["energy"] == pytest.approx(sum(est["energy_breakdown"].values()))
    assert est["area"] == pytest.approx(sum(est["area_breakdown"].values()))
    assert est["throughput"] == pytest.approx(throughput(8, 8, T16))


def test_capacitor_share_grows_with_size():
    shares = []
    for m in (2, 8, 32):
        _, _, est = _estimate(m, PerfModel())
        shares.append((est["energy_breakdown"]["capacitor"] / est["energy"],
                       est["area_breakdown"]["capacitor"] / est["area"]))
    for k in (0, 1):
        assert shares[0][k] < shares[1][k] < shares[2][k]
    assert shares[0][0] < 0.5 < shares[2][0]


def test_perf_scales_with_bits():
    p = PerfModel()
    assert p.scaled(8).e_tdc == pytest.approx(2 * p.e_tdc)
    assert p.scaled(4) == p


@pytest.mark.xfail(strict=True, reason="supply-side capacitor energy puts the 200x200 point near 0.6 POps/J")
@pytest.mark.slow
def test_efficiency_near_reported_value():
    dp = design_point_from_params(dict(m_rows=200, v_gate_on=0.3, t_window=T16, l_gate=240e-9, r_off=10e6,
                                       c_gd_coupling=0.1e-15))
    sim = run_design_point(dp, TrialBatch(n_trials=2), PerfModel())
    est = performance_estimate(dp, PerfModel(), sim)
    assert 0.75e15 <= est["energy_efficiency"] <= 3e15
