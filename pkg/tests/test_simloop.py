import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfm_smc import BASELINE_GAINS, Event, Scenario, SmcGains, default_scenario, run_scenario
from gfm_smc.simloop import (DIVERGED_PENALTY, EVENT_KINDS, TRACE_COLUMNS, Simulator, Trace,
                             iae_from_errors, tracking_metrics)

# Frozen reference cost of the untuned baseline on the default scenario.
BASELINE_IAE = 0.3421531


def make_trace(t, ref_d, y_d, ref_q=None, y_q=None):
    z = np.zeros_like(t)
    return Trace(t=t, i_ld_ref=ref_d, i_lq_ref=z if ref_q is None else ref_q, i_ld=y_d,
                 i_lq=z if y_q is None else y_q, u_cd=z, u_cq=z, u_dref=z, u_qref=z, iae=z)


# --- scenario -----------------------------------------------------------------

def test_default_scenario_events():
    sc = default_scenario()
    assert sc.horizon == 0.7
    assert len(sc.events) == 4
    assert {e.kind for e in sc.events} == {"scale_linear", "connect_nonlinear",
                                           "disconnect_linear", "scale_plant"}
    (plant_ev,) = [e for e in sc.events if e.kind == "scale_plant"]
    assert plant_ev.value == 1.4 and plant_ev.time == 0.5
    assert sc.linear_connected and not sc.nonlinear_connected


def test_event_validation():
    with pytest.raises(ValueError):
        Event(0.1, "explode")
    with pytest.raises(ValueError):
        Event(-0.1, "connect_linear")
    with pytest.raises(ValueError):
        Event(0.1, "scale_plant", 0.0)
    with pytest.raises(ValueError):
        Scenario(horizon=0.1, events=(Event(0.2, "connect_linear"),))
    with pytest.raises(ValueError):
        Scenario(dt=3e-6)
    with pytest.raises(ValueError):
        Scenario(dt=0.7e-6)


@settings(max_examples=10, deadline=None)
@given(st.permutations(range(4)))
def test_event_order_does_not_matter(perm):
    events = [Event(0.002, "scale_linear", 0.5), Event(0.004, "connect_nonlinear"),
              Event(0.004, "disconnect_linear"), Event(0.006, "scale_plant", 1.4)]
    base = Scenario(horizon=0.008, events=tuple(events), dc_precharge=500.0)
    shuffled = Scenario(horizon=0.008, events=tuple(events[i] for i in perm),
                        dc_precharge=500.0)
    assert shuffled.events == base.events
    assert run_scenario(BASELINE_GAINS, shuffled).iae == run_scenario(BASELINE_GAINS, base).iae


# --- cost -------------------------------------------------------------------

def test_zero_horizon():
    r = run_scenario(BASELINE_GAINS, default_scenario().with_horizon(0.0), trace=True)
    assert r.iae == 0.0 and not r.diverged
    assert len(r.trace) == 1


def test_synthetic_constant_error():
    n = int(round(0.7 / 50e-6))
    assert iae_from_errors(np.ones(n), np.zeros(n)) == pytest.approx(0.7, rel=1e-12)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50))
def test_iae_is_sum_of_absolute_errors(e):
    e = np.array(e)
    assert iae_from_errors(e, -e) == pytest.approx(2 * 50e-6 * np.abs(e).sum(), rel=1e-12)


def test_baseline_regression_constant():
    r = run_scenario(BASELINE_GAINS, default_scenario())
    assert not r.diverged
    assert r.iae == pytest.approx(BASELINE_IAE, rel=1e-6)


def test_determinism():
    sc = default_scenario().with_horizon(0.25)
    a = run_scenario(BASELINE_GAINS, sc, trace=True)
    b = run_scenario(BASELINE_GAINS, sc, trace=True)
    assert a.iae == b.iae
    for col in TRACE_COLUMNS:
        np.testing.assert_array_equal(getattr(a.trace, col), getattr(b.trace, col))


def test_iae_additive_across_split():
    sc = default_scenario().with_horizon(0.3)
    whole = run_scenario(BASELINE_GAINS, sc).iae
    sim = Simulator(BASELINE_GAINS, sc)
    sim.advance(0.15)
    first = sim.iae
    sim.advance(0.3)
    second = sim.iae - first
    assert 0 < first < whole
    assert abs(first + second - whole) <= 1e-12


def test_running_iae_column_is_monotone():
    r = run_scenario(BASELINE_GAINS, default_scenario().with_horizon(0.1), trace=True)
    assert r.trace.iae[0] == 0.0
    assert np.all(np.diff(r.trace.iae) >= 0)
    assert r.trace.iae[-1] == pytest.approx(r.iae, rel=1e-12)


def test_divergence_is_penalized_with_partial_trace():
    sc = Scenario(horizon=0.02, events=(Event(0.01, "scale_plant", 1e-6),))
    r = run_scenario(BASELINE_GAINS, sc, trace=True)
    assert r.diverged and r.iae == DIVERGED_PENALTY
    assert 0 < len(r.trace) < sc.n_ticks + 1
    assert np.all(np.isfinite(r.trace.i_ld))


def test_penalty_dominates_attainable_cost():
    # currents are bounded well below u_bat / R_s in any non-diverged run
    i_bound = 700.0 / 0.1
    assert DIVERGED_PENALTY > 0.7 * 2 * i_bound


def test_reversed_surface_sign_performs_badly():
    # the surface S = i_ref - i_L with the same law pushes the error away
    sc = default_scenario().with_horizon(0.1)
    good = run_scenario(BASELINE_GAINS, sc).iae
    sim = Simulator(BASELINE_GAINS, sc)
    sim._gains[:2] *= -1.0
    bad = sim.result()
    assert bad.diverged or bad.iae > 20 * good


# --- trace ------------------------------------------------------------------

def test_trace_row_count_and_spacing():
    sc = default_scenario().with_horizon(0.05)
    tr = run_scenario(BASELINE_GAINS, sc, trace=True).trace
    assert len(tr) == math.floor(0.05 / 50e-6) + 1
    np.testing.assert_allclose(np.diff(tr.t), 50e-6, rtol=1e-9)
    assert tr.duty.shape == (len(tr), 3)
    assert np.all((tr.duty >= 0) & (tr.duty <= 1))


def test_trace_csv_round_trip(tmp_path):
    tr = run_scenario(BASELINE_GAINS, default_scenario().with_horizon(0.01), trace=True).trace
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(TRACE_COLUMNS)
    back = Trace.from_csv(path)
    for col in TRACE_COLUMNS:
        np.testing.assert_allclose(getattr(back, col), getattr(tr, col), rtol=1e-8, atol=1e-12)


def test_trace_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        Trace.from_csv(path)


# --- tracking metrics -------------------------------------------------------------

T = np.arange(0, 0.02 + 1e-12, 50e-6)


def test_metrics_perfect_tracking():
    ref = np.where(T >= 0.005, 10.0, 5.0)
    m = tracking_metrics(make_trace(T, ref, ref.copy()), 0.005, 0.02)
    assert m.overshoot == 0.0
    assert m.steady_state_error == 0.0
    assert m.settling_time == 0.0


def test_metrics_first_order_settling():
    tau = 1e-3
    ref = np.ones_like(T)
    y = 1.0 - np.exp(-T / tau)
    ref[0] = 0.0  # the step happens at the first sample
    tr = make_trace(T, ref, y)
    m = tracking_metrics(tr, 50e-6, 0.02)
    # the window opens one sample after the step
    assert m.settling_time + 50e-6 == pytest.approx(3.91 * tau, abs=50e-6)
    assert m.overshoot == 0.0


def test_metrics_ten_percent_overshoot():
    ref = np.full_like(T, 2.0)
    ref[T < 0.005] = 0.0
    y = ref.copy()
    y[(T > 0.006) & (T < 0.007)] = 2.2
    m = tracking_metrics(make_trace(T, ref, y), 0.005, 0.02)
    assert m.overshoot == pytest.approx(10.0)


def test_metrics_without_step_reports_no_overshoot():
    ref = np.full_like(T, 3.0)
    m = tracking_metrics(make_trace(T, ref, ref + 0.01), 0.0, 0.02)
    assert m.overshoot is None
    assert m.steady_state_error == pytest.approx(0.01)


def test_metrics_empty_window():
    ref = np.zeros_like(T)
    with pytest.raises(ValueError):
        tracking_metrics(make_trace(T, ref, ref), 1.0, 2.0)


def test_event_kinds_are_complete():
    assert set(EVENT_KINDS) == {"connect_linear", "disconnect_linear", "scale_linear",
                                "connect_nonlinear", "disconnect_nonlinear", "scale_plant"}


def test_event_kinds_execute():
    events = tuple(Event(0.002 * (i + 1), k, 1.2) for i, k in enumerate(
        ["disconnect_linear", "connect_linear", "scale_linear", "connect_nonlinear",
         "disconnect_nonlinear", "scale_plant"]))
    r = run_scenario(SmcGains(1000, 1000, 0.5), Scenario(horizon=0.014, events=events,
                                                         dc_precharge=500.0))
    assert not r.diverged and r.iae > 0
