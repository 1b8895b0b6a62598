import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfm_smc.frames import ThreePhase, clarke, park
from gfm_smc.plant import (DivergenceError, LinearLoadParams, NonlinearLoadParams,
                           PlantParams, PlantState, SwitchState, Topology, carrier,
                           inverter_voltages, plant_derivatives, pwm_modulate,
                           rectifier_conduction, stored_energy, step)

OPEN = Topology(linear=False, nonlinear=False)
ZERO = ThreePhase(0.0, 0.0, 0.0)


def bridge_matrix_oracle(ss, u_bat):
    m = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]) / 3.0
    return u_bat * m @ np.asarray(ss, float)


@pytest.mark.parametrize("ss", list(itertools.product((0, 1), repeat=3)))
def test_switch_states_match_matrix_and_sum_to_zero(ss):
    u = inverter_voltages(SwitchState(*ss), 700.0)
    assert u.a + u.b + u.c == 0.0
    np.testing.assert_allclose(list(u), bridge_matrix_oracle(ss, 700.0), atol=1e-12)


def test_single_leg_high():
    u = inverter_voltages(SwitchState(1, 0, 0), 700.0)
    assert (u.a, u.b, u.c) == pytest.approx((466.67, -233.33, -233.33), abs=0.01)


def test_switch_state_validation():
    with pytest.raises(ValueError):
        SwitchState(2, 0, 0)


def test_carrier_shape():
    assert carrier(0.0) == 0.0
    assert carrier(0.5) == pytest.approx(1.0)
    assert carrier(0.25) == pytest.approx(0.5)


def duty_by_counting(u_ref, u_bat=700.0, samples=100):
    """Fraction of micro-steps (sampled at their midpoints) with the leg high."""
    highs = 0
    for k in range(samples):
        ss = pwm_modulate(ThreePhase(u_ref, 0.0, 0.0), u_bat, (k + 0.5) / samples)
        highs += ss.ss_a
    return highs / samples


@pytest.mark.parametrize("u_ref,duty", [(0.0, 0.5), (350.0, 1.0), (-175.0, 0.25),
                                        (175.0, 0.75), (-400.0, 0.0)])
def test_pwm_duty_by_counting(u_ref, duty):
    # within one micro-step of the ideal duty
    assert abs(duty_by_counting(u_ref) - duty) <= 0.01 + 1e-12


def test_pwm_rejects_phase_outside_period():
    with pytest.raises(ValueError):
        pwm_modulate(ZERO, 700.0, 1.0)


def test_rectifier_worked_example():
    v, i_ac = rectifier_conduction(ThreePhase(300.0, -150.0, -150.0), 10.0, 0.0,
                                   NonlinearLoadParams())
    assert v == pytest.approx(448.4)
    assert tuple(i_ac) in ((10.0, -10.0, 0.0), (10.0, 0.0, -10.0))


def test_rectifier_blocked():
    _, i_ac = rectifier_conduction(ThreePhase(5.0, 5.0, 5.0), 0.0, 0.0, NonlinearLoadParams())
    assert tuple(i_ac) == (0.0, 0.0, 0.0)


@given(st.lists(st.floats(-500, 500), min_size=3, max_size=3), st.floats(0, 100))
def test_rectifier_currents_sum_to_zero(u, i_dc):
    _, i_ac = rectifier_conduction(ThreePhase(*u), i_dc, 0.0, NonlinearLoadParams())
    assert i_ac.a + i_ac.b + i_ac.c == 0.0


def test_derivatives_zero_at_origin():
    d = plant_derivatives(PlantState(), ZERO, Topology(True, True))
    assert np.all(d.to_array() == 0.0)
    assert d.t == 1.0


def test_inductor_derivative_worked_example():
    s = PlantState(i_L=ThreePhase(1.0, -1.0, 0.0))
    d = plant_derivatives(s, ZERO, OPEN)
    assert tuple(d.i_L) == pytest.approx((-41.6667, 41.6667, 0.0), abs=1e-3)


def test_zero_state_is_preserved():
    s = step(PlantState(), ZERO, 1e-6, Topology(True, True))
    assert np.all(s.to_array() == 0.0)
    assert s.t == pytest.approx(1e-6)


def test_rl_free_decay_matches_exponential():
    # capacitor shorted out of the picture by holding it at zero: with u_C = 0
    # and C_s huge, the inductor sees only R_s
    params = PlantParams(C_s=1e6)
    s = PlantState(i_L=ThreePhase(10.0, -4.0, -6.0))
    for _ in range(1000):
        s = step(s, ZERO, 1e-6, OPEN, params)
    decay = math.exp(-params.R_s * 1e-3 / params.L_s)
    for got, i0 in zip(s.i_L, (10.0, -4.0, -6.0)):
        assert got == pytest.approx(i0 * decay, rel=1e-6)


@pytest.mark.parametrize("topology", [Topology(True, False), Topology(False, False),
                                      Topology(True, True)])
def test_energy_non_increasing_without_sources(topology):
    # inverter legs shorted (u_inv = 0), charged capacitors and moving currents
    s = PlantState(i_L=ThreePhase(5.0, -2.0, -3.0), u_C=ThreePhase(200.0, -50.0, -150.0),
                   i_lin=ThreePhase(3.0, -1.0, -2.0), i_dc=2.0, u_dc=300.0)
    e_prev = stored_energy(s)
    for _ in range(10_000):
        s = step(s, ZERO, 1e-6, topology)
        e = stored_energy(s)
        assert e <= e_prev * (1 + 1e-12)
        e_prev = e


def test_non_finite_state_raises():
    s = PlantState(i_L=ThreePhase(1e308, 0.0, 0.0))
    with pytest.raises(DivergenceError):
        step(s, ThreePhase(1e308, -1e308, 0.0), 1e-6, OPEN)


def test_step_rejects_large_dt():
    with pytest.raises(ValueError):
        step(PlantState(), ZERO, 5e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(50, 400))
def test_dq_trajectory_satisfies_averaged_model(phase, amp):
    # drive the LC filter and RL load with a balanced sinusoid, then check the
    # dq-frame equations with cross-coupling by central differences
    p, lin = PlantParams(), LinearLoadParams()
    w, dt = p.omega, 1e-6
    topo = Topology(True, False)
    s = PlantState(t=0.0)
    rows = []
    for k in range(3000):
        t = k * dt
        th = w * t
        u = ThreePhase(*(amp * math.cos(th + phase - j * 2 * math.pi / 3) for j in range(3)))
        if k >= 2000:
            il = park(clarke(s.i_L), th)
            uc = park(clarke(s.u_C), th)
            io = park(clarke(s.i_lin), th)
            ui = park(clarke(u), th)
            rows.append((*il, *uc, *io, *ui))
        # average input over the step approximated at its midpoint
        tm = t + 0.5 * dt
        um = ThreePhase(*(amp * math.cos(w * tm + phase - j * 2 * math.pi / 3) for j in range(3)))
        s = step(s, um, dt, topo, p, lin)
    r = np.array(rows)
    ild, ilq, ucd, ucq, iod, ioq, ud, uq = r.T
    c = slice(1, -1)
    dild = (ild[2:] - ild[:-2]) / (2 * dt)
    dilq = (ilq[2:] - ilq[:-2]) / (2 * dt)
    ducd = (ucd[2:] - ucd[:-2]) / (2 * dt)
    ducq = (ucq[2:] - ucq[:-2]) / (2 * dt)
    res = [
        p.L_s * dild - (ud[c] - ucd[c] - p.R_s * ild[c] + w * p.L_s * ilq[c]),
        p.L_s * dilq - (uq[c] - ucq[c] - p.R_s * ilq[c] - w * p.L_s * ild[c]),
        p.C_s * ducd - (ild[c] - iod[c] + w * p.C_s * ucq[c]),
        p.C_s * ducq - (ilq[c] - ioq[c] - w * p.C_s * ucd[c]),
    ]
    scales = [np.max(np.abs(ud)) + 1, np.max(np.abs(ud)) + 1,
              np.max(np.abs(ild)) + 1, np.max(np.abs(ild)) + 1]
    for r_, sc in zip(res, scales):
        assert np.max(np.abs(r_)) / sc < 1e-3
