"""
Switching inverter and LC filter in open loop
==============================================

A two-level bridge fed from 700 V drives the LC filter and an RL load. The
bridge only knows two levels per leg, so a triangular carrier at 10 kHz turns
a sinusoidal reference into switch states. Here the modulator runs without
any feedback, and the filtered capacitor voltage is compared with the
reference.
"""

import math

import numpy as np

from gfm_smc.frames import ThreePhase, clarke, park
from gfm_smc.plant import (PlantParams, PlantState, Topology, inverter_voltages,
                           pwm_modulate, step, stored_energy)

params = PlantParams()
dt = 1e-6
u_ref_amp = 300.0
topology = Topology(linear=True, nonlinear=False)

# %%
# The bridge output for each switch state is a fixed 3x3 map of the battery
# voltage. Leg a high, the others low:
from gfm_smc.plant import SwitchState

print("state (1,0,0):", inverter_voltages(SwitchState(1, 0, 0), params.u_bat))

# %%
# Simulate 40 ms. The carrier phase advances by f_s*dt each micro-step.

s = PlantState()
n = 40_000
ucd = np.empty(n)
for k in range(n):
    t = k * dt
    th = params.omega * t
    ref = ThreePhase(*(u_ref_amp * math.cos(th - j * 2 * math.pi / 3) for j in range(3)))
    ss = pwm_modulate(ref, params.u_bat, (t * params.f_s) % 1.0)
    s = step(s, inverter_voltages(ss, params.u_bat), dt, topology, params)
    ucd[k] = park(clarke(s.u_C), th).d

for ms in (5, 10, 20, 30, 40):
    window = ucd[(ms - 1) * 1000:ms * 1000]
    print(f"t = {ms:2d} ms   u_cd mean {window.mean():6.1f} V   ripple {np.ptp(window):5.1f} V")

# Without a controller the capacitor voltage sags below the 300 V reference
# because the load current drops part of it across R_s and L_s. The lightly
# damped LC resonance also keeps the ripple high. Closing the loop fixes both.

print(f"energy stored at 40 ms: {stored_energy(s):.3f} J")
