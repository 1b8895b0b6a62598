"""
Reference frames for three-phase quantities
===========================================

A balanced three-phase set is three sinusoids 120 degrees apart. The Clarke
transform folds it onto a rotating two-axis vector and the Park transform
freezes that vector by rotating with the electrical angle.
"""

import math

import numpy as np

from gfm_smc.frames import ThreePhase, clarke, inverse_clarke, inverse_park, park, theta_from_voltage

# one 50 Hz cycle of a 300 V set, sampled every millisecond
omega = 100 * math.pi
t = np.arange(0, 0.02, 1e-3)

print(" t(ms)     u_a      u_b      u_c    alpha     beta       d        q")
for tk in t:
    th = omega * tk
    abc = ThreePhase(*(300 * math.cos(th - k * 2 * math.pi / 3) for k in range(3)))
    ab = clarke(abc)
    dq = park(ab, th)
    print(f"{tk * 1e3:5.1f} {abc.a:8.1f} {abc.b:8.1f} {abc.c:8.1f} "
          f"{ab.alpha:8.1f} {ab.beta:8.1f} {dq.d:8.2f} {dq.q:8.2f}")

# in the dq frame the set is the constant (300, 0)

# The angle can be recovered from the stationary vector itself.
ab = clarke(ThreePhase(0.0, 259.8, -259.8))
print(f"\nangle of {ab}: {theta_from_voltage(ab):.4f} rad")

# Going back: dq -> alpha-beta -> abc. The result has no zero-sequence part,
# so the three phases always sum to zero.
abc = inverse_clarke(inverse_park(park(ab, 0.3), 0.3))
print(f"round trip: {abc}, sum = {abc.a + abc.b + abc.c:.2e}")
