"""
Switched plant: two-level inverter, LC filter, RL load and diode-rectifier load.

All dynamics are written per phase in the abc frame::

    L_s di_L/dt = u_inv - u_C - R_s i_L
    C_s du_C/dt = i_L - i_0
    L_l di_l/dt = u_C - R_l i_l                 (linear load, if connected)
    L_n di_dc/dt = u_bridge - u_dc              (while the bridge conducts)
    C_n du_dc/dt = i_dc - u_dc / R_n

with ``i_0 = i_l + i_ac`` the current drawn at the filter capacitor bus. The dq
cross-coupling terms appear only after the Park rotation and are handled by the
controller.

The plant state is a flat float64 vector (see the ``X_*`` offsets) so the
numba kernels below can be reused unchanged by the scenario loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .frames import ThreePhase

__all__ = [
    "DivergenceError",
    "PlantParams",
    "LinearLoadParams",
    "NonlinearLoadParams",
    "Topology",
    "SwitchState",
    "PlantState",
    "inverter_voltages",
    "carrier",
    "pwm_modulate",
    "rectifier_conduction",
    "plant_derivatives",
    "step",
    "stored_energy",
]

# state vector offsets
X_IL = 0
X_UC = 3
X_ILIN = 6
X_IDC = 9
X_UDC = 10
N_STATES = 11

# parameter vector offsets
P_LS = 0
P_RS = 1
P_CS = 2
P_UBAT = 3
P_FS = 4
P_RL = 5
P_LL = 6
P_LN = 7
P_CN = 8
P_RN = 9
P_UF = 10
N_PARAMS = 11


class DivergenceError(FloatingPointError):
    """Raised when the integrated plant state becomes non-finite."""


@dataclass(frozen=True)
class PlantParams:
    """Inverter and LC-filter parameters (defaults from the system table)."""

    L_s: float = 2.4e-3
    R_s: float = 0.1
    C_s: float = 15e-6
    u_bat: float = 700.0
    f_s: float = 10e3
    omega: float = 100.0 * math.pi

    def __post_init__(self):
        if not (self.L_s > 0 and self.C_s > 0 and self.R_s >= 0
                and self.u_bat > 0 and self.f_s > 0):
            raise ValueError(f"invalid plant parameters: {self}")


@dataclass(frozen=True)
class LinearLoadParams:
    """Per-phase series RL load. ``L_l = 0`` gives a purely resistive load."""

    R_l: float = 9.0
    L_l: float = 3e-3

    def __post_init__(self):
        if not (self.R_l > 0 and self.L_l >= 0):
            raise ValueError(f"invalid linear load: {self}")


@dataclass(frozen=True)
class NonlinearLoadParams:
    """Diode bridge with an L_n-C_n || R_n dc link."""

    L_n: float = 1.8e-3
    C_n: float = 2.2e-3
    R_n: float = 460.0
    u_f: float = 0.8

    def __post_init__(self):
        if not (self.L_n > 0 and self.C_n > 0 and self.R_n > 0 and self.u_f >= 0):
            raise ValueError(f"invalid nonlinear load: {self}")


@dataclass(frozen=True)
class Topology:
    linear: bool = True
    nonlinear: bool = False


@dataclass(frozen=True)
class SwitchState:
    ss_a: int
    ss_b: int
    ss_c: int

    def __post_init__(self):
        for v in (self.ss_a, self.ss_b, self.ss_c):
            if v not in (0, 1):
                raise ValueError("switch states must be 0 or 1")

    def __iter__(self):
        return iter((self.ss_a, self.ss_b, self.ss_c))


_ZERO3 = ThreePhase(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PlantState:
    """Continuous plant states. ``t`` is the simulation time in seconds."""

    i_L: ThreePhase = _ZERO3
    u_C: ThreePhase = _ZERO3
    i_lin: ThreePhase = _ZERO3
    i_dc: float = 0.0
    u_dc: float = 0.0
    t: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([*self.i_L, *self.u_C, *self.i_lin, self.i_dc, self.u_dc],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, x, t: float = 0.0) -> "PlantState":
        x = [float(v) for v in x]
        return cls(ThreePhase(*x[0:3]), ThreePhase(*x[3:6]), ThreePhase(*x[6:9]),
                   x[9], x[10], float(t))


def param_vector(plant: PlantParams, linear: LinearLoadParams,
                 nonlinear: NonlinearLoadParams) -> np.ndarray:
    p = np.empty(N_PARAMS)
    p[P_LS] = plant.L_s
    p[P_RS] = plant.R_s
    p[P_CS] = plant.C_s
    p[P_UBAT] = plant.u_bat
    p[P_FS] = plant.f_s
    p[P_RL] = linear.R_l
    p[P_LL] = linear.L_l
    p[P_LN] = nonlinear.L_n
    p[P_CN] = nonlinear.C_n
    p[P_RN] = nonlinear.R_n
    p[P_UF] = nonlinear.u_f
    return p


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _switch_voltages(sa, sb, sc, u_bat):
    k = u_bat / 3.0
    return (k * (2.0 * sa - sb - sc),
            k * (-sa + 2.0 * sb - sc),
            k * (-sa - sb + 2.0 * sc))


@njit(cache=True, nogil=True)
def _carrier(phase):
    # symmetric triangle in [0, 1], minimum at phase 0
    if phase < 0.5:
        return 2.0 * phase
    return 2.0 * (1.0 - phase)


@njit(cache=True, nogil=True)
def _high_measure(m, phi):
    # carrier-phase measure of {c < m} on [0, phi]; per period the high set is
    # [0, m/2) U (1 - m/2, 1)
    whole = math.floor(phi)
    f = phi - whole
    h = min(f, 0.5 * m) + max(0.0, f - (1.0 - 0.5 * m))
    return whole * m + h


@njit(cache=True, nogil=True)
def _switch_fraction(m, phi0, phi1):
    """Fraction of the carrier-phase interval [phi0, phi1] with the switch high."""
    return (_high_measure(m, phi1) - _high_measure(m, phi0)) / (phi1 - phi0)


@njit(cache=True, nogil=True)
def _duty(u_ref, u_bat):
    m = 0.5 + u_ref / u_bat
    if m < 0.0:
        return 0.0
    if m > 1.0:
        return 1.0
    return m


@njit(cache=True, nogil=True)
def _bridge_pair(ua, ub, uc):
    # strict comparisons: ties go to the lowest phase index
    imax = 0
    vmax = ua
    imin = 0
    vmin = ua
    if ub > vmax:
        imax = 1
        vmax = ub
    if uc > vmax:
        imax = 2
        vmax = uc
    if ub < vmin:
        imin = 1
        vmin = ub
    if uc < vmin:
        imin = 2
        vmin = uc
    return imax, imin


@njit(cache=True, nogil=True)
def _conducts(x, p, imax, imin):
    if x[X_IDC] > 0.0:
        return True
    u_bridge = x[X_UC + imax] - x[X_UC + imin] - 2.0 * p[P_UF]
    return u_bridge > x[X_UDC]


@njit(cache=True, nogil=True)
def _linear_current(x, p, k):
    if p[P_LL] > 0.0:
        return x[X_ILIN + k]
    return x[X_UC + k] / p[P_RL]


@njit(cache=True, nogil=True)
def _load_current(x, p, lin_on, nl_on, imax, imin, k):
    i0 = 0.0
    if lin_on:
        i0 += _linear_current(x, p, k)
    if nl_on and imax != imin:
        i_dc = x[X_IDC]
        if i_dc > 0.0:
            if k == imax:
                i0 += i_dc
            elif k == imin:
                i0 -= i_dc
    return i0


@njit(cache=True, nogil=True)
def _coeffs(p):
    # reciprocals hoisted out of the RK4 stages
    inv_ll = 1.0 / p[P_LL] if p[P_LL] > 0.0 else 0.0
    return (1.0 / p[P_LS], p[P_RS], 1.0 / p[P_CS], p[P_RL], inv_ll,
            1.0 / p[P_LN], 1.0 / p[P_CN], 1.0 / p[P_RN], 2.0 * p[P_UF])


@njit(cache=True, nogil=True)
def _derivs_c(x, ua, ub, uc, co, lin_on, nl_on, imax, imin, conducting, out):
    inv_ls, R_s, inv_cs, R_l, inv_ll, inv_ln, inv_cn, inv_rn, two_uf = co
    out[0] = (ua - x[3] - R_s * x[0]) * inv_ls
    out[1] = (ub - x[4] - R_s * x[1]) * inv_ls
    out[2] = (uc - x[5] - R_s * x[2]) * inv_ls
    i0a = 0.0
    i0b = 0.0
    i0c = 0.0
    if lin_on:
        if inv_ll > 0.0:
            i0a = x[6]
            i0b = x[7]
            i0c = x[8]
            out[6] = (x[3] - R_l * x[6]) * inv_ll
            out[7] = (x[4] - R_l * x[7]) * inv_ll
            out[8] = (x[5] - R_l * x[8]) * inv_ll
        else:
            i0a = x[3] / R_l
            i0b = x[4] / R_l
            i0c = x[5] / R_l
            out[6] = 0.0
            out[7] = 0.0
            out[8] = 0.0
    else:
        out[6] = 0.0
        out[7] = 0.0
        out[8] = 0.0
    i_dc = x[X_IDC]
    i_pos = i_dc if (nl_on and i_dc > 0.0) else 0.0
    out[X_IDC] = 0.0
    if nl_on and imax != imin:
        if i_pos > 0.0:
            if imax == 0:
                i0a += i_pos
            elif imax == 1:
                i0b += i_pos
            else:
                i0c += i_pos
            if imin == 0:
                i0a -= i_pos
            elif imin == 1:
                i0b -= i_pos
            else:
                i0c -= i_pos
        if conducting:
            u_bridge = x[X_UC + imax] - x[X_UC + imin] - two_uf
            out[X_IDC] = (u_bridge - x[X_UDC]) * inv_ln
    out[3] = (x[0] - i0a) * inv_cs
    out[4] = (x[1] - i0b) * inv_cs
    out[5] = (x[2] - i0c) * inv_cs
    out[X_UDC] = (i_pos - x[X_UDC] * inv_rn) * inv_cn


@njit(cache=True, nogil=True)
def _derivs(x, ua, ub, uc, p, lin_on, nl_on, imax, imin, conducting, out):
    _derivs_c(x, ua, ub, uc, _coeffs(p), lin_on, nl_on, imax, imin, conducting, out)


@njit(cache=True, nogil=True)
def _rk4_step(x, ua, ub, uc, p, lin_on, nl_on, dt, k1, k2, k3, k4, tmp):
    """One RK4 step in place with switch and diode states frozen."""
    imax, imin = _bridge_pair(x[X_UC], x[X_UC + 1], x[X_UC + 2])
    conducting = nl_on and _conducts(x, p, imax, imin)
    co = _coeffs(p)
    h = 0.5 * dt
    _derivs_c(x, ua, ub, uc, co, lin_on, nl_on, imax, imin, conducting, k1)
    for j in range(N_STATES):
        tmp[j] = x[j] + h * k1[j]
    _derivs_c(tmp, ua, ub, uc, co, lin_on, nl_on, imax, imin, conducting, k2)
    for j in range(N_STATES):
        tmp[j] = x[j] + h * k2[j]
    _derivs_c(tmp, ua, ub, uc, co, lin_on, nl_on, imax, imin, conducting, k3)
    for j in range(N_STATES):
        tmp[j] = x[j] + dt * k3[j]
    _derivs_c(tmp, ua, ub, uc, co, lin_on, nl_on, imax, imin, conducting, k4)
    w = dt / 6.0
    for j in range(N_STATES):
        x[j] += w * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    # diodes block reverse current
    if x[X_IDC] < 0.0:
        x[X_IDC] = 0.0


# ---------------------------------------------------------------------------
# public API


def inverter_voltages(ss: SwitchState, u_bat: float) -> ThreePhase:
    """Phase voltages of the two-level bridge for a switching state."""
    return ThreePhase(*_switch_voltages(float(ss.ss_a), float(ss.ss_b),
                                        float(ss.ss_c), float(u_bat)))


def carrier(phase: float) -> float:
    """Triangular carrier value in [0, 1] at ``phase`` in [0, 1)."""
    return float(_carrier(phase))


def pwm_modulate(u_ref_abc: ThreePhase, u_bat: float, carrier_phase: float) -> SwitchState:
    """Carrier-based sinusoidal PWM.

    Each phase is high when its normalized reference ``0.5 + u_ref/u_bat``
    (clamped to [0, 1]) exceeds the carrier.
    """
    if not 0.0 <= carrier_phase < 1.0:
        raise ValueError("carrier_phase must lie in [0, 1)")
    c = _carrier(carrier_phase)
    return SwitchState(*(int(_duty(float(u), float(u_bat)) > c) for u in u_ref_abc))


def rectifier_conduction(u_C: ThreePhase, i_dc: float, u_dc: float,
                         p: NonlinearLoadParams) -> tuple[float, ThreePhase]:
    """Conducting line pair of the diode bridge.

    Returns
    -------
    bridge_voltage : float
        ``max(u_C) - min(u_C) - 2 u_f``, the voltage the bridge applies to
        the dc link while conducting.
    i_ac : ThreePhase
        Phase currents drawn by the bridge. Zero when the bridge blocks.
    """
    u = [float(v) for v in u_C]
    imax, imin = _bridge_pair(*u)
    bridge_voltage = u[imax] - u[imin] - 2.0 * p.u_f
    i_ac = [0.0, 0.0, 0.0]
    if i_dc > 0.0 and imax != imin:
        i_ac[imax] = float(i_dc)
        i_ac[imin] = -float(i_dc)
    return bridge_voltage, ThreePhase(*i_ac)


def _unpack(params, linear, nonlinear):
    return param_vector(params or PlantParams(), linear or LinearLoadParams(),
                        nonlinear or NonlinearLoadParams())


def plant_derivatives(s: PlantState, u_inv: ThreePhase, topology: Topology = Topology(),
                      params: PlantParams | None = None,
                      linear: LinearLoadParams | None = None,
                      nonlinear: NonlinearLoadParams | None = None) -> PlantState:
    """Time derivatives of every plant state, packed as a :class:`PlantState`.

    The ``t`` field of the result is ``dt/dt = 1``.
    """
    p = _unpack(params, linear, nonlinear)
    x = s.to_array()
    imax, imin = _bridge_pair(x[X_UC], x[X_UC + 1], x[X_UC + 2])
    conducting = topology.nonlinear and _conducts(x, p, imax, imin)
    out = np.empty(N_STATES)
    _derivs(x, float(u_inv.a), float(u_inv.b), float(u_inv.c), p,
            topology.linear, topology.nonlinear, imax, imin, conducting, out)
    return PlantState.from_array(out, t=1.0)


def step(s: PlantState, u_inv: ThreePhase, dt: float, topology: Topology = Topology(),
         params: PlantParams | None = None,
         linear: LinearLoadParams | None = None,
         nonlinear: NonlinearLoadParams | None = None) -> PlantState:
    """Advance the plant by one RK4 step of ``dt`` seconds (at most 2 us)."""
    if not 0.0 < dt <= 2e-6:
        raise ValueError("dt must lie in (0, 2e-6] s")
    p = _unpack(params, linear, nonlinear)
    x = s.to_array()
    scratch = np.empty((5, N_STATES))
    _rk4_step(x, float(u_inv.a), float(u_inv.b), float(u_inv.c), p,
              topology.linear, topology.nonlinear, dt, *scratch)
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite plant state at t={s.t + dt:g} s")
    return PlantState.from_array(x, t=s.t + dt)


def stored_energy(s: PlantState, params: PlantParams | None = None,
                  linear: LinearLoadParams | None = None,
                  nonlinear: NonlinearLoadParams | None = None) -> float:
    """Magnetic plus electric energy stored in every reactive element (J)."""
    params = params or PlantParams()
    linear = linear or LinearLoadParams()
    nonlinear = nonlinear or NonlinearLoadParams()
    i_L = np.array(list(s.i_L))
    u_C = np.array(list(s.u_C))
    i_lin = np.array(list(s.i_lin))
    return float(0.5 * params.L_s * i_L @ i_L + 0.5 * params.C_s * u_C @ u_C
                 + 0.5 * linear.L_l * i_lin @ i_lin
                 + 0.5 * nonlinear.L_n * s.i_dc ** 2
                 + 0.5 * nonlinear.C_n * s.u_dc ** 2)
