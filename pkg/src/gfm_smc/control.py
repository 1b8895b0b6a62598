"""
Cascaded dq controller: PI capacitor-voltage loop and sliding-mode current loop.

Both loops run once per sampling period on zero-order-held measurements. The
voltage loop compensates the measured load current and the capacitor
cross-coupling, so with pole-placement gains the closed voltage loop behaves as
``s^2 + 2 xi w_v s + w_v^2``. The current loop is an average-model sliding-mode
law with a saturated (boundary-layer) switching term plus exact dq
decoupling feed-forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .frames import DqPair, _wrap

__all__ = [
    "ControllerConfig",
    "VoltageLoopGains",
    "SmcGains",
    "ControllerState",
    "BASELINE_GAINS",
    "synthesize_voltage_gains",
    "voltage_loop",
    "smc_current_loop",
    "sat",
    "generate_references",
]


@dataclass(frozen=True)
class ControllerConfig:
    """Sampling and model data held by the controller.

    ``L_s``, ``R_s`` and ``C_s`` are the controller's own copies; they are not
    changed when the plant is perturbed.
    """

    T_sam: float = 50e-6
    T_cres: float = 0.5e-3
    T_vres: float = 10e-3
    xi: float = 1.0
    u_amp: float = 300.0
    omega: float = 100.0 * math.pi
    L_s: float = 2.4e-3
    R_s: float = 0.1
    C_s: float = 15e-6
    integ_limit: float = 50.0   # A, bound on the PI integral contribution


@dataclass(frozen=True)
class VoltageLoopGains:
    K_pv: float
    K_iv: float
    xi: float
    omega_v: float
    T_vres: float


@dataclass(frozen=True)
class SmcGains:
    """Tunable current-loop parameters.

    ``k_cd``/``k_cq`` are reaching gains in A/s, ``k_sat`` is the boundary
    layer width in A. Only the ratios ``k_cd/k_ttd`` and ``k_cq/k_ttq`` enter
    the control law, so ``k_ttd = k_ttq = 1`` by default.
    """

    k_cd: float
    k_cq: float
    k_sat: float
    k_ttd: float = 1.0
    k_ttq: float = 1.0

    def __post_init__(self):
        if not (self.k_cd > 0 and self.k_cq > 0 and self.k_sat > 0
                and self.k_ttd > 0 and self.k_ttq > 0):
            raise ValueError(f"SMC gains must be positive: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.k_cd, self.k_cq, self.k_sat])

    @classmethod
    def from_array(cls, x) -> "SmcGains":
        return cls(float(x[0]), float(x[1]), float(x[2]))


# Untuned reference design: equal d/q gains, boundary layer chosen so the
# linear-region error dynamics have the current response time T_cres.
BASELINE_GAINS = SmcGains(k_cd=1000.0, k_cq=1000.0, k_sat=0.5)


@dataclass
class ControllerState:
    config: ControllerConfig = field(default_factory=ControllerConfig)
    integ_d: float = 0.0        # V*s, integral of the d-axis voltage error
    integ_q: float = 0.0
    prev_i_ref: DqPair | None = None
    theta: float = 0.0


@njit(cache=True, nogil=True)
def _sat(x):
    if x > 1.0:
        return 1.0
    if x < -1.0:
        return -1.0
    return x


@njit(cache=True, nogil=True)
def _voltage_loop(ucd, ucq, ucd_ref, ucq_ref, i0d, i0q, integ_d, integ_q,
                  K_pv, K_iv, omega, C_s, T_sam, limit):
    ed = ucd_ref - ucd
    eq = ucq_ref - ucq
    integ_d += ed * T_sam
    integ_q += eq * T_sam
    if K_iv > 0.0:
        bound = limit / K_iv
        integ_d = min(max(integ_d, -bound), bound)
        integ_q = min(max(integ_q, -bound), bound)
    ild_ref = K_pv * ed + K_iv * integ_d + i0d - ucq * omega * C_s
    ilq_ref = K_pv * eq + K_iv * integ_q + i0q + ucd * omega * C_s
    return ild_ref, ilq_ref, integ_d, integ_q


@njit(cache=True, nogil=True)
def _smc(ild, ilq, ild_ref, ilq_ref, ucd, ucq, prev_d, prev_q, has_prev,
         kd, kq, k_sat, L_s, R_s, omega, T_sam):
    # kd, kq are the ratios k_c/k_tt
    if has_prev:
        dref_d = (ild_ref - prev_d) / T_sam
        dref_q = (ilq_ref - prev_q) / T_sam
    else:
        dref_d = 0.0
        dref_q = 0.0
    s_d = ild - ild_ref
    s_q = ilq - ilq_ref
    ud = -L_s * kd * _sat(s_d / k_sat) + L_s * dref_d - omega * L_s * ilq + R_s * ild + ucd
    uq = -L_s * kq * _sat(s_q / k_sat) + L_s * dref_q + omega * L_s * ild + R_s * ilq + ucq
    return ud, uq


def sat(x: float) -> float:
    """Unit saturation: ``x`` inside [-1, 1], ``sign(x)`` outside."""
    return float(_sat(float(x)))


def synthesize_voltage_gains(xi: float, T_vres: float, C_s: float) -> VoltageLoopGains:
    """PI gains placing both voltage-loop poles at natural frequency 2*pi/T_vres."""
    if not (xi > 0 and T_vres > 0 and C_s > 0):
        raise ValueError("xi, T_vres and C_s must be positive")
    omega_v = 2.0 * math.pi / T_vres
    return VoltageLoopGains(K_pv=2.0 * xi * omega_v * C_s, K_iv=omega_v ** 2 * C_s,
                            xi=xi, omega_v=omega_v, T_vres=T_vres)


def voltage_loop(u_C: DqPair, u_Cref: DqPair, i_0: DqPair, state: ControllerState,
                 gains: VoltageLoopGains) -> DqPair:
    """One sample of the PI voltage loop; returns the inductor current reference.

    The integrator is advanced by forward Euler before the output is formed
    and its contribution is clamped to ``config.integ_limit`` amperes.
    """
    cfg = state.config
    ild, ilq, state.integ_d, state.integ_q = _voltage_loop(
        u_C.d, u_C.q, u_Cref.d, u_Cref.q, i_0.d, i_0.q, state.integ_d, state.integ_q,
        gains.K_pv, gains.K_iv, cfg.omega, cfg.C_s, cfg.T_sam, cfg.integ_limit)
    return DqPair(ild, ilq)


def smc_current_loop(i_L: DqPair, i_Lref: DqPair, u_C: DqPair, state: ControllerState,
                     gains: SmcGains) -> DqPair:
    """One sample of the sliding-mode current loop; returns the dq voltage reference.

    The sliding surfaces are ``S = i_L - i_Lref`` per axis. The reference
    derivative is a one-sample backward difference, zero on the first call.
    """
    cfg = state.config
    prev = state.prev_i_ref
    ud, uq = _smc(i_L.d, i_L.q, i_Lref.d, i_Lref.q, u_C.d, u_C.q,
                  prev.d if prev else 0.0, prev.q if prev else 0.0, prev is not None,
                  gains.k_cd / gains.k_ttd, gains.k_cq / gains.k_ttq, gains.k_sat,
                  cfg.L_s, cfg.R_s, cfg.omega, cfg.T_sam)
    state.prev_i_ref = i_Lref
    return DqPair(ud, uq)


def generate_references(t: float, config: ControllerConfig = ControllerConfig()
                        ) -> tuple[DqPair, float]:
    """Capacitor voltage reference and the open-loop electrical angle at ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return DqPair(config.u_amp, 0.0), float(_wrap(config.omega * t))
