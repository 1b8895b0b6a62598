"""
Closed-loop scenario engine.

The controller runs every ``T_sam`` (50 us) on zero-order-held measurements and
the plant is advanced in ``dt`` (1 us) RK4 micro-steps in between, with the PWM
switching state re-evaluated at every micro-step. Timed events (load steps,
load swaps, plant perturbations) are applied at the first micro-step at or after
their timestamp. The tracking cost is the integral of ``|e_d| + |e_q|`` with
``e = i_Lref - i_L`` accumulated by a left rectangle rule at controller ticks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .control import ControllerConfig, SmcGains, _smc, _voltage_loop, synthesize_voltage_gains
from .frames import _clarke, _inverse_clarke, _inverse_park, _park, _wrap
from .plant import (
    N_STATES, P_FS, P_LS, P_RL, P_RS, P_UBAT, X_IDC, X_IL, X_ILIN, X_UC, X_UDC,
    LinearLoadParams, NonlinearLoadParams, PlantParams,
    _bridge_pair, _duty, _load_current, _rk4_step, _switch_fraction, _switch_voltages,
    param_vector,
)

__all__ = [
    "EVENT_KINDS",
    "DIVERGED_PENALTY",
    "Event",
    "Scenario",
    "Trace",
    "CostResult",
    "TrackingMetrics",
    "Simulator",
    "default_scenario",
    "run_scenario",
    "iae_from_errors",
    "tracking_metrics",
    "scenario_cost",
]

DIVERGED_PENALTY = 1e6

EVENT_KINDS = (
    "connect_linear",
    "disconnect_linear",
    "scale_linear",
    "connect_nonlinear",
    "disconnect_nonlinear",
    "scale_plant",
)
EV_CONNECT_LIN, EV_DISCONNECT_LIN, EV_SCALE_LIN, EV_CONNECT_NL, EV_DISCONNECT_NL, EV_SCALE_PLANT = range(6)

TRACE_COLUMNS = ("t", "i_ld_ref", "i_lq_ref", "i_ld", "i_lq", "u_cd", "u_cq",
                 "u_dref", "u_qref", "iae")

# per-tick record layout produced by the kernel
R_T, R_ILDREF, R_ILQREF, R_ILD, R_ILQ, R_UCD, R_UCQ, R_UD, R_UQ, R_MA, R_MB, R_MC, R_IAE = range(13)
N_REC = 13

# controller state layout
C_INTD, C_INTQ, C_PREVD, C_PREVQ, C_HASPREV, C_MA, C_MB, C_MC = range(8)
N_CTRL = 8

# controller parameter layout
K_TSAM, K_UAMP, K_OMEGA, K_LS, K_RS, K_CS, K_KPV, K_KIV, K_LIMIT = range(9)


@dataclass(frozen=True, order=True)
class Event:
    """A timed change of topology or parameters.

    ``value`` is the multiplicative factor for the ``scale_*`` kinds and is
    ignored otherwise.
    """

    time: float
    kind: str
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError("event time must be finite and non-negative")
        if self.kind.startswith("scale") and not self.value > 0:
            raise ValueError("scale factor must be positive")


@dataclass(frozen=True)
class Scenario:
    horizon: float = 0.7
    events: tuple[Event, ...] = ()
    linear_connected: bool = True
    nonlinear_connected: bool = False
    linear: LinearLoadParams = field(default_factory=LinearLoadParams)
    nonlinear: NonlinearLoadParams = field(default_factory=NonlinearLoadParams)
    plant: PlantParams = field(default_factory=PlantParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    dt: float = 1e-6
    dc_precharge: float = 0.0   # V on the rectifier dc link when it connects

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise ValueError("horizon must be finite and non-negative")
        # canonical order makes results independent of the input ordering
        events = tuple(sorted(self.events, key=lambda e: (e.time, EVENT_KINDS.index(e.kind), e.value)))
        object.__setattr__(self, "events", events)
        for ev in events:
            if ev.time > self.horizon:
                raise ValueError(f"event {ev} lies beyond the horizon {self.horizon}")
        if not 0 < self.dt <= 2e-6:
            raise ValueError("dt must lie in (0, 2e-6] s")
        ratio = self.controller.T_sam / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("T_sam must be an integer multiple of dt")

    @property
    def steps_per_tick(self) -> int:
        return int(round(self.controller.T_sam / self.dt))

    @property
    def n_ticks(self) -> int:
        """Number of sampling intervals in the horizon."""
        return int(math.floor(self.horizon / self.controller.T_sam + 1e-9))

    def with_horizon(self, horizon: float) -> "Scenario":
        """Same scenario truncated (or extended) to ``horizon``; later events are dropped."""
        return replace(self, horizon=horizon,
                       events=tuple(e for e in self.events if e.time <= horizon))


def default_scenario(R_l: float = 9.0, L_l: float = 3e-3, step_factor: float = 0.5) -> Scenario:
    """The three-stage test: linear load step, swap to the rectifier, plant +40 % L/R.

    Linear load connected from t = 0, its resistance scaled by ``step_factor``
    at 0.1 s; at 0.2 s the rectifier connects and the linear load disconnects;
    at 0.5 s the plant's L_s and R_s grow by 40 %. Horizon 0.7 s. The rectifier
    dc link is precharged to the no-load rectified voltage when it connects.
    """
    return Scenario(
        horizon=0.7,
        events=(
            Event(0.1, "scale_linear", step_factor),
            Event(0.2, "connect_nonlinear"),
            Event(0.2, "disconnect_linear"),
            Event(0.5, "scale_plant", 1.4),
        ),
        linear_connected=True,
        nonlinear_connected=False,
        linear=LinearLoadParams(R_l=R_l, L_l=L_l),
        dc_precharge=rectified_peak(ControllerConfig().u_amp, NonlinearLoadParams().u_f),
    )


def rectified_peak(u_amp: float, u_f: float) -> float:
    """No-load dc-link voltage of a six-pulse bridge fed by phase amplitude ``u_amp``."""
    return math.sqrt(3.0) * u_amp - 2.0 * u_f


@dataclass
class Trace:
    """Signals sampled at every controller tick.

    ``duty`` holds the normalized per-phase modulator references applied after
    each tick. ``iae`` is the cost accumulated up to (excluding) that tick.
    """

    t: np.ndarray
    i_ld_ref: np.ndarray
    i_lq_ref: np.ndarray
    i_ld: np.ndarray
    i_lq: np.ndarray
    u_cd: np.ndarray
    u_cq: np.ndarray
    u_dref: np.ndarray
    u_qref: np.ndarray
    iae: np.ndarray
    duty: np.ndarray | None = None

    @classmethod
    def from_records(cls, rec: np.ndarray) -> "Trace":
        return cls(*(rec[:, i].copy() for i in range(R_MA)), iae=rec[:, R_IAE].copy(),
                   duty=rec[:, R_MA:R_MC + 1].copy())

    def __len__(self):
        return len(self.t)

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of rows with ``t0 <= t <= t1`` (half-sample tolerant)."""
        tol = 1e-9
        return (self.t >= t0 - tol) & (self.t <= t1 + tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            cols = [getattr(self, c) for c in TRACE_COLUMNS]
            for row in zip(*cols):
                w.writerow([f"{v:.9g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header {header}")
            data = np.array([[float(v) for v in row] for row in reader], dtype=float)
        data = data.reshape(-1, len(TRACE_COLUMNS))
        return cls(*(data[:, i] for i in range(len(TRACE_COLUMNS))))


@dataclass
class CostResult:
    iae: float
    diverged: bool = False
    trace: Trace | None = None


@dataclass(frozen=True)
class TrackingMetrics:
    overshoot: float | None        # percent of the reference step
    settling_time: float | None    # s after window start
    steady_state_error: float      # A, mean |error| over the last 20 % of the window


# ---------------------------------------------------------------------------
# kernel


@njit(cache=True, nogil=True)
def _iae_increment(ed, eq, T_sam):
    return (abs(ed) + abs(eq)) * T_sam


@njit(cache=True, nogil=True)
def _tick(t, x, cs, p, lin_on, nl_on, cp, gains, row):
    """Sample, run both loops, latch the modulator references. Returns (e_d, e_q)."""
    T_sam = cp[K_TSAM]
    omega = cp[K_OMEGA]
    theta = _wrap(omega * t)
    imax, imin = _bridge_pair(x[X_UC], x[X_UC + 1], x[X_UC + 2])
    i0a = _load_current(x, p, lin_on, nl_on, imax, imin, 0)
    i0b = _load_current(x, p, lin_on, nl_on, imax, imin, 1)
    i0c = _load_current(x, p, lin_on, nl_on, imax, imin, 2)

    al, be = _clarke(x[X_IL], x[X_IL + 1], x[X_IL + 2])
    ild, ilq = _park(al, be, theta)
    al, be = _clarke(x[X_UC], x[X_UC + 1], x[X_UC + 2])
    ucd, ucq = _park(al, be, theta)
    al, be = _clarke(i0a, i0b, i0c)
    i0d, i0q = _park(al, be, theta)

    ild_ref, ilq_ref, cs[C_INTD], cs[C_INTQ] = _voltage_loop(
        ucd, ucq, cp[K_UAMP], 0.0, i0d, i0q, cs[C_INTD], cs[C_INTQ],
        cp[K_KPV], cp[K_KIV], omega, cp[K_CS], T_sam, cp[K_LIMIT])
    ud, uq = _smc(ild, ilq, ild_ref, ilq_ref, ucd, ucq,
                  cs[C_PREVD], cs[C_PREVQ], cs[C_HASPREV] > 0.5,
                  gains[0], gains[1], gains[2], cp[K_LS], cp[K_RS], omega, T_sam)
    cs[C_PREVD] = ild_ref
    cs[C_PREVQ] = ilq_ref
    cs[C_HASPREV] = 1.0

    # the held output acts over [t, t + T_sam]: rotate with the mid-interval angle
    ual, ube = _inverse_park(ud, uq, theta + 0.5 * omega * T_sam)
    ua, ub, uc = _inverse_clarke(ual, ube)
    u_bat = p[P_UBAT]
    cs[C_MA] = _duty(ua, u_bat)
    cs[C_MB] = _duty(ub, u_bat)
    cs[C_MC] = _duty(uc, u_bat)

    row[R_T] = t
    row[R_ILDREF] = ild_ref
    row[R_ILQREF] = ilq_ref
    row[R_ILD] = ild
    row[R_ILQ] = ilq
    row[R_UCD] = ucd
    row[R_UCQ] = ucq
    row[R_UD] = ud
    row[R_UQ] = uq
    row[R_MA] = cs[C_MA]
    row[R_MB] = cs[C_MB]
    row[R_MC] = cs[C_MC]
    return ild_ref - ild, ilq_ref - ilq


@njit(cache=True, nogil=True)
def _apply_events(n, x, p, flags, ev_step, ev_kind, ev_val, ptr, precharge):
    while ptr[0] < ev_step.shape[0] and ev_step[ptr[0]] <= n:
        i = ptr[0]
        kind = ev_kind[i]
        if kind == EV_CONNECT_LIN:
            if flags[0] == 0:
                for k in range(3):
                    x[X_ILIN + k] = 0.0
            flags[0] = 1
        elif kind == EV_DISCONNECT_LIN:
            flags[0] = 0
            for k in range(3):
                x[X_ILIN + k] = 0.0
        elif kind == EV_SCALE_LIN:
            p[P_RL] *= ev_val[i]
        elif kind == EV_CONNECT_NL:
            if flags[1] == 0:
                x[X_IDC] = 0.0
                x[X_UDC] = max(x[X_UDC], precharge)
            flags[1] = 1
        elif kind == EV_DISCONNECT_NL:
            flags[1] = 0
            x[X_IDC] = 0.0
        elif kind == EV_SCALE_PLANT:
            p[P_LS] *= ev_val[i]
            p[P_RS] *= ev_val[i]
        ptr[0] += 1


@njit(cache=True, nogil=True)
def _finite(x, limit):
    for v in x:
        if not (abs(v) < limit):
            return False
    return True


@njit(cache=True, nogil=True)
def _run_ticks(k0, k1, steps, dt, x, cs, p, flags, cp, gains,
               ev_step, ev_kind, ev_val, ptr, precharge, iae, rec, record):
    """Run controller ticks ``k0 .. k1-1``. Returns the first unfinished tick.

    A return value below ``k1`` means the state diverged during that tick.
    """
    row = np.empty(N_REC)
    k1_buf = np.empty(N_STATES)
    k2_buf = np.empty(N_STATES)
    k3_buf = np.empty(N_STATES)
    k4_buf = np.empty(N_STATES)
    tmp = np.empty(N_STATES)
    T_sam = cp[K_TSAM]
    dph = dt * p[P_FS]
    n_ev = ev_step.shape[0]
    for k in range(k0, k1):
        n0 = k * steps
        _apply_events(n0, x, p, flags, ev_step, ev_kind, ev_val, ptr, precharge)
        ed, eq = _tick(k * T_sam, x, cs, p, flags[0] == 1, flags[1] == 1, cp, gains, row)
        row[R_IAE] = iae[0]
        if record:
            for j in range(N_REC):
                rec[k, j] = row[j]
        iae[0] += _iae_increment(ed, eq, T_sam)
        if not (_finite(cs, 1e12) and abs(ed) < 1e12 and abs(eq) < 1e12):
            return k
        for j in range(steps):
            n = n0 + j
            if j > 0 and ptr[0] < n_ev and ev_step[ptr[0]] <= n:
                _apply_events(n, x, p, flags, ev_step, ev_kind, ev_val, ptr, precharge)
            # binary except in the micro-step holding a carrier crossing,
            # where the switch's exact high-time fraction is applied
            phi0 = n * dph
            phi1 = phi0 + dph
            sa = _switch_fraction(cs[C_MA], phi0, phi1)
            sb = _switch_fraction(cs[C_MB], phi0, phi1)
            sc = _switch_fraction(cs[C_MC], phi0, phi1)
            ua, ub, uc = _switch_voltages(sa, sb, sc, p[P_UBAT])
            _rk4_step(x, ua, ub, uc, p, flags[0] == 1, flags[1] == 1, dt,
                      k1_buf, k2_buf, k3_buf, k4_buf, tmp)
        if not _finite(x, 1e12):
            return k
    return k1


# ---------------------------------------------------------------------------
# driver


class Simulator:
    """Resumable closed-loop simulation of one gain set on one scenario.

    Examples
    --------
    >>> sim = Simulator(BASELINE_GAINS, default_scenario())   # doctest: +SKIP
    >>> sim.advance(0.35); sim.advance(0.7)                    # doctest: +SKIP
    >>> sim.result().iae                                       # doctest: +SKIP
    """

    def __init__(self, gains: SmcGains, scenario: Scenario, record: bool = False):
        self.gains = gains
        self.scenario = scenario
        cfg = scenario.controller
        vg = synthesize_voltage_gains(cfg.xi, cfg.T_vres, cfg.C_s)
        self._cp = np.array([cfg.T_sam, cfg.u_amp, cfg.omega, cfg.L_s, cfg.R_s, cfg.C_s,
                             vg.K_pv, vg.K_iv, cfg.integ_limit])
        self._gains = np.array([gains.k_cd / gains.k_ttd, gains.k_cq / gains.k_ttq, gains.k_sat])
        self._p = param_vector(scenario.plant, scenario.linear, scenario.nonlinear)
        self._x = np.zeros(N_STATES)
        if scenario.nonlinear_connected:
            self._x[X_UDC] = scenario.dc_precharge
        self._cs = np.zeros(N_CTRL)
        self._cs[C_MA:C_MC + 1] = 0.5
        self._flags = np.array([int(scenario.linear_connected), int(scenario.nonlinear_connected)],
                               dtype=np.int64)
        dt = scenario.dt
        self._ev_step = np.array([int(math.ceil(e.time / dt - 1e-6)) for e in scenario.events],
                                 dtype=np.int64)
        self._ev_kind = np.array([EVENT_KINDS.index(e.kind) for e in scenario.events],
                                 dtype=np.int64)
        self._ev_val = np.array([e.value for e in scenario.events], dtype=np.float64)
        self._ptr = np.zeros(1, dtype=np.int64)
        self._iae = np.zeros(1)
        self.record = record
        n = scenario.n_ticks
        self._rec = np.zeros((n + 1, N_REC)) if record else np.zeros((0, N_REC))
        self.k = 0
        self.diverged = False

    @property
    def t(self) -> float:
        return self.k * self.scenario.controller.T_sam

    @property
    def iae(self) -> float:
        return DIVERGED_PENALTY if self.diverged else float(self._iae[0])

    @property
    def state_vector(self) -> np.ndarray:
        return self._x.copy()

    def advance(self, t_end: float) -> None:
        """Run controller ticks up to (not including) the tick at ``t_end``."""
        sc = self.scenario
        k_end = min(int(math.floor(t_end / sc.controller.T_sam + 1e-9)), sc.n_ticks)
        if self.diverged or k_end <= self.k:
            return
        k = _run_ticks(self.k, k_end, sc.steps_per_tick, sc.dt, self._x, self._cs, self._p,
                       self._flags, self._cp, self._gains, self._ev_step, self._ev_kind,
                       self._ev_val, self._ptr, sc.dc_precharge, self._iae, self._rec,
                       self.record)
        if k < k_end:
            self.diverged = True
            self.k = k + 1
        else:
            self.k = k_end

    def result(self) -> CostResult:
        """Run to the horizon if needed and package the cost and trace."""
        sc = self.scenario
        self.advance(sc.horizon)
        trace = None
        if self.record:
            rows = self._rec[:self.k + 1].copy()
            if not self.diverged:
                # final sample at the horizon; controller state is not advanced
                row = np.empty(N_REC)
                x = self._x.copy()
                p = self._p.copy()
                flags = self._flags.copy()
                _apply_events(self.k * sc.steps_per_tick, x, p, flags, self._ev_step,
                              self._ev_kind, self._ev_val, self._ptr.copy(), sc.dc_precharge)
                _tick(self.k * sc.controller.T_sam, x, self._cs.copy(), p, flags[0] == 1,
                      flags[1] == 1, self._cp, self._gains, row)
                row[R_IAE] = self._iae[0]
                rows[self.k] = row
            else:
                rows = rows[:self.k]
            trace = Trace.from_records(rows)
        return CostResult(iae=self.iae, diverged=self.diverged, trace=trace)


def run_scenario(gains: SmcGains, scenario: Scenario | None = None,
                 trace: bool = False) -> CostResult:
    """Simulate ``scenario`` under ``gains`` and return the tracking cost.

    A non-finite (or absurdly large) state marks the run as diverged and the
    cost is replaced by :data:`DIVERGED_PENALTY`.
    """
    scenario = scenario or default_scenario()
    return Simulator(gains, scenario, record=trace).result()


def scenario_cost(scenario: Scenario | None = None):
    """Cost function over ``[k_cd, k_cq, k_sat]`` vectors for the optimizers."""
    scenario = scenario or default_scenario()

    def cost(x) -> float:
        return run_scenario(SmcGains.from_array(x), scenario).iae

    return cost


@njit(cache=True)
def _sum_iae(e_d, e_q, T_sam):
    total = 0.0
    for i in range(e_d.shape[0]):
        total += _iae_increment(e_d[i], e_q[i], T_sam)
    return total


def iae_from_errors(e_d, e_q, T_sam: float = 50e-6) -> float:
    """Rectangle-rule IAE of sampled dq errors, as accumulated by the simulator."""
    e_d = np.ascontiguousarray(e_d, dtype=float)
    e_q = np.ascontiguousarray(e_q, dtype=float)
    if e_d.shape != e_q.shape:
        raise ValueError("e_d and e_q must have the same shape")
    return float(_sum_iae(e_d, e_q, float(T_sam)))


def tracking_metrics(trace: Trace, t0: float, t1: float, axis: str = "d",
                     band: float = 0.02) -> TrackingMetrics:
    """Step-response quality of one current axis over ``[t0, t1]``.

    The step is measured from the reference just before the window to the mean
    reference over the final 20 % of the window. Overshoot and settling are
    taken on the tracking error, so a reference that keeps moving after the
    step is not counted against the current loop. The settling band is
    ``band`` times the final reference level.
    """
    mask = trace.window(t0, t1)
    if not mask.any():
        raise ValueError("window contains no trace rows")
    ref = getattr(trace, f"i_l{axis}_ref")
    y = getattr(trace, f"i_l{axis}")
    idx = np.flatnonzero(mask)
    t, r, yy = trace.t[idx], ref[idx], y[idx]
    n_tail = max(1, int(math.ceil(0.2 * len(idx))))
    r_final = float(np.mean(r[-n_tail:]))
    r_start = float(ref[idx[0] - 1]) if idx[0] > 0 else float(r[0])
    step_size = r_final - r_start
    err = yy - r
    sse = float(np.mean(np.abs(err[-n_tail:])))

    scale = max(abs(r_final), abs(r_start), 1e-12)
    if abs(step_size) <= 1e-9 * scale:
        overshoot = None
    else:
        overshoot = max(0.0, float(np.max(err * np.sign(step_size))) / abs(step_size) * 100.0)

    tol = band * abs(r_final)
    outside = np.flatnonzero(np.abs(err) > tol)
    if len(outside) == 0:
        settling = 0.0
    elif outside[-1] == len(idx) - 1:
        settling = None
    else:
        settling = float(t[outside[-1] + 1] - t[0])
    return TrackingMetrics(overshoot=overshoot, settling_time=settling, steady_state_error=sse)
