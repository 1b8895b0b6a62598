"""
Clarke and Park transforms between the abc, alpha-beta and dq frames.

The Clarke transform uses amplitude-invariant (2/3) scaling, so a balanced
set of phase amplitude ``A`` maps to a stationary vector of length ``A`` and,
after rotation by the electrical angle, to ``(A, 0)`` in dq. The zero-sequence
component is discarded (three-wire system).

The scalar kernels prefixed with an underscore are numba-compiled and are
shared with the closed-loop simulation kernel.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

from numba import njit

__all__ = [
    "ThreePhase",
    "TwoAxis",
    "DqPair",
    "clarke",
    "park",
    "inverse_park",
    "inverse_clarke",
    "theta_from_voltage",
    "wrap_angle",
]

SQRT3_2 = math.sqrt(3.0) / 2.0


def _check_finite(obj):
    for name, value in zip(obj.__dataclass_fields__, astuple(obj)):
        if not math.isfinite(value):
            raise ValueError(f"{type(obj).__name__}.{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ThreePhase:
    """Instantaneous phase quantities (V or A)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        _check_finite(self)

    def __iter__(self):
        return iter((self.a, self.b, self.c))


@dataclass(frozen=True)
class TwoAxis:
    """Stationary-frame pair."""

    alpha: float
    beta: float

    def __post_init__(self):
        _check_finite(self)

    def __iter__(self):
        return iter((self.alpha, self.beta))


@dataclass(frozen=True)
class DqPair:
    """Rotating-frame pair."""

    d: float
    q: float

    def __post_init__(self):
        _check_finite(self)

    def __iter__(self):
        return iter((self.d, self.q))


@njit(cache=True, nogil=True)
def _clarke(a, b, c):
    alpha = (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c)
    beta = (2.0 / 3.0) * (SQRT3_2 * b - SQRT3_2 * c)
    return alpha, beta


@njit(cache=True, nogil=True)
def _park(alpha, beta, theta):
    ct = math.cos(theta)
    st = math.sin(theta)
    return ct * alpha + st * beta, -st * alpha + ct * beta


@njit(cache=True, nogil=True)
def _inverse_park(d, q, theta):
    ct = math.cos(theta)
    st = math.sin(theta)
    return ct * d - st * q, st * d + ct * q


@njit(cache=True, nogil=True)
def _inverse_clarke(alpha, beta):
    return (
        alpha,
        -0.5 * alpha + SQRT3_2 * beta,
        -0.5 * alpha - SQRT3_2 * beta,
    )


@njit(cache=True, nogil=True)
def _wrap(theta):
    # result in (-pi, pi]
    w = (theta + math.pi) % (2.0 * math.pi)
    if w == 0.0:
        w = 2.0 * math.pi
    return w - math.pi


def clarke(x: ThreePhase) -> TwoAxis:
    """abc -> alpha-beta, amplitude invariant."""
    return TwoAxis(*_clarke(float(x.a), float(x.b), float(x.c)))


def park(x: TwoAxis, theta: float) -> DqPair:
    """Rotate a stationary vector into the frame at angle ``theta`` (rad)."""
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    return DqPair(*_park(float(x.alpha), float(x.beta), float(theta)))


def inverse_park(x: DqPair, theta: float) -> TwoAxis:
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    return TwoAxis(*_inverse_park(float(x.d), float(x.q), float(theta)))


def inverse_clarke(x: TwoAxis) -> ThreePhase:
    """alpha-beta -> abc with zero homopolar component (outputs sum to zero)."""
    return ThreePhase(*_inverse_clarke(float(x.alpha), float(x.beta)))


def theta_from_voltage(x: TwoAxis) -> float:
    """Four-quadrant angle of a stationary voltage vector, in (-pi, pi].

    Raises
    ------
    ValueError
        If both components are zero, where the angle is undefined.
    """
    if x.alpha == 0.0 and x.beta == 0.0:
        raise ValueError("angle undefined for a zero voltage vector")
    theta = math.atan2(x.beta, x.alpha)
    # atan2 returns -pi for (negative, -0.0)
    return math.pi if theta == -math.pi else theta


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return float(_wrap(float(theta)))
