"""Harmonic and inverted oscillators, their imaginary-time correspondence and an RK4 oracle."""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RangeWarning

TAYLOR_OMEGA = 1e-6
HYPERBOLIC_LIMIT = 700.0


@dataclass(frozen=True)
class OscillatorState:
    q: float
    p: float
    omega: float
    m: float = 1.0

    @property
    def H(self) -> float:
        return self.p**2 / (2 * self.m) + 0.5 * self.m * self.omega**2 * self.q**2

    @property
    def H_bar(self) -> float:
        return self.p**2 / (2 * self.m) - 0.5 * self.m * self.omega**2 * self.q**2


def _sinc_t(omega, t):
    """sin(omega t) / omega, with a Taylor guard at small omega."""
    if abs(omega) < TAYLOR_OMEGA:
        wt2 = (omega * t) ** 2
        return t * (1 - wt2 / 6 + wt2**2 / 120)
    return math.sin(omega * t) / omega


def _sinhc_t(omega, t):
    if abs(omega) < TAYLOR_OMEGA:
        wt2 = (omega * t) ** 2
        return t * (1 + wt2 / 6 + wt2**2 / 120)
    return math.sinh(omega * t) / omega


def _check_omega(omega):
    if not omega > 0:
        raise ValueError("omega must be positive")


def harmonic_trajectory(q0, p0, omega, m, t):
    """``q = q0 cos wt + (p0/mw) sin wt``, ``p = p0 cos wt - m w q0 sin wt``."""
    _check_omega(omega)
    t = np.asarray(t, dtype=float)
    c = np.cos(omega * t)
    if omega < TAYLOR_OMEGA:
        s_over_w = np.vectorize(lambda tt: _sinc_t(omega, tt))(t)
    else:
        s_over_w = np.sin(omega * t) / omega
    q = q0 * c + p0 / m * s_over_w
    p = p0 * c - m * omega**2 * q0 * s_over_w
    return q, p


def inverted_trajectory(q0, p0, omega, m, t, reflected: bool = False):
    """Inverted oscillator from the imaginary-time substitution.

    ``q = q0 cosh wt - (p0/mw) sinh wt`` and
    ``p = -p0 cosh wt + m w q0 sinh wt``. With ``reflected=True`` the
    time-reflected pair ``(q(-t), -p(-t))`` is returned instead.
    """
    _check_omega(omega)
    t = np.asarray(t, dtype=float)
    if reflected:
        q, p = inverted_trajectory(q0, p0, omega, m, -t)
        return q, -p
    if np.any(np.abs(omega * t) > HYPERBOLIC_LIMIT):
        warnings.warn(f"|omega t| exceeds {HYPERBOLIC_LIMIT}: cosh/sinh overflow", RangeWarning, stacklevel=2)
    # past the range guard the caller has been warned; inf and nan propagate silently
    with np.errstate(over="ignore", invalid="ignore"):
        ch = np.cosh(omega * t)
        if omega < TAYLOR_OMEGA:
            sh_over_w = np.vectorize(lambda tt: _sinhc_t(omega, tt))(t)
        else:
            sh_over_w = np.sinh(omega * t) / omega
        q = q0 * ch - p0 / m * sh_over_w
        p = -p0 * ch + m * omega**2 * q0 * sh_over_w
    return q, p


def harmonic_complex(q0, p0, omega, m, t: complex):
    """Harmonic closed forms evaluated at complex time and complex momentum."""
    c = cmath.cos(omega * t)
    s = cmath.sin(omega * t)
    return q0 * c + p0 / (m * omega) * s, p0 * c - m * omega * q0 * s


def wick_correspondence_check(q0, p0, omega, m, t) -> dict:
    """Substitute ``t -> -i t`` and ``p0 -> -i p0`` into the harmonic solution.

    The substituted position is real and equals the inverted ``q``; the
    substituted momentum is ``i`` times the inverted ``p``.
    Also checks ``H(q0, -i p0) = -H_bar(q0, p0)``.
    """
    _check_omega(omega)
    qs, ps = harmonic_complex(q0, -1j * p0, omega, m, -1j * t)
    qb, pb = inverted_trajectory(q0, p0, omega, m, t)
    qb, pb = float(qb), float(pb)
    scale_q = max(1.0, abs(qb))
    scale_p = max(1.0, abs(pb))
    dev_q = max(abs(qs.real - qb), abs(qs.imag)) / scale_q
    dev_p = max(abs((-1j * ps).real - pb), abs((-1j * ps).imag)) / scale_p
    H_sub = (-1j * p0) ** 2 / (2 * m) + 0.5 * m * omega**2 * q0**2
    H_bar = OscillatorState(q0, p0, omega, m).H_bar
    return {
        "q_deviation": dev_q,
        "p_deviation": dev_p,
        "energy_deviation": abs(H_sub.real + H_bar) + abs(H_sub.imag),
        "max_deviation": max(dev_q, dev_p, abs(H_sub.real + H_bar) + abs(H_sub.imag)),
    }


def free_limit(q0, p0, m, t):
    """omega -> 0 limits: free motion and its momentum-flipped mirror."""
    t = np.asarray(t, dtype=float)
    return (q0 + p0 * t / m, np.full_like(t, p0)), (q0 - p0 * t / m, np.full_like(t, -p0))


def rk4(rhs, y0, t_end: float, dt: float):
    """Classical fixed-step RK4 for ``y' = rhs(y)``; returns times and states."""
    steps = int(round(t_end / dt))
    y = np.array(y0, dtype=float)
    out = [y.copy()]
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y.copy())
    return np.arange(steps + 1) * dt, np.array(out)


def newton_rhs(force, m: float = 1.0):
    """Right-hand side for ``(q, p)`` with ``q' = p/m`` and ``p' = force(q)``."""
    return lambda y: np.array([y[1] / m, force(y[0])])
