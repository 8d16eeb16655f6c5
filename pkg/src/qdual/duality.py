"""Transformation maps: kappa reduction, length scaling, hyperbolic mixing and the imaginary-time maps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .dynamics import HeatStepper, Potential
from .errors import BorderlineKappa, HorizonExceeded, RangeWarning
from .fields import (
    DEFAULT_EPS_FLOOR,
    DualPair,
    Grid1D,
    MadelungFields,
    PhysicalParams,
    WaveFunction,
    decompose,
)

ACTION_RANGE = 30.0


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScaleParams:
    """Length scaling ``x -> x / beta`` with ``beta = exp(alpha / 2)``."""

    beta: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        beta, alpha = self.beta, self.alpha
        if beta is None and alpha is None:
            raise ValueError("give beta or alpha")
        if beta is None:
            beta = math.exp(alpha / 2.0)
        elif alpha is None:
            if beta <= 0:
                raise ValueError("beta must be positive")
            alpha = 2.0 * math.log(beta)
        elif not math.isclose(beta, math.exp(alpha / 2.0), rel_tol=1e-15):
            raise ValueError("beta and alpha are inconsistent")
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "alpha", float(alpha))


def scale_fields(fields: MadelungFields, pot: Potential, sp: ScaleParams):
    """Relabel the state under ``x' = x / beta``.

    ``rho'(x') = beta rho(x)``, ``s'(x') = s(x) / beta^2`` and
    ``V'(x') = V(x) / beta^2`` on the rescaled grid; no interpolation, so
    node ``i`` of the new grid carries the value of node ``i`` of the old.
    """
    b = sp.beta
    grid = fields.grid.scaled(b)
    new = MadelungFields(grid, b * fields.rho, fields.s / b**2, fields.params, fields.eps_floor)
    new_pot = Potential(grid, pot.V / b**2, pot.sign_convention, pot.label)
    return new, new_pot


# ---------------------------------------------------------------- hyperbolic mixing


@dataclass(frozen=True)
class HamiltonianPair:
    H: float
    K: float

    def invariant(self) -> float:
        return self.H**2 - self.K**2


def hyperbolic_mix(pair: HamiltonianPair, alpha: float) -> HamiltonianPair:
    """``H' = cosh(a) H - sinh(a) K``, ``K' = -sinh(a) H + cosh(a) K``."""
    if not (math.isfinite(pair.H) and math.isfinite(pair.K) and math.isfinite(alpha)):
        raise ValueError("hyperbolic_mix needs finite values")
    c, s = math.cosh(alpha), math.sinh(alpha)
    return HamiltonianPair(c * pair.H - s * pair.K, -s * pair.H + c * pair.K)


# ---------------------------------------------------------------- kappa reduction


@dataclass(frozen=True)
class KappaReduction:
    """Image of modular data under the kappa scaling.

    The image evolves in ``t' = time_dilation * t`` under the equation with
    coupling ``target_kappa``; its phase is ``s / time_dilation``.
    """

    psi: WaveFunction
    pot: Potential
    time_dilation: float
    target_kappa: float
    source_kappa: float

    def reduced_time(self, t: float) -> float:
        return self.time_dilation * t


def kappa_reduce(psi: WaveFunction, pot: Potential, kappa: float, params: PhysicalParams | None = None, tol: float = 1e-12) -> KappaReduction:
    """Map modular data with coupling ``kappa`` onto the linear (kappa < 1) or kappa = 2 (kappa > 1) equation."""
    params = params or PhysicalParams()
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    if abs(kappa - 1.0) <= tol:
        raise BorderlineKappa("kappa = 1 admits no reduction: the u^2 terms cancel")
    if kappa == 0.0 or kappa == 2.0:
        return KappaReduction(psi, pot, 1.0, kappa, kappa)
    c = math.sqrt(abs(1.0 - kappa))
    f = decompose(psi, params)
    psi_r = np.sqrt(f.rho) * np.exp(1j * f.s / (c * params.hbar))
    pot_r = Potential(pot.grid, pot.V / abs(1.0 - kappa), pot.sign_convention, pot.label)
    return KappaReduction(WaveFunction(psi.grid, psi_r), pot_r, c, 0.0 if kappa < 1 else 2.0, kappa)


def kappa_pullback(psi_reduced: WaveFunction, red: KappaReduction, params: PhysicalParams | None = None, s=None) -> WaveFunction:
    """Inverse of :func:`kappa_reduce` applied to an evolved image.

    With the anchored phase of :func:`decompose` the result is fixed up to
    a global phase; pass a time-tracked phase ``s`` of the image to keep it.
    """
    params = params or PhysicalParams()
    if red.time_dilation == 1.0:
        return psi_reduced
    if s is None:
        s = decompose(psi_reduced, params).s
    rho = np.abs(psi_reduced.psi) ** 2
    return WaveFunction(psi_reduced.grid, np.sqrt(rho) * np.exp(1j * red.time_dilation * s / params.hbar))


# ---------------------------------------------------------------- imaginary-time maps


def _check_action_range(s, rho, hbar):
    support = rho >= DEFAULT_EPS_FLOOR * rho.max()
    peak = float(np.abs(s[support]).max()) / hbar if support.any() else 0.0
    if peak > ACTION_RANGE:
        warnings.warn(f"max|s|/hbar = {peak:.1f} exceeds {ACTION_RANGE}; exp(+-s/hbar) loses precision", RangeWarning, stacklevel=3)


def wick_quantum_to_heat(psi: WaveFunction, params: PhysicalParams | None = None, s=None) -> DualPair:
    """``theta* = |psi| exp(-s/hbar)`` and ``theta = |psi| exp(+s/hbar)``.

    ``s`` defaults to the anchored phase of :func:`decompose`; pass a
    time-tracked phase to keep the global constant.
    """
    params = params or PhysicalParams()
    if s is None:
        s = decompose(psi, params).s
    amp = np.abs(psi.psi)
    _check_action_range(s, amp**2, params.hbar)
    x = s / params.hbar
    return DualPair(psi.grid, amp * np.exp(x), amp * np.exp(-x))


def wick_classical(rho, s, pot: Potential):
    """Imaginary-time dual of classical Hamilton-Jacobi data.

    Returns ``(rho, -s)`` and the potential with flipped sign convention;
    a forward trajectory under ``+V`` corresponds to the time-reflected
    trajectory under ``-V``. Applying the map twice is the identity.
    """
    return np.asarray(rho), -np.asarray(s), pot.flipped()


# ---------------------------------------------------------------- Schrodinger trajectory to diffusion pair


def _kinetic_matrix(grid: Grid1D, params: PhysicalParams) -> np.ndarray:
    """Dense matrix of the spectral kinetic operator in the grid basis."""
    n = grid.n
    eye = np.eye(n)
    lam = params.hbar**2 * grid.k**2 / (2.0 * params.m)
    if grid.boundary == "periodic":
        T = np.fft.ifft(lam[:, None] * np.fft.fft(eye, axis=0), axis=0).real
    else:
        T = scipy.fft.idct(lam[:, None] * scipy.fft.dct(eye, type=2, norm="ortho", axis=0), type=2, norm="ortho", axis=0)
    return 0.5 * (T + T.T)


@dataclass
class SpectralHamiltonian:
    """Eigen-decomposition of ``H = -(hbar^2/2m) d^2 + W`` on the grid."""

    grid: Grid1D
    energies: np.ndarray
    modes: np.ndarray

    @classmethod
    def build(cls, pot: Potential, params: PhysicalParams) -> "SpectralHamiltonian":
        H = _kinetic_matrix(pot.grid, params) + np.diag(pot.effective)
        E, U = np.linalg.eigh(H)
        return cls(pot.grid, E, U)

    def coefficients(self, f) -> np.ndarray:
        return self.modes.T @ f

    def synthesize(self, c) -> np.ndarray:
        return self.modes @ c


@dataclass
class DualTrajectory:
    times: np.ndarray
    theta: np.ndarray
    theta_star: np.ndarray
    grid: Grid1D
    report: dict = field(default_factory=dict)

    def pair(self, k: int) -> DualPair:
        return DualPair(self.grid, self.theta[k], self.theta_star[k])


def wick_schrodinger_to_diffusion(
    psi_trajectory,
    times,
    pot: Potential,
    params: PhysicalParams | None = None,
    horizon: float | None = None,
    mode_tol: float = 1e-13,
    growth_budget: float = 1e8,
    verify: bool = True,
    verify_steps: int = 200,
) -> DualTrajectory:
    """Dual diffusion pair of a linear Schrodinger trajectory.

    With ``psi(t) = sum_n c_n exp(-i E_n t/hbar) phi_n`` the substitution
    ``t -> -i t`` together with ``s0 -> -s0`` on the initial phase gives
    ``theta*(t) = exp(-H t/hbar) theta*(0)`` with ``theta*(0) =
    |psi0| exp(+s0/hbar)``, and ``theta(t) = exp(+H t/hbar) theta(0)``
    with ``theta(0) = |psi0| exp(-s0/hbar)``. Both are evaluated in the
    eigenbasis of the discrete Hamiltonian; modes of ``theta(0)`` below
    ``mode_tol`` are dropped so the backward flow only acts on resolved
    content. The report records how well the trajectory obeys the linear
    equation and how far the continuation sits from direct semigroup
    evolution (``theta*`` forward, ``theta`` from its horizon value).
    """
    params = params or PhysicalParams()
    times = np.asarray(times, dtype=float)
    T = float(times.max()) if horizon is None else float(horizon)
    if times.min() < 0 or times.max() > T * (1 + 1e-12):
        raise HorizonExceeded(f"times must lie in [0, {T}]")
    arrs = np.array([p.psi if isinstance(p, WaveFunction) else np.asarray(p, dtype=complex) for p in psi_trajectory])
    grid = pot.grid
    hbar = params.hbar
    spec = SpectralHamiltonian.build(pot, params)
    E = spec.energies
    w = math.sqrt(grid.dx)

    # linear-trajectory consistency: every slice must give the same c_n
    c0 = spec.coefficients(arrs[0]) * w
    spread = 0.0
    for tk, a in zip(times, arrs):
        ck = spec.coefficients(a) * w * np.exp(1j * E * (tk - times[0]) / hbar)
        spread = max(spread, float(np.linalg.norm(ck - c0)))

    f0 = decompose(WaveFunction(grid, arrs[0]), params)
    _check_action_range(f0.s, f0.rho, hbar)
    amp = np.sqrt(f0.rho)
    ts0 = amp * np.exp(f0.s / hbar)
    t0 = amp * np.exp(-f0.s / hbar)
    d_star = spec.coefficients(ts0)
    d = spec.coefficients(t0)
    keep = np.abs(d) >= mode_tol * np.abs(d).max()
    growth = float(np.exp((E[keep].max() - E[keep].min()) * T / hbar))
    if growth > growth_budget:
        raise HorizonExceeded(f"backward flow would amplify kept modes by {growth:.2e} over the horizon")
    d = np.where(keep, d, 0.0)
    shift = E.min()
    theta_star = np.array([spec.synthesize(d_star * np.exp(-(E - shift) * t / hbar)) * np.exp(-shift * t / hbar) for t in times])
    # only kept modes are exponentiated, dropped ones would overflow to inf * 0
    up = np.where(keep, E - shift, 0.0)
    theta = np.array([spec.synthesize(np.where(keep, d * np.exp(up * t / hbar), 0.0)) * np.exp(shift * t / hbar) for t in times])
    # the anchor slice is the data itself, not its truncated expansion
    at0 = times == 0.0
    theta_star[at0] = ts0
    theta[at0] = t0
    report = {"trajectory_spread": spread, "modes_kept": int(keep.sum()), "backward_growth": growth}

    if verify and len(times) > 1:
        report.update(_semigroup_deviation(theta, theta_star, times, pot, params, T, verify_steps))
    return DualTrajectory(times, theta, theta_star, grid, report)


def _semigroup_deviation(theta, theta_star, times, pot, params, T, steps):
    """Compare the continuation with split-step semigroup evolution."""
    grid = pot.grid
    # the heat steppers integrate theta_t = D theta'' + W/(2mD) theta, i.e. -H/hbar
    dev_star = 0.0
    for k in range(1, len(times)):
        span = times[k] - times[k - 1]
        if span <= 0:
            continue
        nsteps = max(1, int(round(steps * span / max(T, 1e-300))))
        stepper = HeatStepper(grid, pot, params, span / nsteps, check_semigroup=False)
        f = theta_star[k - 1]
        for _ in range(nsteps):
            f = stepper.step(f)
        dev_star = max(dev_star, _rel_l2(f, theta_star[k], grid))
    dev = 0.0
    end = int(np.argmax(times))
    for k in range(len(times)):
        span = times[end] - times[k]
        if span <= 0:
            continue
        nsteps = max(1, int(round(steps * span / max(T, 1e-300))))
        stepper = HeatStepper(grid, pot, params, span / nsteps, check_semigroup=False)
        f = theta[end]
        for _ in range(nsteps):
            f = stepper.step(f)
        dev = max(dev, _rel_l2(f, theta[k], grid))
    return {"forward_semigroup_deviation": dev_star, "backward_semigroup_deviation": dev}


def _rel_l2(a, b, grid):
    return float(np.sqrt(grid.integrate((a - b) ** 2) / grid.integrate(b**2)))
