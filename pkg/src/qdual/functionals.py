"""Scalar diagnostics: entropy, Hamiltonian functionals, F = -<s>, free energy, relative entropy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields as dc_fields

import numpy as np

from .errors import FormulaMismatch, NonNormalizable, SupportMismatch
from .fields import Grid1D, MadelungFields, PhysicalParams, derivative
from .dynamics import Potential

LOG_FLOOR = 1e-300


# ---------------------------------------------------------------- entropy


def shannon_entropy(rho, grid: Grid1D, dl: float = 1.0) -> float:
    """Differential entropy ``-int rho ln(dl * rho) dx`` with ``0 ln 0 = 0``."""
    if dl <= 0:
        raise ValueError("dl must be positive")
    rho = np.asarray(rho, dtype=float)
    terms = np.where(rho > 0, rho * np.log(np.maximum(dl * rho, LOG_FLOOR)), 0.0)
    return float(-grid.integrate(terms))


@dataclass(frozen=True)
class EntropyRate:
    S_dot: float
    from_uv: float
    from_balance: float
    from_divergence: float
    from_drift_divergence: float
    mismatch: float
    S_dot_int: float
    S_dot_ext: float


def entropy_rate(fields: MadelungFields, params: PhysicalParams | None = None, tol: float = 1e-6, check: bool = True) -> EntropyRate:
    """Shannon entropy rate evaluated four equivalent ways.

    ``D S' = -<u v> = <v^2> - <b v> = D <v'>`` and
    ``D S' = D <b'> + <u^2>`` (using ``D <u'> = -<u^2>``). The split
    ``S' = S'_int + S'_ext`` uses ``D S'_int = <v^2>`` (production) and
    ``D S'_ext = -<b v>``, which in the Smoluchowski convention are
    ``(m gamma / kT) <v^2>`` and ``-(m gamma / kT) <b v>``.
    """
    params = params or fields.params
    D = params.D
    g = fields.grid
    u, v, b = fields.u, fields.v, fields.b
    mean = fields.mean
    from_uv = -mean(u * v) / D
    from_balance = (mean(v * v) - mean(b * v)) / D
    from_divergence = mean(derivative(v, g))
    from_drift = mean(derivative(b, g)) + mean(u * u) / D
    forms = np.array([from_uv, from_balance, from_divergence, from_drift])
    mismatch = float(forms.max() - forms.min())
    if check and mismatch > tol * max(1.0, float(np.abs(forms).max())):
        raise FormulaMismatch(f"entropy-rate forms disagree by {mismatch:.3e}")
    return EntropyRate(
        S_dot=float(from_uv),
        from_uv=float(from_uv),
        from_balance=float(from_balance),
        from_divergence=float(from_divergence),
        from_drift_divergence=float(from_drift),
        mismatch=mismatch,
        S_dot_int=float(mean(v * v) / D),
        S_dot_ext=float(-mean(b * v) / D),
    )


# ---------------------------------------------------------------- Hamiltonians


def _h(fields, W, kappa, sign_u, sign_w=1.0):
    m = fields.params.m
    return fields.mean(0.5 * m * fields.v**2 + sign_w * W + sign_u * (1.0 - kappa) * 0.5 * m * fields.u**2)


@dataclass(frozen=True)
class HamiltonianSet:
    """Energy functionals of one state.

    ``H_kappa``/``K_kappa`` use the effective potential ``W`` that drives
    the dynamics; ``H_plus``/``H_minus`` are the kappa-labelled pair built
    on the base potential ``V``. ``H_plus_0``/``H_minus_0`` are the pair
    without kappa label (``(m/2)u^2`` enters with unit weight), which is
    the pair the dual scenarios of the kappa = 0 and kappa = 2 sectors
    refer to. ``H_dual`` is the functional with ``dF/dt = -H_dual``.
    """

    H_kappa: float
    K_kappa: float
    H_plus: float
    H_minus: float
    H_cl_plus: float
    H_cl_minus: float
    H_plus_0: float
    H_minus_0: float
    H_dual: float


def hamiltonians(fields: MadelungFields, pot: Potential, params: PhysicalParams | None = None) -> HamiltonianSet:
    params = params or fields.params
    k = params.kappa
    W, V = pot.effective, pot.V
    return HamiltonianSet(
        H_kappa=_h(fields, W, k, +1.0),
        K_kappa=_h(fields, W, k, -1.0),
        H_plus=_h(fields, V, k, +1.0),
        H_minus=_h(fields, V, k, -1.0, -1.0),
        H_cl_plus=_h(fields, V, 1.0, 0.0),
        H_cl_minus=_h(fields, V, 1.0, 0.0, -1.0),
        H_plus_0=_h(fields, V, 0.0, +1.0),
        H_minus_0=_h(fields, V, 0.0, -1.0, -1.0),
        H_dual=_h(fields, W, k, -1.0, -1.0),
    )


def kappa_identities(fields: MadelungFields, pot: Potential) -> dict[str, float]:
    """Deviations of K_0 = H_2, H_1 = K_1 and K_2 = H_0 on one state."""

    def pair(kappa):
        return (_h(fields, pot.effective, kappa, +1.0), _h(fields, pot.effective, kappa, -1.0))

    H0, K0 = pair(0.0)
    H1, K1 = pair(1.0)
    H2, K2 = pair(2.0)
    return {"K0-H2": K0 - H2, "H1-K1": H1 - K1, "K2-H0": K2 - H0}


# ---------------------------------------------------------------- F = -<s>


def lyapunov_F(fields: MadelungFields) -> float:
    return -fields.mean(fields.s)


@dataclass(frozen=True)
class FRates:
    F_dot: float
    F_ddot: float


def F_rates(fields: MadelungFields, pot: Potential, params: PhysicalParams | None = None) -> FRates:
    """Rates of ``F = -<s>`` from the functional identities.

    ``dF/dt = -int rho [(m/2) v^2 - W - (1-kappa)(m/2) u^2]`` and
    ``d2F/dt2 = 2 int rho v d/dx [W + (1-kappa) Q]``.
    """
    params = params or fields.params
    k = params.kappa
    W = pot.effective
    F_dot = -_h(fields, W, k, -1.0, -1.0)
    force = derivative(W + (1.0 - k) * fields.Q, fields.grid)
    return FRates(F_dot=float(F_dot), F_ddot=float(2.0 * fields.mean(fields.v * force)))


def mean_action_rate(fields: MadelungFields, pot: Potential, params: PhysicalParams | None = None) -> float:
    """``<ds/dt>`` read off the generalized Hamilton-Jacobi equation."""
    params = params or fields.params
    m = params.m
    ds = -0.5 * m * fields.v**2 - pot.effective - (1.0 - params.kappa) * fields.Q
    return fields.mean(ds)


class PhaseTracker:
    """Follows the phase of psi continuously in time at one reference point.

    A spatially unwrapped phase is only fixed up to a constant; tracking
    ``angle(psi_new / psi_old)`` at a well-resolved point between steps
    recovers that constant, so ``s`` and ``F = -<s>`` become genuine
    functions of time.
    """

    def __init__(self, psi: np.ndarray, hbar: float = 1.0, index: int | None = None, s0=None):
        self.hbar = hbar
        self.index = int(np.argmax(np.abs(psi))) if index is None else index
        self.prev = complex(psi[self.index])
        if s0 is None:
            self.value = hbar * math.atan2(self.prev.imag, self.prev.real)
        else:
            # start from a known action field instead of the principal angle
            self.value = float(np.asarray(s0)[self.index])

    def update(self, psi: np.ndarray) -> float:
        new = complex(psi[self.index])
        ratio = new * self.prev.conjugate()
        self.value += self.hbar * math.atan2(ratio.imag, ratio.real)
        self.prev = new
        return self.value

    def gauge(self, s: np.ndarray) -> np.ndarray:
        """Shift an anchored phase field so it agrees with the tracked value."""
        return s - s[self.index] + self.value


# ---------------------------------------------------------------- Smoluchowski functionals


def stationary_density(script_V, grid: Grid1D, params: PhysicalParams, tail_tol: float = 1e-12):
    """Boltzmann density ``exp(-V/kT)/Z`` and ``Z`` by quadrature.

    On reflecting grids (stand-ins for the real line) the density must have
    decayed at both ends; a periodic grid is a genuine circle and any
    bounded potential is admissible.
    """
    script_V = np.asarray(script_V, dtype=float)
    shift = script_V.min()
    w = np.exp(-(script_V - shift) / params.kT)
    if grid.boundary == "reflecting" and max(w[0], w[-1]) > tail_tol * w.max():
        raise NonNormalizable("stationary density has not decayed at the domain ends")
    Zs = grid.integrate(w)
    Z = Zs * math.exp(-shift / params.kT)
    return w / Zs, float(Z)


def free_energy(rho, script_V, grid: Grid1D, params: PhysicalParams, dl: float = 1.0):
    """Helmholtz free energy ``Psi = U - T S`` with ``U = <V>`` and ``T S = kT * S``."""
    U = float(grid.integrate(rho * np.asarray(script_V, dtype=float)))
    TS = params.kT * shannon_entropy(rho, grid, dl)
    return U - TS, U, TS


def kl_entropy(rho, rho_star, grid: Grid1D, floor: float = 1e-300, mass_tol: float = 1e-10) -> float:
    """Conditional Kullback-Leibler entropy ``-int rho ln(rho / rho*)``, always <= 0."""
    rho = np.asarray(rho, dtype=float)
    rho_star = np.asarray(rho_star, dtype=float)
    outside = rho_star < floor
    stray = grid.integrate(np.where(outside, rho, 0.0))
    if stray > mass_tol:
        raise SupportMismatch(f"{stray:.3e} of the mass sits where the reference density vanishes")
    ok = (rho > 0) & ~outside
    terms = np.zeros_like(rho)
    terms[ok] = rho[ok] * np.log(rho[ok] / rho_star[ok])
    return float(-grid.integrate(terms))


# ---------------------------------------------------------------- records

NAN = float("nan")


@dataclass
class DiagnosticsRecord:
    """One row of the diagnostics time series; quantities a run does not define stay NaN."""

    t: float
    norm: float = NAN
    S: float = NAN
    S_dot: float = NAN
    mean_v2: float = NAN
    mean_u2: float = NAN
    mean_Q: float = NAN
    H_kappa: float = NAN
    K_kappa: float = NAN
    H_plus: float = NAN
    H_minus: float = NAN
    H_cl_plus: float = NAN
    H_cl_minus: float = NAN
    F: float = NAN
    Psi: float = NAN
    U: float = NAN
    H_c: float = NAN
    S_dot_int: float = NAN
    S_dot_ext: float = NAN
    Z: float = NAN

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in dc_fields(cls)]

    def as_row(self) -> list[float]:
        return [float(v) for v in asdict(self).values()]


def quantum_record(t: float, fields: MadelungFields, pot: Potential, params: PhysicalParams, dl: float = 1.0) -> DiagnosticsRecord:
    """Diagnostics of a wave-function state (``fields.s`` should carry the tracked gauge)."""
    H = hamiltonians(fields, pot, params)
    rate = entropy_rate(fields, params, check=False)
    return DiagnosticsRecord(
        t=t,
        norm=fields.norm(),
        S=shannon_entropy(fields.rho, fields.grid, dl),
        S_dot=rate.S_dot,
        mean_v2=fields.mean(fields.v**2),
        mean_u2=fields.mean(fields.u**2),
        mean_Q=fields.mean(fields.Q),
        H_kappa=H.H_kappa,
        K_kappa=H.K_kappa,
        H_plus=H.H_plus,
        H_minus=H.H_minus,
        H_cl_plus=H.H_cl_plus,
        H_cl_minus=H.H_cl_minus,
        F=lyapunov_F(fields),
        S_dot_int=rate.S_dot_int,
        S_dot_ext=rate.S_dot_ext,
    )


def diffusion_record(t: float, rho, drift, grid: Grid1D, params: PhysicalParams, script_V=None, rho_star=None, Z=None, dl: float = 1.0) -> DiagnosticsRecord:
    """Diagnostics of a density evolving under ``rho_t = D rho'' - (b rho)'``."""
    fields = MadelungFields(grid, rho, np.zeros(grid.n), params, drift=drift)
    rate = entropy_rate(fields, params, check=False)
    rec = DiagnosticsRecord(
        t=t,
        norm=fields.norm(),
        S=shannon_entropy(rho, grid, dl),
        S_dot=rate.S_dot,
        mean_v2=fields.mean(fields.v**2),
        mean_u2=fields.mean(fields.u**2),
        mean_Q=fields.mean(fields.Q),
        S_dot_int=rate.S_dot_int,
        S_dot_ext=rate.S_dot_ext,
    )
    if script_V is not None:
        rec.Psi, rec.U, _ = free_energy(rho, script_V, grid, params, dl)
    if rho_star is not None:
        rec.H_c = kl_entropy(rho, rho_star, grid)
        rec.Z = NAN if Z is None else Z
    return rec
