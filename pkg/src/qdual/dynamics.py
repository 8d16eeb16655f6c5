"""Time integrators for the modular, Hamilton-Jacobi, heat and Fokker-Planck families."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg
from scipy.special import exprel

from .errors import (
    BlowUp,
    CausticDetected,
    CFLViolation,
    HorizonExceeded,
    NonFinite,
    NormDrift,
    UnresolvedField,
)
from .fields import (
    DEFAULT_EPS_FLOOR,
    Grid1D,
    MadelungFields,
    PhysicalParams,
    WaveFunction,
    derivative,
    laplacian,
    quantum_potential,
)

SCHEMES = (
    "split_step_spectral",
    "crank_nicolson_picard",
    "upwind_drift_spectral_diffusion",
    "method_of_lines_rk4",
)

NORM_TOL = 1e-6
TAIL_TOL = 1e-8


# ---------------------------------------------------------------- potentials


@dataclass(frozen=True)
class Potential:
    """A real potential on the grid.

    ``V`` is the base function; ``sign_convention`` decides whether the
    dynamics sees ``+V`` (confining) or ``-V`` (scattering).
    """

    grid: Grid1D
    V: np.ndarray
    sign_convention: str = "confining"
    label: str = "custom"

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.shape != (self.grid.n,):
            raise ValueError("potential must live on the grid")
        if not np.all(np.isfinite(V)):
            raise NonFinite("potential has non-finite values")
        if self.sign_convention not in ("confining", "scattering"):
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")
        object.__setattr__(self, "V", V)

    @property
    def effective(self) -> np.ndarray:
        return self.V if self.sign_convention == "confining" else -self.V

    @property
    def lower_bound(self) -> float:
        return float(self.effective.min())

    @property
    def upper_bound(self) -> float:
        return float(self.effective.max())

    def flipped(self) -> "Potential":
        other = "scattering" if self.sign_convention == "confining" else "confining"
        return replace(self, sign_convention=other)

    def scaled(self, factor: float) -> "Potential":
        return replace(self, V=self.V * factor)

    def bounded_above(self) -> bool:
        """Heuristic for 'bounded from above' on a truncated domain.

        An effective potential that keeps growing towards the domain edges
        is treated as unbounded above.
        """
        W = self.effective
        edge = max(2, self.grid.n // 20)
        inner = W[edge:-edge]
        scale = max(1.0, float(np.abs(W).max()))
        return bool(max(W[:edge].max(), W[-edge:].max()) <= inner.max() + 1e-12 * scale)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.n), label="zero")

    @classmethod
    def harmonic(cls, grid, omega=1.0, m=1.0, center=0.0, sign_convention="confining"):
        V = 0.5 * m * omega**2 * (grid.x - center) ** 2
        return cls(grid, V, sign_convention, label="harmonic")

    @classmethod
    def quartic(cls, grid, a=1.0, center=0.0, sign_convention="confining"):
        return cls(grid, a * (grid.x - center) ** 4, sign_convention, label="quartic")

    @classmethod
    def from_table(cls, grid, xs, values, sign_convention="confining"):
        """Linear interpolation of a tabulated potential onto the grid."""
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(xs)
        return cls(grid, np.interp(grid.x, xs[order], values[order]), sign_convention, label="custom_table")


@dataclass
class StepControl:
    dt: float
    t: float = 0.0
    scheme: str = "split_step_spectral"
    filter_k: float | None = None
    horizon: float | None = None
    cfl_report: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "crank_nicolson_picard":
            raise NotImplementedError("crank_nicolson_picard is reserved and not implemented")


def stability_cutoff(D: float, horizon: float, budget: float = 1e6, rate: float = 1.0) -> float:
    """Largest wavenumber whose backward-diffusive growth over ``horizon`` stays below ``budget``.

    For kappa > 1 the modular equation hides a backward heat flow; modes
    grow like ``exp(rate * D k^2 t)`` with ``rate = sqrt(kappa - 1)``.
    """
    return float(np.sqrt(np.log(budget) / (rate * D * horizon)))


def stiffness_cutoff(params: PhysicalParams, dt: float, max_rotation: float = 0.2) -> float:
    """Wavenumber at which the kinetic substep rotates a mode by ``max_rotation``.

    With kappa != 0 the -kappa Q phase and the kinetic step are both stiff
    at high k and their splitting goes unstable once the kinetic rotation
    per step approaches order one.
    """
    return float(np.sqrt(2.0 * params.m * max_rotation / (params.hbar * dt)))


def default_filter(params: PhysicalParams, dt: float, horizon: float | None = None) -> float | None:
    """Spectral cutoff used when none is given: none for the linear equation."""
    kappa = params.kappa
    if kappa == 0.0:
        return None
    kc = stiffness_cutoff(params, dt)
    if kappa > 1.0:
        if horizon is None:
            warnings.warn("kappa > 1 without a horizon: only the stiffness cutoff is applied", stacklevel=3)
        else:
            kc = min(kc, stability_cutoff(params.D, horizon, rate=np.sqrt(kappa - 1.0)))
    return kc


# ---------------------------------------------------------------- spectral helpers


def _to_modes(f, grid):
    if grid.boundary == "periodic":
        return np.fft.fft(f)
    if np.iscomplexobj(f):
        return scipy.fft.dct(f.real, type=2, norm="ortho") + 1j * scipy.fft.dct(f.imag, type=2, norm="ortho")
    return scipy.fft.dct(f, type=2, norm="ortho")


def _from_modes(F, grid, like_complex):
    if grid.boundary == "periodic":
        out = np.fft.ifft(F)
        return out if like_complex else out.real
    if np.iscomplexobj(F):
        out = scipy.fft.idct(F.real, type=2, norm="ortho") + 1j * scipy.fft.idct(F.imag, type=2, norm="ortho")
        return out if like_complex else out.real
    return scipy.fft.idct(F, type=2, norm="ortho")


def spectral_multiply(f, grid: Grid1D, multiplier):
    """Apply a diagonal operator in the kinetic eigenbasis."""
    f = np.asarray(f)
    return _from_modes(_to_modes(f, grid) * multiplier, grid, np.iscomplexobj(f))


# ---------------------------------------------------------------- modular equation


class ModularStepper:
    """Strang splitting for ``i hbar psi_t = [-(hbar^2/2m) psi'' + W - kappa Q] psi``.

    The potential substeps are pure phases and leave ``|psi|`` (hence Q)
    unchanged, so they are exact. For ``kappa != 0`` a spectral cutoff is
    applied after each kinetic substep (see :func:`default_filter`); for
    ``kappa > 1`` it also keeps the hidden backward-diffusive modes from
    amplifying roundoff. ``filter_k=np.inf`` disables it.
    """

    def __init__(self, grid, pot: Potential, params: PhysicalParams, dt: float, filter_k=None, horizon=None, eps_floor=DEFAULT_EPS_FLOOR, check_norm=True, check_tail=True):
        self.grid = grid
        self.pot = pot
        self.params = params
        self.dt = dt
        self.eps_floor = eps_floor
        self.check_norm = check_norm
        self.check_tail = check_tail
        hbar, m = params.hbar, params.m
        self.kinetic = np.exp(-1j * hbar * grid.k**2 * dt / (2.0 * m))
        if filter_k is None:
            filter_k = default_filter(params, dt, horizon)
        elif not np.isfinite(filter_k):
            filter_k = None
        self.filter_k = filter_k
        if filter_k is not None:
            self.keep = np.abs(grid.k) <= filter_k
            self.tail = ~self.keep
        else:
            self.keep = None
            kmax = np.abs(grid.k).max()
            self.tail = np.abs(grid.k) > (2.0 / 3.0) * kmax

    def _half_potential(self, psi):
        W = self.pot.effective
        if self.params.kappa != 0.0:
            Q = quantum_potential(np.abs(psi) ** 2, self.grid, self.params, self.eps_floor)
            W = W - self.params.kappa * Q
        return psi * np.exp(-0.5j * W * self.dt / self.params.hbar)

    def step_array(self, psi: np.ndarray) -> np.ndarray:
        psi = self._half_potential(psi)
        F = _to_modes(psi, self.grid)
        if self.check_tail:
            power = np.abs(F) ** 2
            frac = power[self.tail].sum() / power.sum()
            if frac > TAIL_TOL:
                raise UnresolvedField(f"spectral tail holds {frac:.2e} of the energy")
        F = F * self.kinetic
        if self.keep is not None:
            F = F * self.keep
        psi = _from_modes(F, self.grid, True)
        psi = self._half_potential(psi)
        if not np.all(np.isfinite(psi)):
            raise NonFinite("modular step produced non-finite values")
        if self.check_norm:
            drift = abs(self.grid.integrate(np.abs(psi) ** 2) - 1.0)
            if drift > NORM_TOL:
                raise NormDrift(f"norm drifted by {drift:.2e}")
        return psi

    def step(self, psi: WaveFunction) -> WaveFunction:
        return WaveFunction(self.grid, self.step_array(psi.psi))

    def evolve(self, psi: WaveFunction, steps: int, every: int = 0, callback=None) -> WaveFunction:
        arr = psi.psi
        for i in range(1, steps + 1):
            arr = self.step_array(arr)
            if callback is not None and every and i % every == 0:
                callback(i, arr)
        return WaveFunction(self.grid, arr)


def step_modular(psi: WaveFunction, pot: Potential, params: PhysicalParams, ctl: StepControl) -> WaveFunction:
    """One Strang step of the modular equation; advances ``ctl.t``."""
    if ctl.scheme != "split_step_spectral":
        raise ValueError("step_modular supports split_step_spectral only")
    out = ModularStepper(psi.grid, pot, params, ctl.dt, ctl.filter_k, ctl.horizon).step(psi)
    ctl.t += ctl.dt
    return out


# ---------------------------------------------------------------- classical Hamilton-Jacobi


def _support(rho, eps_floor):
    return rho >= eps_floor * rho.max()


def _hj_rhs(rho, s, W, grid, m):
    v = derivative(s, grid) / m
    drho = -derivative(rho * v, grid)
    ds = -0.5 * m * v**2 - W
    return drho, ds


def step_hj_classical(fields: MadelungFields, pot: Potential, params: PhysicalParams, ctl: StepControl, sign: int | None = None, eps_floor=1e-12) -> MadelungFields:
    """RK4 method-of-lines step of the kappa = 1 hydrodynamic system.

    ``rho_t = -(rho v)'`` and ``s_t + (s')^2/2m + W = 0`` with ``W = +V``
    or ``-V``. ``sign`` overrides the potential's own convention. Space
    derivatives follow the grid's boundary policy, so non-periodic phases
    need a reflecting grid.
    """
    grid, m = fields.grid, params.m
    W = pot.effective if sign is None else np.sign(sign) * pot.V
    rho, s, dt = fields.rho, fields.s, ctl.dt
    supp = _support(rho, eps_floor)
    v = derivative(s, grid) / m
    dvdx = derivative(v, grid)
    # accumulated-strain proxy: 1 + t min v' reaches zero before characteristics
    # actually cross (for free flow at half the crossing time), while the
    # fields are still resolved
    proxy = 1.0 + (ctl.t + dt) * dvdx[supp].min()
    ctl.cfl_report = {"jacobian_proxy": float(proxy), "max_v": float(np.abs(v[supp]).max())}
    if proxy <= 0.0:
        raise CausticDetected(f"characteristic crossing indicated at t={ctl.t:.6g} (1 + t min dv/dx = {proxy:.3g})", t=ctl.t, partial=fields)
    vmax = np.abs(v[supp]).max()
    if vmax > 0 and dt > 0.5 * grid.dx / vmax:
        raise CFLViolation(f"dt={dt:g} exceeds 0.5*dx/max|v|={0.5 * grid.dx / vmax:g}")
    k1 = _hj_rhs(rho, s, W, grid, m)
    k2 = _hj_rhs(rho + 0.5 * dt * k1[0], s + 0.5 * dt * k1[1], W, grid, m)
    k3 = _hj_rhs(rho + 0.5 * dt * k2[0], s + 0.5 * dt * k2[1], W, grid, m)
    k4 = _hj_rhs(rho + dt * k3[0], s + dt * k3[1], W, grid, m)
    rho_new = rho + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    s_new = s + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(rho_new)) and np.all(np.isfinite(s_new))):
        raise CausticDetected(f"non-finite fields at t={ctl.t:.6g}", t=ctl.t, partial=fields)
    ctl.t += dt
    return MadelungFields(grid, rho_new, s_new, fields.params, fields.eps_floor)


# ---------------------------------------------------------------- generalized heat equations


class HeatStepper:
    """Strang split step for ``theta_t = D theta'' + (W / 2mD) theta``.

    With ``W = -V'`` and ``V'`` bounded below this is the contractive
    semigroup ``exp(-H t / hbar)``.
    """

    def __init__(self, grid, pot: Potential, params: PhysicalParams, dt: float, check_semigroup=True):
        if check_semigroup and not pot.bounded_above():
            raise ValueError("forward heat flow needs an effective potential bounded from above")
        self.grid = grid
        self.dt = dt
        D = params.D
        self.diffusion = np.exp(-D * grid.k**2 * dt)
        self.half_pot = np.exp(0.5 * pot.effective * dt / (2.0 * params.m * D))

    def step(self, theta: np.ndarray) -> np.ndarray:
        prev = np.abs(theta).max()
        out = self.half_pot * spectral_multiply(self.half_pot * theta, self.grid, self.diffusion)
        scale = np.abs(out).max()
        # tiny negative values are FFT roundoff on positive data
        out = np.where((out < 0) & (out > -1e-14 * scale), 0.0, out)
        if not np.all(np.isfinite(out)) or scale > 10.0 * prev:
            raise BlowUp(f"heat step amplified max|theta| from {prev:.3e} to {scale:.3e}")
        return out


def step_heat_forward(theta_star, pot: Potential, params: PhysicalParams, ctl: StepControl) -> np.ndarray:
    """One step of ``hbar theta*_t = [(hbar^2/2m) Laplacian + W] theta*``."""
    out = HeatStepper(pot.grid, pot, params, ctl.dt).step(np.asarray(theta_star, dtype=float))
    ctl.t += ctl.dt
    return out


def step_heat_backward(theta, pot: Potential, params: PhysicalParams, ctl: StepControl, horizon: float) -> np.ndarray:
    """One step of the time-adjoint equation, from ``ctl.t`` down to ``ctl.t - dt``.

    The adjoint field is specified at the end of ``[0, horizon]`` and is
    propagated towards earlier times with the same contractive generator,
    i.e. forward in ``t' = horizon - t``.
    """
    if ctl.t > horizon + 1e-12:
        raise HorizonExceeded(f"t={ctl.t} lies beyond the horizon {horizon}")
    if ctl.t - ctl.dt < -1e-12 * max(1.0, horizon):
        raise HorizonExceeded(f"stepping below t=0 (t={ctl.t}, dt={ctl.dt})")
    out = HeatStepper(pot.grid, pot, params, ctl.dt).step(np.asarray(theta, dtype=float))
    ctl.t -= ctl.dt
    return out


def antidiffuse(theta, grid: Grid1D, D: float, t: float, k_cut: float) -> np.ndarray:
    """Free backward heat flow ``exp(+D t Laplacian)`` restricted to ``|k| <= k_cut``.

    Exact on band-limited data; modes above the cutoff are discarded.
    """
    keep = np.abs(grid.k) <= k_cut
    gain = np.zeros(grid.n)
    gain[keep] = np.exp(D * grid.k[keep] ** 2 * t)
    return spectral_multiply(np.asarray(theta, dtype=float), grid, gain)


# ---------------------------------------------------------------- Fokker-Planck


def _bernoulli(z):
    """z / (exp(z) - 1), finite for all real z."""
    return 1.0 / exprel(z)


def _face_values(b, grid):
    """Fourth-order interpolation of nodal drift to cell faces i+1/2."""
    n = grid.n
    if grid.boundary == "periodic":
        return (-np.roll(b, 1) + 9 * b + 9 * np.roll(b, -1) - np.roll(b, -2)) / 16.0
    faces = np.empty(n - 1)
    faces[1:-1] = (-b[:-3] + 9 * b[1:-2] + 9 * b[2:-1] - b[3:]) / 16.0
    faces[0] = (5 * b[0] + 15 * b[1] - 5 * b[2] + b[3]) / 16.0
    faces[-1] = (5 * b[-1] + 15 * b[-2] - 5 * b[-3] + b[-4]) / 16.0
    return faces


def sg_generator(grid: Grid1D, D: float, face_peclet: np.ndarray) -> sp.csr_matrix:
    """Scharfetter-Gummel generator for ``rho_t = D rho'' - (b rho)'``.

    ``face_peclet`` holds ``w = b dx / D`` on the faces between consecutive
    cells (n faces on a circle, n-1 on an interval with closed walls).
    The matrix has non-negative off-diagonals and zero column sums.
    """
    n = grid.n
    c = D / grid.dx**2
    left = np.arange(len(face_peclet))
    right = (left + 1) % n
    to_right = c * _bernoulli(-face_peclet)
    to_left = c * _bernoulli(face_peclet)
    rows = np.concatenate([right, left, left, right])
    cols = np.concatenate([left, right, left, right])
    vals = np.concatenate([to_right, to_left, -to_right, -to_left])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class FokkerPlanckStepper:
    """Propagator for ``rho_t = D rho'' - (b rho)'``.

    ``scheme="sg_expm"`` (default): Scharfetter-Gummel fluxes with the
    exact matrix exponential in time. Positivity, mass and the discrete
    Boltzmann equilibrium are preserved, and relative entropy to that
    equilibrium decays monotonically.

    ``scheme="upwind_split"``: Strang split of an exact spectral diffusion
    multiplier and a conservative first-order upwind drift; needs
    ``dt <= 0.5 dx / max|b|``.

    With ``b == 0`` both reduce to the exact spectral heat multiplier.
    """

    def __init__(self, grid: Grid1D, D: float, dt: float, drift=None, face_peclet=None, scheme="sg_expm"):
        self.grid, self.D, self.dt, self.scheme = grid, D, dt, scheme
        if drift is None and face_peclet is None:
            drift = np.zeros(grid.n)
        self.drift = None if drift is None else np.asarray(drift, dtype=float)
        self.free = face_peclet is None and not np.any(self.drift)
        if self.free:
            self.multiplier = np.exp(-D * grid.k**2 * dt)
            return
        if scheme == "sg_expm":
            if face_peclet is None:
                face_peclet = _face_values(self.drift, grid) * grid.dx / D
            self.face_peclet = np.asarray(face_peclet, dtype=float)
            A = sg_generator(grid, D, self.face_peclet)
            self.generator = A
            if grid.n <= 2048:
                self.propagator = scipy.linalg.expm(A.toarray() * dt)
            else:
                self.propagator = None
        elif scheme == "upwind_split":
            if self.drift is None:
                raise ValueError("upwind_split needs nodal drift values")
            bmax = np.abs(self.drift).max()
            if dt > 0.5 * grid.dx / bmax:
                raise CFLViolation(f"dt={dt:g} exceeds 0.5*dx/max|b|={0.5 * grid.dx / bmax:g}")
            self.multiplier = np.exp(-D * grid.k**2 * dt)
            self.face_b = _face_values(self.drift, grid)
        else:
            raise ValueError(f"unknown Fokker-Planck scheme {scheme!r}")

    @classmethod
    def from_potential(cls, grid, script_V, params: PhysicalParams, dt: float):
        """Smoluchowski drift ``b = -V'/(m gamma)`` with exact discrete equilibrium ``exp(-V/kT)``."""
        script_V = np.asarray(script_V, dtype=float)
        dV = np.diff(script_V)
        if grid.boundary == "periodic":
            dV = np.append(dV, script_V[0] - script_V[-1])
        drift = -derivative(script_V, grid) / (params.m * params.gamma)
        stepper = cls(grid, params.D, dt, drift=drift, face_peclet=-dV / params.kT)
        return stepper

    def _upwind_half(self, rho):
        # conservative first-order upwind flux on faces i+1/2
        bf = self.face_b
        grid = self.grid
        if grid.boundary == "periodic":
            up = np.where(bf > 0, rho, np.roll(rho, -1))
            flux = bf * up
            div = (flux - np.roll(flux, 1)) / grid.dx
        else:
            up = np.where(bf > 0, rho[:-1], rho[1:])
            flux = np.concatenate(([0.0], bf * up, [0.0]))
            div = np.diff(flux) / grid.dx
        return rho - 0.5 * self.dt * div

    def step(self, rho: np.ndarray) -> np.ndarray:
        if self.free:
            out = spectral_multiply(rho, self.grid, self.multiplier)
        elif self.scheme == "sg_expm":
            if self.propagator is not None:
                out = self.propagator @ rho
            else:
                out = scipy.sparse.linalg.expm_multiply(self.generator * self.dt, rho)
        else:
            out = self._upwind_half(rho)
            out = spectral_multiply(out, self.grid, self.multiplier)
            out = self._upwind_half(out)
        scale = np.abs(out).max()
        out = np.where((out < 0) & (out > -1e-14 * scale), 0.0, out)
        if not np.all(np.isfinite(out)):
            raise NonFinite("Fokker-Planck step produced non-finite values")
        return out


def step_fokker_planck(rho, b, params: PhysicalParams, ctl: StepControl, grid: Grid1D, scheme="sg_expm") -> np.ndarray:
    """One step of ``rho_t = D rho'' - (b rho)'``; see :class:`FokkerPlanckStepper`."""
    bmax = np.abs(b).max()
    if bmax > 0 and ctl.dt > 0.5 * grid.dx / bmax:
        raise CFLViolation(f"dt={ctl.dt:g} exceeds 0.5*dx/max|b|={0.5 * grid.dx / bmax:g}")
    out = FokkerPlanckStepper(grid, params.D, ctl.dt, drift=b, scheme=scheme).step(np.asarray(rho, dtype=float))
    ctl.t += ctl.dt
    return out


# ---------------------------------------------------------------- Riccati map


def riccati_potential(b, grid: Grid1D, params: PhysicalParams, phi=None) -> Potential:
    """Potential ``V = m [b^2/2 + D b']`` compatible with drift ``b = f / (m gamma)``.

    If ``phi`` is given (with ``b = -2 D phi'``) the second form
    ``V = 2 m D^2 [(phi')^2 - phi'']`` is evaluated too and both must agree.
    The result is returned in the scattering convention, since ``V``
    enters the generalized diffusion equation with a minus sign.
    """
    from .errors import FormulaMismatch

    m, D = params.m, params.D
    if b is None:
        if phi is None:
            raise ValueError("need a drift or a phi")
        b = -2.0 * D * derivative(phi, grid)
    b = np.asarray(b, dtype=float)
    V = m * (0.5 * b**2 + D * derivative(b, grid))
    if phi is not None:
        dphi = derivative(phi, grid)
        V_phi = 2.0 * m * D**2 * (dphi**2 - laplacian(phi, grid))
        scale = max(1.0, float(np.abs(V).max()))
        gap = float(np.abs(V - V_phi).max())
        if gap > 1e-10 * scale:
            raise FormulaMismatch(f"Riccati forms disagree by {gap:.3e}")
    return Potential(grid, V, "scattering", label="riccati")
