"""Grid, field containers and the Madelung (polar) decomposition.

Everything here is a pure function of immutable inputs. Fields are plain
numpy arrays living on a :class:`Grid1D`; derived hydrodynamic quantities
(velocities, quantum potential, current) are computed lazily from the
density and phase and cached on the frozen container, so they can never
go stale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import NegativeDensity, NonFinite, PhaseUndefined

BOUNDARIES = ("periodic", "reflecting")
DEFAULT_EPS_FLOOR = 1e-10
# widest low-density interior block that phase unwrapping may bridge
MAX_BRIDGED_GAP = 3


@dataclass(frozen=True)
class Grid1D:
    """Uniform mesh on [x_min, x_max) with n points.

    Periodic grids sample the left cell edges ``x_min + i*dx``; reflecting
    grids sample cell centres ``x_min + (i + 1/2)*dx``. In both cases the
    quadrature is ``sum(f) * dx`` (rectangle rule on the circle, midpoint
    rule on the interval), which integrates a constant exactly.
    """

    n: int
    x_min: float
    x_max: float
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.n < 64 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 64, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def x(self) -> np.ndarray:
        offset = 0.0 if self.boundary == "periodic" else 0.5
        return self.x_min + (np.arange(self.n) + offset) * self.dx

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers of the kinetic eigenbasis.

        FFT ordering for periodic grids; DCT-II ordering (``pi*j/L``) for
        reflecting grids, whose even extension realises Neumann walls.
        """
        if self.boundary == "periodic":
            return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        return np.pi * np.arange(self.n) / self.length

    def integrate(self, f) -> float | complex:
        return np.sum(f) * self.dx

    def scaled(self, beta: float) -> "Grid1D":
        """The relabelled grid for ``x -> x / beta``."""
        return Grid1D(self.n, self.x_min / beta, self.x_max / beta, self.boundary)


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of a run.

    ``convention`` selects how the diffusion constant is defined:
    ``"quantum"`` gives ``D = hbar / 2m``, ``"smoluchowski"`` gives
    ``D = kT / (m * gamma)``.
    """

    hbar: float = 1.0
    m: float = 1.0
    kappa: float = 0.0
    gamma: float = 1.0
    kT: float = 1.0
    dl: float = 1.0
    convention: str = "quantum"

    def __post_init__(self):
        if not (self.hbar > 0 and self.m > 0 and self.dl > 0):
            raise ValueError("hbar, m and dl must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.convention not in ("quantum", "smoluchowski"):
            raise ValueError(f"unknown D convention {self.convention!r}")
        if self.convention == "smoluchowski" and not (self.gamma > 0 and self.kT > 0):
            raise ValueError("smoluchowski convention needs gamma > 0 and kT > 0")

    @property
    def D(self) -> float:
        if self.convention == "quantum":
            return self.hbar / (2.0 * self.m)
        return self.kT / (self.m * self.gamma)

    def with_kappa(self, kappa: float) -> "PhysicalParams":
        from dataclasses import replace

        return replace(self, kappa=kappa)


# ---------------------------------------------------------------- derivatives


def _fd_weights(offsets, order):
    """Finite-difference weights at 0 for the given integer offsets (unit spacing)."""
    offsets = np.asarray(offsets, dtype=float)
    p = len(offsets)
    A = np.vander(offsets, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


@lru_cache(maxsize=32)
def _fd_matrix(n: int, order: int) -> sp.csr_matrix:
    """Fourth-order FD operator on unit spacing with one-sided closures."""
    width = 5 if order == 1 else 6
    half = 2
    interior = _fd_weights(np.arange(-half, half + 1), order)
    rows, cols, vals = [], [], []
    for i in range(n):
        if half <= i < n - half:
            offs = np.arange(-half, half + 1)
            w = interior
        else:
            start = 0 if i < half else n - width
            offs = np.arange(start, start + width) - i
            w = _fd_weights(offs, order)
        rows.extend([i] * len(offs))
        cols.extend(i + offs)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def derivative(f, grid: Grid1D):
    """First derivative: spectral on periodic grids, 4th-order FD on reflecting ones."""
    f = np.asarray(f)
    if grid.boundary == "periodic":
        ik = 1j * grid.k
        if grid.n % 2 == 0:
            ik = ik.copy()
            ik[grid.n // 2] = 0.0
        out = np.fft.ifft(ik * np.fft.fft(f))
        return out if np.iscomplexobj(f) else out.real
    # stencil rows sum to zero only up to roundoff; shifting makes constants exact
    return _fd_matrix(grid.n, 1) @ (f - f[0]) / grid.dx


def laplacian(f, grid: Grid1D):
    f = np.asarray(f)
    if grid.boundary == "periodic":
        out = np.fft.ifft(-(grid.k**2) * np.fft.fft(f))
        return out if np.iscomplexobj(f) else out.real
    return _fd_matrix(grid.n, 2) @ (f - f[0]) / grid.dx**2


# ---------------------------------------------------------------- containers


@dataclass(frozen=True)
class WaveFunction:
    grid: Grid1D
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise ValueError(f"psi has shape {psi.shape}, grid expects ({self.grid.n},)")
        object.__setattr__(self, "psi", psi)

    @property
    def rho(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm(self) -> float:
        return float(self.grid.integrate(self.rho))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.psi / np.sqrt(self.norm()))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.psi)))


def _extend_nearest(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace entries outside ``valid`` by the nearest valid value.

    Interior gaps are bridged linearly, edge runs are held constant.
    """
    if valid.all():
        return values
    if not valid.any():
        return np.zeros_like(values)
    idx = np.arange(values.size)
    good = idx[valid]
    return np.interp(idx, good, values[valid])


@dataclass(frozen=True)
class MadelungFields:
    """Density and phase with lazily derived hydrodynamic fields.

    ``v = (1/m) ds/dx``, ``u = D dln(rho)/dx``, ``b = v + u``,
    ``Q = -2 m D^2 (sqrt rho)'' / sqrt rho`` and ``j = rho v``. In the
    quantum sector ``D = hbar/2m`` and ``Q`` reduces to the Bohm potential.

    When ``drift`` is given (diffusion-sector states) the current velocity
    is ``v = drift - u`` instead of the phase gradient.

    Where ``sqrt(rho) < eps_floor * max(sqrt(rho))`` the ratios ``u`` and
    ``Q`` (and ``v`` on periodic grids) are replaced by the nearest valid
    value; ``floor_mask`` marks those points.
    """

    grid: Grid1D
    rho: np.ndarray
    s: np.ndarray
    params: PhysicalParams = field(default_factory=PhysicalParams)
    eps_floor: float = DEFAULT_EPS_FLOOR
    drift: np.ndarray | None = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if rho.shape != (self.grid.n,) or s.shape != (self.grid.n,):
            raise ValueError("rho and s must live on the grid")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "s", s)
        if self.drift is not None:
            object.__setattr__(self, "drift", np.asarray(self.drift, dtype=float))

    @cached_property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(np.clip(self.rho, 0.0, None))

    @cached_property
    def floor_mask(self) -> np.ndarray:
        a = self.amplitude
        return a < self.eps_floor * a.max()

    @cached_property
    def u(self) -> np.ndarray:
        a = self.amplitude
        valid = ~self.floor_mask
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = 2.0 * self.params.D * derivative(a, self.grid) / a
        return _extend_nearest(np.where(valid, raw, 0.0), valid)

    @cached_property
    def v(self) -> np.ndarray:
        if self.drift is not None:
            return self.drift - self.u
        m, hbar = self.params.m, self.params.hbar
        if np.all(self.s == self.s[0]):
            return np.zeros(self.grid.n)
        if self.grid.boundary == "reflecting":
            return derivative(self.s, self.grid) / m
        # the phase need not be periodic, psi is: differentiate psi instead
        psi = self.amplitude * np.exp(1j * self.s / hbar)
        valid = ~self.floor_mask
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = hbar * np.imag(np.conj(psi) * derivative(psi, self.grid)) / (m * self.rho)
        return _extend_nearest(np.where(valid, raw, 0.0), valid)

    @cached_property
    def b(self) -> np.ndarray:
        return self.v + self.u

    @cached_property
    def Q(self) -> np.ndarray:
        return quantum_potential(self.rho, self.grid, self.params, self.eps_floor)

    @cached_property
    def j(self) -> np.ndarray:
        return self.rho * self.v

    def mean(self, f) -> float:
        return float(self.grid.integrate(self.rho * f))

    def norm(self) -> float:
        return float(self.grid.integrate(self.rho))


@dataclass(frozen=True)
class DualPair:
    """Real pair with ``rho = theta * theta_star``."""

    grid: Grid1D
    theta: np.ndarray
    theta_star: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return self.theta * self.theta_star


# ---------------------------------------------------------------- Madelung maps


def quantum_potential(rho, grid: Grid1D, params: PhysicalParams, eps_floor=DEFAULT_EPS_FLOOR):
    """Bohm quantum potential evaluated through sqrt(rho).

    Points where ``sqrt(rho)`` falls below ``eps_floor * max(sqrt(rho))``
    take the nearest valid value.
    """
    a = np.sqrt(np.clip(np.asarray(rho, dtype=float), 0.0, None))
    valid = a >= eps_floor * a.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = -2.0 * params.m * params.D**2 * laplacian(a, grid) / a
    return _extend_nearest(np.where(valid, raw, 0.0), valid)


def _support_segments(low: np.ndarray, periodic: bool):
    """Runs of True in ``low`` as (start, length) pairs, merging the wrap on a circle."""
    n = low.size
    runs = []
    i = 0
    while i < n:
        if low[i]:
            j = i
            while j < n and low[j]:
                j += 1
            runs.append([i, j - i])
            i = j
        else:
            i += 1
    if periodic and len(runs) > 1 and runs[0][0] == 0 and runs[-1][0] + runs[-1][1] == n:
        last = runs.pop()
        runs[0] = [last[0], last[1] + runs[0][1]]
    return runs


def _unwrap_from_support(phase: np.ndarray, low: np.ndarray, periodic: bool, rho=None):
    """Unwrap ``phase`` along the connected support, then outwards into the tails.

    On a circle the unavoidable winding jump is placed at the density
    minimum of the gap, where the amplitude it multiplies is smallest.

    Returns the unwrapped phase and the index of the support's leftmost point.
    """
    n = phase.size
    if not low.any():
        return np.unwrap(phase), 0
    runs = _support_segments(low, periodic)
    gaps = [r for r in runs if r[1] > MAX_BRIDGED_GAP]
    if not gaps:
        return np.unwrap(phase), 0
    if periodic:
        # a single wide low run on the circle leaves a connected support arc
        if len(gaps) > 1:
            raise PhaseUndefined(f"density vanishes on {len(gaps)} separate blocks wider than {MAX_BRIDGED_GAP} points")
        start, length = gaps[0]
        first = (start + length) % n
        cut = first
        if rho is not None:
            gap_idx = (start + np.arange(length)) % n
            cut = int(gap_idx[np.argmin(rho[gap_idx])])
        order = (cut + np.arange(n)) % n
        unwrapped = np.empty(n)
        unwrapped[order] = np.unwrap(phase[order])
        anchor = 0 if not low[0] else first
        return unwrapped, anchor
    interior = [r for r in gaps if r[0] > 0 and r[0] + r[1] < n]
    if interior:
        raise PhaseUndefined(f"density vanishes on an interior block of {interior[0][1]} points at index {interior[0][0]}")
    valid = np.flatnonzero(~low)
    a, b = valid[0], valid[-1]
    unwrapped = np.empty(n)
    unwrapped[a : b + 1] = np.unwrap(phase[a : b + 1])
    left = np.unwrap(np.concatenate(([unwrapped[a]], phase[:a][::-1])))
    unwrapped[:a] = left[1:][::-1]
    right = np.unwrap(np.concatenate(([unwrapped[b]], phase[b + 1 :])))
    unwrapped[b + 1 :] = right[1:]
    return unwrapped, a


def decompose(psi: WaveFunction, params: PhysicalParams | None = None, eps_floor=DEFAULT_EPS_FLOOR) -> MadelungFields:
    """Polar decomposition ``psi = sqrt(rho) exp(i s / hbar)``.

    The phase is unwrapped along the region where ``rho >= eps_floor *
    max(rho)`` and anchored to zero at its leftmost point (the leftmost
    grid point whenever the density there is above the floor).
    """
    params = params or PhysicalParams()
    if not 0 < eps_floor <= 1e-6:
        raise ValueError("eps_floor must lie in (0, 1e-6]")
    if not psi.is_finite():
        raise NonFinite("wave function contains non-finite values")
    rho = np.abs(psi.psi) ** 2
    if not rho.max() > 0:
        raise PhaseUndefined("wave function vanishes identically")
    low = rho < eps_floor * rho.max()
    phase, anchor = _unwrap_from_support(np.angle(psi.psi), low, psi.grid.boundary == "periodic", rho)
    s = params.hbar * (phase - phase[anchor])
    return MadelungFields(psi.grid, rho, s, params, eps_floor)


def compose(fields: MadelungFields) -> WaveFunction:
    rho = fields.rho
    if np.any(rho < -1e-14):
        raise NegativeDensity(f"density reaches {rho.min():.3e}")
    rho = np.clip(rho, 0.0, None)
    psi = np.sqrt(rho) * np.exp(1j * fields.s / fields.params.hbar)
    return WaveFunction(fields.grid, psi).normalized()


# ---------------------------------------------------------------- snapshots

SNAPSHOT_HEADER = ["x", "re_psi", "im_psi", "rho", "s", "v", "u", "Q"]
DUAL_HEADER = ["x", "theta", "theta_star", "rho"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_snapshot(path, psi: WaveFunction, fields: MadelungFields) -> None:
    """Write one field snapshot as CSV with full double precision."""
    g = psi.grid
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        cols = (g.x, psi.psi.real, psi.psi.imag, fields.rho, fields.s, fields.v, fields.u, fields.Q)
        for row in zip(*cols):
            w.writerow([_fmt(c) for c in row])


def write_dual_snapshot(path, pair: DualPair) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DUAL_HEADER)
        for row in zip(pair.grid.x, pair.theta, pair.theta_star, pair.rho):
            w.writerow([_fmt(c) for c in row])


def read_snapshot(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(Path(path), delimiter=",", names=True, dtype=float)
    return {name: np.asarray(data[name]) for name in data.dtype.names}
