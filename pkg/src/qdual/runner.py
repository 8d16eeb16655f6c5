"""Batch runner: build a run from a :class:`RunConfig`, integrate, check invariants, write outputs."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, validate
from .duality import (
    HamiltonianPair,
    ScaleParams,
    SpectralHamiltonian,
    hyperbolic_mix,
    kappa_pullback,
    kappa_reduce,
    scale_fields,
    wick_quantum_to_heat,
)
from .dynamics import (
    FokkerPlanckStepper,
    HeatStepper,
    ModularStepper,
    Potential,
    StepControl,
    step_hj_classical,
)
from .errors import CausticDetected, CFLViolation, ConfigInvalid, QdualError
from .exact import gaussian_packet, heat_gaussian, modular_free_packet
from .fields import (
    DEFAULT_EPS_FLOOR,
    Grid1D,
    MadelungFields,
    PhysicalParams,
    WaveFunction,
    compose,
    decompose,
    derivative,
    write_snapshot,
)
from .functionals import (
    DiagnosticsRecord,
    PhaseTracker,
    diffusion_record,
    entropy_rate,
    free_energy,
    hamiltonians,
    kl_entropy,
    mean_action_rate,
    quantum_record,
    shannon_entropy,
    stationary_density,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3, 4

DEFAULT_SUITES = {
    "modular": ["norm", "hamiltonian", "on_shell", "f_rate", "lyapunov", "q_identity"],
    "hj_classical": ["mass", "hamiltonian"],
    "heat_forward": ["positivity", "heat_kernel"],
    "heat_backward": ["positivity"],
    "fokker_planck": ["mass", "positivity", "entropy_rate", "free_energy", "kl", "de_bruijn"],
}


# ---------------------------------------------------------------- building blocks


def build_grid(cfg: RunConfig) -> Grid1D:
    g = cfg.grid
    return Grid1D(g.n, g.x_min, g.x_max, g.boundary)


def build_params(cfg: RunConfig) -> PhysicalParams:
    p = cfg.physics
    return PhysicalParams(p.hbar, p.m, p.kappa, p.gamma, p.kT, p.dl, p.convention)


def _read_table(path: Path):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ConfigInvalid(f"{path}: need at least two columns (x, value)")
    order = np.argsort(data[:, 0])
    return data[order]


def _interp_with_estimate(grid, table):
    """Linear interpolation plus a cubic-spline comparison as error estimate."""
    from scipy.interpolate import CubicSpline

    xs = table[:, 0]
    cols = table[:, 1:]
    lin = np.column_stack([np.interp(grid.x, xs, c) for c in cols.T])
    if len(xs) >= 4:
        inside = (grid.x >= xs[0]) & (grid.x <= xs[-1])
        cub = np.column_stack([CubicSpline(xs, c)(grid.x) for c in cols.T])
        est = float(np.abs(lin - cub)[inside].max()) if inside.any() else float("nan")
    else:
        est = float("nan")
    return lin, est


def build_potential(cfg: RunConfig, grid: Grid1D, params: PhysicalParams, meta: dict) -> Potential:
    p = cfg.potential
    if p.kind == "zero":
        return Potential.zero(grid)
    if p.kind == "harmonic":
        return Potential.harmonic(grid, p.omega, params.m, p.center, p.sign)
    if p.kind == "inverted_harmonic":
        return Potential.harmonic(grid, p.omega, params.m, p.center, "scattering")
    if p.kind == "quartic":
        return Potential.quartic(grid, p.a, p.center, p.sign)
    table = _read_table(cfg.resolve(p.table))
    vals, est = _interp_with_estimate(grid, table[:, :2])
    meta["potential_interpolation_error"] = est
    return Potential(grid, vals[:, 0], p.sign, label="custom_table")


def build_smoluchowski_potential(cfg: RunConfig, grid: Grid1D, params: PhysicalParams, meta: dict):
    d = cfg.drift
    x = grid.x - d.center
    if d.kind == "zero":
        return None
    if d.kind == "ou":
        # drift -rate * x  <=>  V = m gamma rate x^2 / 2
        return 0.5 * params.m * params.gamma * d.rate * x**2
    if d.kind == "quartic":
        return d.a * x**4
    table = _read_table(cfg.resolve(d.table))
    vals, est = _interp_with_estimate(grid, table[:, :2])
    meta["drift_interpolation_error"] = est
    return vals[:, 0]


def build_initial(cfg: RunConfig, grid: Grid1D, params: PhysicalParams, pot: Potential, meta: dict) -> np.ndarray:
    """Initial wave function (normalized complex array)."""
    ini = cfg.initial
    x = grid.x
    if ini.kind == "gaussian":
        psi = gaussian_packet(x, ini.sigma, ini.x0, ini.p0, params.hbar)
    elif ini.kind == "plane_wave":
        if grid.boundary == "periodic":
            turns = ini.k * grid.length / (2 * np.pi)
            if abs(turns - round(turns)) > 1e-9:
                raise ConfigInvalid(f"initial.k: {ini.k} is not commensurate with the periodic box")
        psi = np.exp(1j * ini.k * x).astype(complex)
    elif ini.kind == "eigenstate_guess":
        if grid.n <= 2048:
            spec = SpectralHamiltonian.build(pot, params)
            phi = spec.modes[:, 0]
            psi = (phi * np.sign(phi[np.argmax(np.abs(phi))])).astype(complex)
            meta["eigenvalue_guess"] = float(spec.energies[0])
        else:
            omega = cfg.potential.omega
            psi = gaussian_packet(x, math.sqrt(params.hbar / (2 * params.m * omega)), cfg.potential.center)
    else:
        table = _read_table(cfg.resolve(ini.table))
        vals, est = _interp_with_estimate(grid, table)
        meta["initial_interpolation_error"] = est
        psi = vals[:, 0] + (1j * vals[:, 1] if vals.shape[1] > 1 else 0.0)
    if ini.perturbation:
        rng = np.random.default_rng(cfg.run.seed)
        modes = 6
        phases = rng.uniform(0, 2 * np.pi, modes)
        amps = rng.normal(size=modes) / np.arange(1, modes + 1) ** 2
        bump = sum(a * np.cos(2 * np.pi * (j + 1) * (x - grid.x_min) / grid.length + ph) for j, (a, ph) in enumerate(zip(amps, phases)))
        psi = psi * np.exp(ini.perturbation * bump)
    psi = np.asarray(psi, dtype=complex)
    return psi / math.sqrt(grid.integrate(np.abs(psi) ** 2))


# ---------------------------------------------------------------- report helpers


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "value": _json_float(self.value), "tolerance": self.tolerance, "passed": bool(self.passed), "detail": self.detail}


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _le(name, value, tol, detail=""):
    value = float(value)
    return Check(name, value, tol, bool(math.isfinite(value) and value <= tol), detail)


@dataclass
class RunReport:
    status: str
    exit_code: int
    checks: list = field(default_factory=list)
    records: list = field(default_factory=list)
    error: str = ""
    out_dir: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {
            "status": self.status,
            "exit_code": self.exit_code,
            "passed": self.passed,
            "error": self.error,
            "checks": [c.as_dict() for c in self.checks],
            "extras": {k: _json_float(v) if isinstance(v, float) else v for k, v in self.extras.items()},
        }


def _write_columns(path, header, cols):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([format(float(c), ".17g") for c in row])


def write_diagnostics(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagnosticsRecord.columns())
        for r in records:
            w.writerow([format(v, ".17g") for v in r.as_row()])


def _five_point_rate(series, dt):
    """Fourth-order central derivative of a per-step series (interior points)."""
    y = np.asarray(series, dtype=float)
    out = np.full_like(y, np.nan)
    if len(y) >= 5:
        out[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * dt)
    return out


# ---------------------------------------------------------------- equation drivers


class _Context:
    def __init__(self, cfg: RunConfig, out_dir: Path | None):
        self.cfg = cfg
        self.out = out_dir
        self.grid = build_grid(cfg)
        self.params = build_params(cfg)
        self.meta: dict = {}
        self.pot = build_potential(cfg, self.grid, self.params, self.meta)
        self.records: list[DiagnosticsRecord] = []
        self.checks: list[Check] = []
        self.extras: dict = {}
        self.suites = cfg.checks.suites or DEFAULT_SUITES[cfg.equation.kind]
        self.steps = cfg.steps()
        self.dt = cfg.time.dt
        self.snap_count = 0

    def wants(self, suite):
        return suite in self.suites

    def output_step(self, k):
        return k % self.cfg.time.output_every == 0 or k == self.steps

    def snapshot_step(self, k):
        se = self.cfg.time.snapshot_every
        return bool(se) and (k % se == 0 or k == self.steps)

    def snapshot_path(self):
        path = self.out / f"snapshot_{self.snap_count}.csv"
        self.snap_count += 1
        return path


def _run_modular(ctx: _Context):
    cfg, g, params, pot = ctx.cfg, ctx.grid, ctx.params, ctx.pot
    kappa = params.kappa
    filt = cfg.time.filter_k or None
    stepper = ModularStepper(g, pot, params, ctx.dt, filter_k=filt, horizon=cfg.time.t_end)
    ctx.meta["filter_k"] = stepper.filter_k
    psi = build_initial(cfg, g, params, pot, ctx.meta)
    f0 = decompose(WaveFunction(g, psi), params)
    psi = compose(f0).psi
    tracker = PhaseTracker(psi, params.hbar, s0=f0.s)
    dual = cfg.duality

    reduced = None
    if dual.map == "kappa_reduce":
        red = kappa_reduce(WaveFunction(g, psi), pot, kappa, params)
        rparams = params.with_kappa(red.target_kappa)
        rstep = ModularStepper(g, red.pot, rparams, red.time_dilation * ctx.dt, horizon=red.time_dilation * cfg.time.t_end)
        tr = PhaseTracker(red.psi.psi, params.hbar, s0=f0.s / red.time_dilation)
        reduced = {"red": red, "psi": red.psi.psi, "stepper": rstep, "tracker": tr, "l2": 0.0}
    heat = None
    if dual.map == "wick_quantum_to_heat":
        pair0 = wick_quantum_to_heat(WaveFunction(g, psi), params, s=tracker.gauge(f0.s))
        heat = {"theta_star": pair0.theta_star, "stepper": HeatStepper(g, pot, params, ctx.dt, check_semigroup=False), "err": 0.0, "fact": 0.0}

    series = {"t": [], "norm": [], "H": [], "F": [], "H_dual": [], "Q_gap": []}
    dsdt = []
    prev = None
    last_fields = None

    def observe(k, arr):
        nonlocal last_fields
        t = k * ctx.dt
        f = decompose(WaveFunction(g, arr), params)
        f = MadelungFields(g, f.rho, tracker.gauge(f.s), params, f.eps_floor)
        last_fields = f
        H = hamiltonians(f, pot, params)
        series["t"].append(t)
        series["norm"].append(f.norm())
        series["H"].append(H.H_kappa)
        series["F"].append(-f.mean(f.s))
        series["H_dual"].append(H.H_dual)
        series["Q_gap"].append(abs(f.mean(f.Q) - 0.5 * params.m * f.mean(f.u**2)))
        if ctx.output_step(k):
            rec = quantum_record(t, f, pot, params, params.dl)
            rec.H_plus, rec.H_minus = H.H_plus_0, H.H_minus_0
            ctx.records.append(rec)
            _duality_observe(ctx, k, arr, f, heat, reduced)
        if ctx.out is not None and ctx.snapshot_step(k):
            write_snapshot(ctx.snapshot_path(), WaveFunction(g, arr), f)
        return f

    observe(0, psi)
    error = None
    try:
        for k in range(1, ctx.steps + 1):
            new = stepper.step_array(psi)
            tracker.update(new)
            # <ds/dt> at step k-1 from the phase change across (k-2, k)
            if prev is not None:
                dphi = params.hbar * np.angle(new * np.conj(prev)) / (2 * ctx.dt)
                dsdt.append((k - 1, float(g.integrate(np.abs(psi) ** 2 * dphi))))
            if heat is not None:
                heat["theta_star"] = heat["stepper"].step(heat["theta_star"])
            if reduced is not None:
                reduced["psi"] = reduced["stepper"].step_array(reduced["psi"])
                reduced["tracker"].update(reduced["psi"])
            prev, psi = psi, new
            observe(k, psi)
    except QdualError as exc:
        error = exc

    H = np.array(series["H"])
    if ctx.wants("norm"):
        ctx.checks.append(_le("norm_drift", np.abs(np.array(series["norm"]) - 1).max(), 1e-8))
    if ctx.wants("hamiltonian"):
        scale = max(abs(H[0]), 1e-12)
        ctx.checks.append(_le("hamiltonian_drift", np.abs(H - H[0]).max() / scale, 1e-6, "relative to |H(0)|"))
    if ctx.wants("q_identity"):
        ctx.checks.append(_le("q_u2_identity", max(series["Q_gap"]), 1e-8))
    if ctx.wants("on_shell") and dsdt:
        gap = max(abs(v + H[k]) for k, v in dsdt)
        ctx.checks.append(_le("on_shell_mean_ds_dt", gap, 1e-5, "|<ds/dt> + H_kappa| from centred phase differences"))
    F = np.array(series["F"])
    if ctx.wants("f_rate") and len(F) >= 3:
        Fdot = (F[2:] - F[:-2]) / (2 * ctx.dt)
        gap = np.abs(Fdot + np.array(series["H_dual"])[1:-1]).max()
        ctx.checks.append(_le("f_rate_dual", gap, 1e-5, "|dF/dt + H_dual|"))
    if ctx.wants("lyapunov") and len(F) >= 2:
        L = F - np.array(series["t"]) * H[0]
        inc = np.diff(L).max()
        ctx.checks.append(_le("f_minus_tH_nonincreasing", inc, 1e-9, f"largest step-to-step change {inc:.3e}"))
    if heat is not None and cfg.duality.compare:
        ctx.checks.append(_le("heat_duality_l2", heat["err"], 1e-6, "theta* mapped vs evolved, floor region"))
        ctx.checks.append(_le("factorization", heat["fact"], 1e-12))
    if reduced is not None and cfg.duality.compare:
        ctx.checks.append(_le("kappa_reduce_l2", reduced["l2"], 1e-5))
    ctx.extras["final_time"] = series["t"][-1]
    return error


def _duality_observe(ctx, k, arr, f, heat, reduced):
    cfg, g, params, pot = ctx.cfg, ctx.grid, ctx.params, ctx.pot
    if heat is not None:
        pair = wick_quantum_to_heat(WaveFunction(g, arr), params, s=f.s)
        ref = heat["theta_star"]
        mask = f.rho >= DEFAULT_EPS_FLOOR * f.rho.max()
        err = math.sqrt(g.integrate((pair.theta_star - ref)[mask] ** 2) / g.integrate(ref[mask] ** 2))
        heat["err"] = max(heat["err"], err)
        heat["fact"] = max(heat["fact"], float(np.abs(pair.rho - np.abs(arr) ** 2).max()))
    if reduced is not None:
        red = reduced["red"]
        rpsi = WaveFunction(g, reduced["psi"])
        rf = decompose(rpsi, params)
        back = kappa_pullback(rpsi, red, params, s=reduced["tracker"].gauge(rf.s))
        direct = np.sqrt(f.rho) * np.exp(1j * f.s / params.hbar)
        reduced["l2"] = max(reduced["l2"], math.sqrt(g.integrate(np.abs(back.psi - direct) ** 2)))
    if cfg.duality.map == "scale_fields":
        sp = ScaleParams(beta=cfg.duality.beta)
        _scaling_checks(ctx, f, sp)
    if cfg.duality.map == "hyperbolic_mix":
        sp = ScaleParams(alpha=cfg.duality.alpha)
        _scaling_checks(ctx, f, sp)


def _scaling_checks(ctx, f, sp):
    pot, params = ctx.pot, ctx.params
    sf, spot = scale_fields(f, pot, sp)
    shift = abs(shannon_entropy(sf.rho, sf.grid, params.dl) - shannon_entropy(f.rho, f.grid, params.dl) + math.log(sp.beta))
    H = hamiltonians(f, pot, params)
    Hs = hamiltonians(sf, spot, params)
    mixed = hyperbolic_mix(HamiltonianPair(H.H_kappa, H.K_kappa), sp.alpha)
    inv = abs(mixed.invariant() - (H.H_kappa**2 - H.K_kappa**2))
    func = max(abs(Hs.H_kappa - mixed.H), abs(Hs.K_kappa - mixed.K))
    ex = ctx.extras
    ex["entropy_shift_error"] = max(ex.get("entropy_shift_error", 0.0), shift)
    ex["mix_invariant_error"] = max(ex.get("mix_invariant_error", 0.0), inv)
    ex["mix_functional_error"] = max(ex.get("mix_functional_error", 0.0), func)


def _finish_scaling(ctx):
    ex = ctx.extras
    if "entropy_shift_error" in ex:
        ctx.checks.append(_le("entropy_scaling_shift", ex["entropy_shift_error"], 1e-8, "S(rho') - S(rho) + ln beta"))
        ctx.checks.append(_le("mix_invariant", ex["mix_invariant_error"], 1e-12, "H'^2 - K'^2 - (H^2 - K^2)"))
        ctx.checks.append(_le("mix_vs_scaled_functionals", ex["mix_functional_error"], 1e-8))


def _run_hj(ctx: _Context):
    cfg, g, params, pot = ctx.cfg, ctx.grid, ctx.params, ctx.pot
    psi = build_initial(cfg, g, params, pot, ctx.meta)
    f = decompose(WaveFunction(g, psi), params)
    fields = MadelungFields(g, f.rho, f.s, params)
    supp = fields.rho > 1e-12 * fields.rho.max()
    vmax = float(np.abs(fields.v[supp]).max())
    if vmax > 0 and ctx.dt > 0.5 * g.dx / vmax:
        raise CFLViolation(f"dt={ctx.dt:g} exceeds 0.5*dx/max|v|={0.5 * g.dx / vmax:g}")
    ctl = StepControl(ctx.dt, scheme="method_of_lines_rk4")
    series_mass, series_H = [], []

    def observe(k, fl):
        H = hamiltonians(fl, pot, params)
        Hcl = H.H_cl_plus if pot.sign_convention == "confining" else H.H_cl_minus
        series_mass.append(fl.norm())
        series_H.append(Hcl)
        if ctx.output_step(k):
            rec = DiagnosticsRecord(
                t=k * ctx.dt,
                norm=fl.norm(),
                S=shannon_entropy(fl.rho, g, params.dl),
                mean_v2=fl.mean(fl.v**2),
                H_cl_plus=H.H_cl_plus,
                H_cl_minus=H.H_cl_minus,
                F=-fl.mean(fl.s),
            )
            ctx.records.append(rec)
        if ctx.out is not None and ctx.snapshot_step(k):
            amp = np.sqrt(np.clip(fl.rho, 0, None))
            write_snapshot(ctx.snapshot_path(), WaveFunction(g, amp * np.exp(1j * fl.s / params.hbar)), fl)

    observe(0, fields)
    error = None
    try:
        for k in range(1, ctx.steps + 1):
            fields = step_hj_classical(fields, pot, params, ctl)
            observe(k, fields)
    except CausticDetected as exc:
        error = exc
        ctx.extras["caustic_time"] = exc.t
    except QdualError as exc:
        error = exc
    if ctx.wants("mass"):
        ctx.checks.append(_le("mass_drift", np.abs(np.array(series_mass) - series_mass[0]).max(), 1e-10))
    if ctx.wants("hamiltonian"):
        H = np.array(series_H)
        ctx.checks.append(_le("hamiltonian_drift", np.abs(H - H[0]).max() / max(abs(H[0]), 1e-12), 1e-6, "classical H, relative"))
    return error


def _run_heat(ctx: _Context, backward: bool):
    cfg, g, params, pot = ctx.cfg, ctx.grid, ctx.params, ctx.pot
    psi = build_initial(cfg, g, params, pot, ctx.meta)
    theta0 = np.abs(psi)
    stepper = HeatStepper(g, pot, params, ctx.dt)
    theta = theta0.copy()
    minimum = float(theta.min())
    T = cfg.time.t_end

    def observe(k, th):
        t = T - k * ctx.dt if backward else k * ctx.dt
        if ctx.output_step(k):
            ctx.records.append(DiagnosticsRecord(t=t, norm=float(g.integrate(th**2))))
        if ctx.out is not None and ctx.snapshot_step(k):
            name = "theta" if backward else "theta_star"
            _write_columns(ctx.snapshot_path(), ["x", name], [g.x, th])

    observe(0, theta)
    error = None
    try:
        for k in range(1, ctx.steps + 1):
            theta = stepper.step(theta)
            minimum = min(minimum, float(theta.min()))
            observe(k, theta)
    except QdualError as exc:
        error = exc
    if ctx.wants("positivity"):
        ctx.checks.append(_le("negativity", max(0.0, -minimum), 0.0, "most negative theta value"))
    if ctx.wants("heat_kernel") and not backward and pot.label == "zero" and cfg.initial.kind == "gaussian" and cfg.initial.p0 == 0.0:
        exact = heat_gaussian(g.x, ctx.steps * ctx.dt, params.D, math.sqrt(2) * cfg.initial.sigma, cfg.initial.x0, theta0.max())
        err = math.sqrt(g.integrate((theta - exact) ** 2) / g.integrate(exact**2))
        ctx.checks.append(_le("heat_kernel_l2", err, 1e-8))
    return error


def _run_fokker_planck(ctx: _Context):
    cfg, g, params = ctx.cfg, ctx.grid, ctx.params
    script_V = build_smoluchowski_potential(cfg, g, params, ctx.meta)
    psi = build_initial(cfg, g, params, ctx.pot, ctx.meta)
    rho = np.abs(psi) ** 2
    if script_V is None:
        drift = np.zeros(g.n)
        stepper = FokkerPlanckStepper(g, params.D, ctx.dt)
        rho_star = Z = None
    else:
        drift = -derivative(script_V, g) / (params.m * params.gamma)
        # the exponential Scharfetter-Gummel step is unconditionally stable
        stepper = FokkerPlanckStepper.from_potential(g, script_V, params, ctx.dt)
        try:
            rho_star, Z = stepper_stationary(script_V, g, params)
        except QdualError:
            rho_star = Z = None
    mass, Svals, u2, minimum = [], [], [], float(rho.min())
    per_step_entropy = script_V is None and ctx.wants("de_bruijn")
    mismatch = 0.0

    def observe(k, r):
        nonlocal mismatch
        t = k * ctx.dt
        mass.append(float(g.integrate(r)))
        f = MadelungFields(g, r, np.zeros(g.n), params, drift=drift)
        if per_step_entropy:
            Svals.append(shannon_entropy(r, g, params.dl))
            u2.append(f.mean(f.u**2))
        if ctx.output_step(k):
            rec = diffusion_record(t, r, drift, g, params, script_V, rho_star, Z, params.dl)
            ctx.records.append(rec)
            er = entropy_rate(f, params, check=False)
            mismatch = max(mismatch, er.mismatch / max(1.0, abs(er.S_dot)))
        if ctx.out is not None and ctx.snapshot_step(k):
            _write_columns(ctx.snapshot_path(), ["x", "rho", "b", "v", "u"], [g.x, r, drift, f.v, f.u])

    observe(0, rho)
    error = None
    try:
        for k in range(1, ctx.steps + 1):
            rho = stepper.step(rho)
            minimum = min(minimum, float(rho.min()))
            observe(k, rho)
    except QdualError as exc:
        error = exc
    if ctx.wants("mass"):
        ctx.checks.append(_le("mass_drift", np.abs(np.array(mass) - mass[0]).max(), 1e-10))
    if ctx.wants("positivity"):
        ctx.checks.append(_le("negativity", max(0.0, -minimum), 0.0))
    if ctx.wants("entropy_rate"):
        ctx.checks.append(_le("entropy_rate_forms", mismatch, 1e-6, "spread of the four forms relative to max(1, |dS/dt|)"))
    recs = ctx.records
    if script_V is not None and ctx.wants("free_energy"):
        Psi = np.array([r.Psi for r in recs])
        ctx.checks.append(_le("free_energy_nonincreasing", max(0.0, np.diff(Psi).max()) if len(Psi) > 1 else 0.0, 1e-10))
    if rho_star is not None and ctx.wants("kl"):
        Hc = np.array([r.H_c for r in recs])
        ctx.checks.append(_le("kl_nondecreasing", max(0.0, -np.diff(Hc).min()) if len(Hc) > 1 else 0.0, 1e-10))
        ctx.checks.append(_le("kl_nonpositive", max(Hc.max(), 0.0), 1e-12))
    if script_V is None and ctx.wants("de_bruijn"):
        rate = _five_point_rate(Svals, ctx.dt)
        gap = np.nanmax(np.abs(params.D * rate - np.array(u2))) if len(Svals) >= 5 else float("nan")
        ctx.checks.append(_le("de_bruijn", gap, 1e-6, "|D dS/dt - <u^2>|, dS/dt by 5-point differences"))
    if rho_star is not None and ctx.wants("relaxation"):
        l1 = float(g.integrate(np.abs(rho - rho_star)))
        Psi_end = free_energy(rho, script_V, g, params, params.dl)[0]
        ctx.checks.append(_le("relaxation_l1", l1, 1e-3))
        ctx.checks.append(_le("free_energy_gap", abs(Psi_end + params.kT * math.log(Z)), 1e-4))
    return error


def stepper_stationary(script_V, grid, params):
    return stationary_density(script_V, grid, params)


# ---------------------------------------------------------------- entry point


def _meta(cfg: RunConfig, ctx: _Context | None):
    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "eps_floor": DEFAULT_EPS_FLOOR,
    }
    if ctx is not None:
        meta["D"] = ctx.params.D
        meta["D_convention"] = ctx.params.convention
        meta.update({k: v for k, v in ctx.meta.items()})
    return meta


def run(cfg: RunConfig, out_dir=None, write: bool = True) -> RunReport:
    """Execute one run; outputs go to ``out_dir`` unless ``write`` is false."""
    out = None
    if write:
        out = Path(out_dir or cfg.run.output_dir or os.environ.get("QDUAL_OUT", "qdual_out"))
        out.mkdir(parents=True, exist_ok=True)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            ctx = _Context(cfg, out)
            kind = cfg.equation.kind
            if kind == "modular":
                error = _run_modular(ctx)
            elif kind == "hj_classical":
                error = _run_hj(ctx)
            elif kind in ("heat_forward", "heat_backward"):
                error = _run_heat(ctx, kind == "heat_backward")
            else:
                error = _run_fokker_planck(ctx)
            _finish_scaling(ctx)
    except ConfigInvalid as exc:
        report = RunReport("config error", EXIT_CONFIG, error="; ".join(exc.errors))
        _flush(out, cfg, None, report)
        return report
    except (QdualError, ValueError) as exc:
        report = RunReport(f"refused: {type(exc).__name__}", EXIT_ABORT, error=str(exc))
        _flush(out, cfg, None, report)
        return report
    ctx.extras["warnings"] = sorted({str(w.message) for w in caught})
    if error is not None:
        status = f"halted: {type(error).__name__}"
        code = EXIT_ABORT
    else:
        status = "completed"
        code = EXIT_OK if all(c.passed for c in ctx.checks) else EXIT_CHECK
    report = RunReport(status, code, ctx.checks, ctx.records, "" if error is None else str(error), str(out or ""), ctx.extras)
    _flush(out, cfg, ctx, report)
    return report


def _flush(out, cfg, ctx, report: RunReport):
    if out is None:
        return
    write_diagnostics(out / "diagnostics.csv", report.records)
    (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "meta.json").write_text(json.dumps(_meta(cfg, ctx), indent=2, default=str) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- sweeps and convergence


def sweep(cfg: RunConfig, axis: str, values, out_dir=None) -> list[dict]:
    """Independent runs over one config axis plus ``sweep_summary.csv``."""
    root = Path(out_dir or cfg.run.output_dir or os.environ.get("QDUAL_OUT", "qdual_out"))
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = root / f"{axis}={value}"
        try:
            member = cfg.with_value(axis, value)
            validate(member)
            rep = run(member, sub)
        except ConfigInvalid as exc:
            rep = RunReport("config error", EXIT_CONFIG, error="; ".join(exc.errors))
            sub.mkdir(parents=True, exist_ok=True)
            _flush(sub, cfg, None, rep)
        row = {"value": str(value), "status": rep.status, "exit_code": rep.exit_code}
        for c in rep.checks:
            row[c.name] = c.value
            row[c.name + "_passed"] = c.passed
        rows.append(row)
    cols = ["value", "status", "exit_code"]
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(root / "sweep_summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in cols])
    return rows


def _cell(v):
    if isinstance(v, bool) or isinstance(v, (int, str)):
        return v
    return format(float(v), ".17g")


def _final_state(cfg: RunConfig):
    """Integrate without outputs and return (grid, final array, params)."""
    ctx = _Context(cfg, None)
    g, params, pot = ctx.grid, ctx.params, ctx.pot
    kind = cfg.equation.kind
    psi = build_initial(cfg, g, params, pot, {})
    if kind == "modular":
        st = ModularStepper(g, pot, params, ctx.dt, filter_k=cfg.time.filter_k or None, horizon=cfg.time.t_end)
        arr = psi
        for _ in range(ctx.steps):
            arr = st.step_array(arr)
        return g, arr, params
    if kind == "heat_forward":
        st = HeatStepper(g, pot, params, ctx.dt)
        th = np.abs(psi)
        for _ in range(ctx.steps):
            th = st.step(th)
        return g, th, params
    if kind == "fokker_planck":
        script_V = build_smoluchowski_potential(cfg, g, params, {})
        st = FokkerPlanckStepper(g, params.D, ctx.dt) if script_V is None else FokkerPlanckStepper.from_potential(g, script_V, params, ctx.dt)
        r = np.abs(psi) ** 2
        for _ in range(ctx.steps):
            r = st.step(r)
        return g, r, params
    raise ConfigInvalid(f"convergence study not available for {kind}")


def _reference(cfg: RunConfig, g: Grid1D, params: PhysicalParams):
    """Closed-form solution at t_end for the benchmarks that have one, else None."""
    ini, pot, kind, T = cfg.initial, cfg.potential, cfg.equation.kind, cfg.time.t_end
    if ini.kind != "gaussian" or ini.perturbation:
        return None
    if kind == "modular" and pot.kind == "zero" and params.kappa < 1:
        return modular_free_packet(g.x, T, params.kappa, ini.sigma, ini.x0, ini.p0, params.hbar, params.m), "phase"
    if kind == "heat_forward" and pot.kind == "zero" and ini.p0 == 0:
        amp = gaussian_packet(np.array([ini.x0]), ini.sigma)[0].real
        return heat_gaussian(g.x, T, params.D, math.sqrt(2) * ini.sigma, ini.x0, amp), "plain"
    if kind == "fokker_planck" and cfg.drift.kind in ("zero", "ou"):
        rate = cfg.drift.rate if cfg.drift.kind == "ou" else 0.0
        from .exact import gaussian_density, ou_variance

        if rate == 0:
            var = ini.sigma**2 + 2 * params.D * T
            mean = ini.x0
        else:
            var = ou_variance(T, ini.sigma**2, params.D / rate, rate)
            mean = (ini.x0 - cfg.drift.center) * math.exp(-rate * T) + cfg.drift.center
        return gaussian_density(g.x, mean, math.sqrt(var)), "plain"
    return None


def convergence_study(cfg: RunConfig, levels, out_dir=None) -> list[dict]:
    """Errors over refinement levels ``[(n, dt), ...]`` and observed orders.

    Errors are L2 distances to the closed-form solution when the benchmark
    has one, otherwise to the finest level (which then needs equal ``n``).
    """
    levels = [(int(n), float(dt)) for n, dt in levels]
    if len(levels) < 3:
        raise ConfigInvalid("a convergence study needs at least three levels")
    finals = []
    for n, dt in levels:
        member = cfg.with_value("grid.n", n).with_value("time.dt", dt)
        g, arr, params = _final_state(member)
        finals.append((member, g, arr, params))
    rows = []
    ref_last = None
    if _reference(finals[0][0], finals[0][1], finals[0][3]) is None:
        if len({n for n, _ in levels}) != 1:
            raise ConfigInvalid("without a closed-form reference all levels must share n")
        ref_last = finals[-1][2]
    for (n, dt), (member, g, arr, params) in zip(levels, finals):
        if ref_last is None:
            ref, mode = _reference(member, g, params)
        else:
            ref, mode = ref_last, "plain"
        diff = arr - ref
        if mode == "phase":
            # compare up to a global phase
            ph = np.vdot(ref, arr)
            diff = arr * np.conj(ph) / abs(ph) - ref
        rows.append({"n": n, "dt": dt, "error": math.sqrt(g.integrate(np.abs(diff) ** 2))})
    vary_dt = len({dt for _, dt in levels}) > 1
    for i, r in enumerate(rows):
        r["order"] = float("nan")
        if i > 0 and not (ref_last is not None and i == len(rows) - 1):
            h0 = rows[i - 1]["dt"] if vary_dt else 1.0 / rows[i - 1]["n"]
            h1 = r["dt"] if vary_dt else 1.0 / r["n"]
            if r["error"] > 0 and rows[i - 1]["error"] > 0 and h0 != h1:
                r["order"] = math.log(rows[i - 1]["error"] / r["error"]) / math.log(h0 / h1)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "dt", "error", "order"])
            for r in rows:
                w.writerow([r["n"], format(r["dt"], ".17g"), format(r["error"], ".17g"), format(r["order"], ".17g")])
    return rows
