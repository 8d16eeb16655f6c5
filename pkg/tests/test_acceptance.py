"""End-to-end acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line through the ``criterion`` fixture;
the lines are repeated in a summary section at the end of the pytest run.
"""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from qdual.classical import OscillatorState, inverted_trajectory, wick_correspondence_check
from qdual.config import load_config, parse_config
from qdual.duality import HamiltonianPair, ScaleParams, hyperbolic_mix, scale_fields
from qdual.dynamics import FokkerPlanckStepper, Potential
from qdual.exact import gaussian_density, gaussian_packet, heat_entropy
from qdual.fields import Grid1D, MadelungFields, PhysicalParams, WaveFunction, decompose, derivative, laplacian
from qdual.functionals import entropy_rate, hamiltonians, kappa_identities, shannon_entropy
from qdual.runner import EXIT_OK, convergence_study, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
P = PhysicalParams()

MODULAR = """
[grid]
n = {n}
x_min = -20
x_max = 20

[physics]
kappa = {kappa}

[potential]
kind = {pot}
omega = {omega}
sign = {sign}

[initial]
sigma = {sigma}
p0 = {p0}

[time]
dt = 1e-3
t_end = 1
output_every = {every}

[checks]
suites = {suites}
"""


def modular_cfg(kappa, pot="zero", sign="confining", omega=0.5, sigma=1.5, p0=0.3, n=1024, every=100, suites="norm, hamiltonian", extra=""):
    text = MODULAR.format(kappa=kappa, pot=pot, sign=sign, omega=omega, sigma=sigma, p0=p0, n=n, every=every, suites=suites)
    return parse_config(text + extra)


def check(rep, name):
    return next(c for c in rep.checks if c.name == name)


def levels(name):
    with open(CONFIGS / name, newline="", encoding="utf-8") as fh:
        return [(int(r["n"]), float(r["dt"])) for r in csv.DictReader(fh)]


CASES = [(k, pot) for k in (0.0, 0.5, 1.0, 2.0) for pot in ("zero", "harmonic")]


@pytest.fixture(scope="module")
def norm_energy_runs():
    return {case: run(modular_cfg(case[0], case[1]), write=False) for case in CASES}


def test_criterion_01_norm_preservation(norm_energy_runs, criterion):
    worst = max(check(r, "norm_drift").value for r in norm_energy_runs.values())
    assert criterion(1, "norm preservation", worst < 1e-8, f"max |norm - 1| = {worst:.2e} over {len(CASES)} runs")


def test_criterion_02_hamiltonian_constancy(norm_energy_runs, criterion):
    worst = max(check(r, "hamiltonian_drift").value for r in norm_energy_runs.values())
    assert criterion(2, "Hamiltonian constancy", worst < 1e-6, f"max relative drift = {worst:.2e}")


def test_criterion_03_kappa_reduction(criterion):
    rep = run(load_config(CONFIGS / "kappa_reduce.ini"), write=False)
    err = check(rep, "kappa_reduce_l2").value
    assert criterion(3, "kappa-reduction equivalence", err < 1e-5, f"L2 = {err:.2e}")


def test_criterion_04_quantum_heat_duality(criterion):
    cfg = modular_cfg(2.0, sigma=1.0, p0=0.0, suites="norm", extra="\n[duality]\nmap = wick_quantum_to_heat\ncompare = true\n")
    rep = run(cfg, write=False)
    err = check(rep, "heat_duality_l2").value
    fact = check(rep, "factorization").value
    ok = err < 1e-6 and fact < 1e-12
    assert criterion(4, "quantum-heat duality", ok, f"theta* rel L2 = {err:.2e}, factorization = {fact:.2e}")


def test_criterion_05_de_bruijn(criterion):
    rep = run(load_config(CONFIGS / "free_diffusion.ini"), write=False)
    db = check(rep, "de_bruijn").value
    # heat kernel entropy, started from the exact kernel at t = 0.1
    g = Grid1D(1024, -30.0, 30.0)
    D, dt = P.D, 1e-2
    t = 0.1
    rho = gaussian_density(g.x, 0.0, math.sqrt(2 * D * t))
    stepper = FokkerPlanckStepper(g, D, dt)
    worst_S, worst_rate = 0.0, 0.0
    while t <= 2.0 + 1e-12:
        worst_S = max(worst_S, abs(shannon_entropy(rho, g) - heat_entropy(t, D)))
        f = MadelungFields(g, rho, np.zeros(g.n), P, drift=np.zeros(g.n))
        r = entropy_rate(f)
        worst_rate = max(worst_rate, abs(D * r.S_dot - f.mean(f.u**2)))
        rho = stepper.step(rho)
        t += dt
    ok = db < 1e-6 and worst_rate < 1e-6 and worst_S < 1e-4
    assert criterion(5, "de Bruijn identity", ok, f"|D S' - <u^2>| = {max(db, worst_rate):.2e}, heat-kernel S error = {worst_S:.2e}")


def test_criterion_06_smoluchowski_monotonicity(criterion):
    rep = run(load_config(CONFIGS / "ou_relaxation.ini"), write=False)
    vals = {n: check(rep, n) for n in ("free_energy_nonincreasing", "kl_nondecreasing", "relaxation_l1", "free_energy_gap")}
    ok = all(c.passed for c in vals.values()) and vals["relaxation_l1"].value < 1e-3 and vals["free_energy_gap"].value < 1e-4
    detail = ", ".join(f"{n} = {c.value:.2e}" for n, c in vals.items())
    assert criterion(6, "Smoluchowski monotonicity", ok, detail)


def test_criterion_07_riccati(criterion):
    g = Grid1D(256, -5.0, 5.0, "reflecting")
    c = 0.8
    b = -c * g.x
    V = P.m * (0.5 * b**2 + P.D * derivative(b, g))
    lin = float(np.abs(V - P.m * (c**2 * g.x**2 / 2 - P.D * c)).max())
    # phi-form vs drift-form with b = -2 D phi' on a quartic
    q = Grid1D(256, -3.0, 3.0, "reflecting")
    phi = 0.3 * q.x**4
    dphi = derivative(phi, q)
    bq = -2 * P.D * dphi
    V_b = P.m * (0.5 * bq**2 + P.D * derivative(bq, q))
    V_phi = 2 * P.m * P.D**2 * (dphi**2 - laplacian(phi, q))
    forms = float(np.abs(V_b - V_phi).max() / max(1.0, np.abs(V_b).max()))
    ok = lin < 1e-10 and forms < 1e-10
    assert criterion(7, "Riccati consistency", ok, f"linear drift = {lin:.2e}, forms (relative) = {forms:.2e}")


def test_criterion_08_entropy_scaling(criterion):
    g = Grid1D(1024, -20.0, 20.0)
    f = decompose(WaveFunction(g, gaussian_packet(g.x, 1.2, 0.3, 0.5)), P)
    S = shannon_entropy(f.rho, g)
    worst = 0.0
    for beta in (0.5, 2.0, math.e):
        sf, _ = scale_fields(f, Potential.zero(g), ScaleParams(beta=beta))
        worst = max(worst, abs(shannon_entropy(sf.rho, sf.grid) - S + math.log(beta)))
    assert criterion(8, "entropy scaling law", worst < 1e-8, f"max error = {worst:.2e}")


def test_criterion_09_hyperbolic_mixing(criterion):
    g = Grid1D(1024, -20.0, 20.0)
    pot = Potential.harmonic(g, 0.5)
    f = decompose(WaveFunction(g, gaussian_packet(g.x, 1.2, 0.3, 0.5)), P)
    inv = func = ident = 0.0
    for kappa in (0.0, 0.5, 2.0):
        p = P.with_kappa(kappa)
        for alpha in (-0.8, 0.3, 1.1):
            sp = ScaleParams(alpha=alpha)
            sf, spot = scale_fields(f, pot, sp)
            H, Hs = hamiltonians(f, pot, p), hamiltonians(sf, spot, p)
            mixed = hyperbolic_mix(HamiltonianPair(H.H_kappa, H.K_kappa), alpha)
            inv = max(inv, abs(mixed.invariant() - (H.H_kappa**2 - H.K_kappa**2)))
            func = max(func, abs(Hs.H_kappa - mixed.H), abs(Hs.K_kappa - mixed.K))
    ident = max(abs(v) for v in kappa_identities(f, pot).values())
    ok = inv < 1e-12 and func < 1e-8 and ident < 1e-12
    assert criterion(9, "hyperbolic mixing algebra", ok, f"invariant = {inv:.2e}, scaled functionals = {func:.2e}, identities = {ident:.2e}")


def test_criterion_10_oscillator_duality(criterion):
    rng = np.random.default_rng(11)
    sub = 0.0
    for _ in range(500):
        q0, p0 = rng.uniform(-3, 3, 2)
        w, m = rng.uniform(0.05, 5.0), rng.uniform(0.2, 5.0)
        sub = max(sub, wick_correspondence_check(q0, p0, w, m, rng.uniform(-4, 4))["max_deviation"])
    q0, p0, w, m = 0.5, 0.2, 0.8, 1.3
    h = 1e-3
    t = np.linspace(0, 5, 51)
    q, _ = inverted_trajectory(q0, p0, w, m, t)
    qp, _ = inverted_trajectory(q0, p0, w, m, t + h)
    qm, _ = inverted_trajectory(q0, p0, w, m, t - h)
    resid = float(np.abs(m * (qp - 2 * q + qm) / h**2 - m * w**2 * q).max() / max(1.0, np.abs(q).max()))
    tt = np.linspace(-20 / w, 20 / w, 801)
    qq, pp = inverted_trajectory(q0, p0, w, m, tt)
    Hb = OscillatorState(qq, pp, w, m).H_bar
    # H_bar is a difference of terms of size ~exp(2|wt|), so its error is measured against that size
    scale = float((pp**2 / (2 * m) + m * w**2 * qq**2 / 2).max())
    hbar_dev = float(np.abs(Hb - (p0**2 / (2 * m) - m * w**2 * q0**2 / 2)).max() / scale)
    ok = sub < 1e-12 and resid < 1e-6 and hbar_dev < 1e-10
    assert criterion(10, "oscillator Wick duality", ok, f"substitution = {sub:.2e}, Newton residual = {resid:.2e}, H_bar (relative) = {hbar_dev:.2e}")


def test_criterion_11_lyapunov(tmp_path, criterion):
    # kappa = 2 sector with W = -V: the dissipative scenario generated by H-
    cfg = modular_cfg(2.0, pot="harmonic", sign="scattering", sigma=1.5, p0=0.3, every=10, suites="f_rate, lyapunov")
    rep = run(cfg, tmp_path)
    with open(tmp_path / "diagnostics.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    F = np.array([float(r["F"]) for r in rows])
    Hm = np.array([float(r["H_minus"]) for r in rows])
    L = F - t * Hm
    strict = bool(np.all(np.diff(L) < 0))
    g = Grid1D(1024, -20.0, 20.0)
    meanV = g.integrate(np.abs(gaussian_packet(g.x, 1.5, 0.0, 0.3)) ** 2 * 0.5 * 0.25 * g.x**2)
    rate = check(rep, "f_rate_dual").value
    ok = strict and meanV > 0 and rate < 1e-5 and rep.exit_code == EXIT_OK
    assert criterion(11, "Lyapunov behavior", ok, f"F - tH- strictly decreasing over {len(L)} records: {strict}, |dF/dt + H+| = {rate:.2e}")


def test_criterion_12_on_shell(criterion):
    worst = 0.0
    for kappa in (0.0, 1.0, 2.0):
        rep = run(modular_cfg(kappa, pot="harmonic", suites="on_shell"), write=False)
        worst = max(worst, check(rep, "on_shell_mean_ds_dt").value)
    assert criterion(12, "on-shell identity", worst < 1e-5, f"max |<ds/dt> + H_kappa| = {worst:.2e}")


def test_criterion_13_convergence(tmp_path, criterion):
    t_rows = convergence_study(load_config(CONFIGS / "modular_time_order.ini"), levels("levels_time.csv"), tmp_path / "time")
    orders = [r["order"] for r in t_rows[1:]]
    s_rows = convergence_study(load_config(CONFIGS / "heat_kernel.ini"), levels("levels_space.csv"), tmp_path / "space")
    err = {r["n"]: r["error"] for r in s_rows}
    floor = err[256] < 1e-12 and err[512] > 0.1 * err[256]
    ok = all(abs(o - 2.0) <= 0.1 for o in orders) and floor
    detail = f"temporal orders = {', '.join(f'{o:.3f}' for o in orders)}, spatial error n=256: {err[256]:.2e}, n=512: {err[512]:.2e}"
    assert criterion(13, "convergence orders", ok, detail)
