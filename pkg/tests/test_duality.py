import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdual.classical import inverted_trajectory
from qdual.duality import (
    HamiltonianPair,
    ScaleParams,
    hyperbolic_mix,
    kappa_pullback,
    kappa_reduce,
    scale_fields,
    wick_classical,
    wick_quantum_to_heat,
    wick_schrodinger_to_diffusion,
)
from qdual.dynamics import HeatStepper, ModularStepper, Potential, StepControl, step_hj_classical, step_heat_backward
from qdual.errors import BorderlineKappa, HorizonExceeded, RangeWarning
from qdual.exact import gaussian_density, gaussian_packet, harmonic_ground_state, heat_gaussian
from qdual.fields import Grid1D, MadelungFields, PhysicalParams, WaveFunction, compose, decompose
from qdual.functionals import PhaseTracker, hamiltonians, shannon_entropy

P = PhysicalParams()


def grid(n=1024, L=20.0, boundary="periodic"):
    return Grid1D(n, -L, L, boundary)


def rel_l2(a, b, g, mask=None):
    if mask is None:
        mask = np.ones(g.n, bool)
    return math.sqrt(np.sum(np.abs(a - b)[mask] ** 2) / np.sum(np.abs(b)[mask] ** 2))


def packet_fields(g, sigma=1.2, x0=0.3, p0=0.5, params=P):
    return decompose(WaveFunction(g, gaussian_packet(g.x, sigma, x0, p0)), params)


class TestScaling:
    def test_alpha_beta_consistency(self):
        sp = ScaleParams(beta=2.0)
        assert sp.alpha == pytest.approx(2 * math.log(2))
        assert ScaleParams(alpha=sp.alpha).beta == pytest.approx(2.0)
        with pytest.raises(ValueError):
            ScaleParams(beta=2.0, alpha=0.1)
        with pytest.raises(ValueError):
            ScaleParams(beta=-1.0)

    def test_unit_scale_is_identity(self):
        g = grid(256)
        f = packet_fields(g)
        pot = Potential.harmonic(g, 0.5)
        sf, spot = scale_fields(f, pot, ScaleParams(beta=1.0))
        np.testing.assert_array_equal(sf.rho, f.rho)
        np.testing.assert_array_equal(sf.s, f.s)
        np.testing.assert_array_equal(spot.V, pot.V)

    def test_entropy_shift(self):
        g = grid()
        f = packet_fields(g)
        sf, _ = scale_fields(f, Potential.zero(g), ScaleParams(beta=2.0))
        shift = shannon_entropy(sf.rho, sf.grid) - shannon_entropy(f.rho, g)
        assert abs(shift + math.log(2.0)) < 1e-8
        assert sf.norm() == pytest.approx(1.0, abs=1e-13)

    def test_velocities_scale_pointwise(self):
        g = grid()
        f = packet_fields(g)
        beta = 2.0
        sf, _ = scale_fields(f, Potential.zero(g), ScaleParams(beta=beta))
        # velocities are only defined where the density is resolved
        core = f.rho >= 1e-10 * f.rho.max()
        assert np.abs(sf.u - beta * f.u)[core].max() < 1e-9
        assert np.abs(sf.v - f.v / beta)[core].max() < 1e-9


class TestHyperbolicMix:
    def test_zero_angle_is_identity(self):
        pair = HamiltonianPair(1.3, -0.4)
        assert hyperbolic_mix(pair, 0.0) == pair

    @settings(max_examples=200)
    @given(H=st.floats(-10, 10), K=st.floats(-10, 10), a=st.floats(-3, 3))
    def test_invariant(self, H, K, a):
        pair = HamiltonianPair(H, K)
        mixed = hyperbolic_mix(pair, a)
        scale = max(1.0, H * H + K * K) * math.cosh(a) ** 2
        assert abs(mixed.invariant() - pair.invariant()) < 1e-12 * scale

    @settings(max_examples=200)
    @given(H=st.floats(-10, 10), K=st.floats(-10, 10), a1=st.floats(-2, 2), a2=st.floats(-2, 2))
    def test_group_law(self, H, K, a1, a2):
        pair = HamiltonianPair(H, K)
        two = hyperbolic_mix(hyperbolic_mix(pair, a1), a2)
        one = hyperbolic_mix(pair, a1 + a2)
        scale = max(1.0, abs(H) + abs(K)) * math.cosh(abs(a1) + abs(a2))
        assert abs(two.H - one.H) < 1e-12 * scale
        assert abs(two.K - one.K) < 1e-12 * scale

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            hyperbolic_mix(HamiltonianPair(float("nan"), 0.0), 0.1)

    def test_matches_functionals_of_scaled_fields(self):
        g = grid()
        pot = Potential.harmonic(g, 0.5)
        f = packet_fields(g)
        for kappa in (0.0, 0.5, 2.0):
            p = P.with_kappa(kappa)
            sp = ScaleParams(alpha=0.6)
            sf, spot = scale_fields(f, pot, sp)
            H, Hs = hamiltonians(f, pot, p), hamiltonians(sf, spot, p)
            mixed = hyperbolic_mix(HamiltonianPair(H.H_kappa, H.K_kappa), sp.alpha)
            assert abs(Hs.H_kappa - mixed.H) < 1e-8
            assert abs(Hs.K_kappa - mixed.K) < 1e-8


    @pytest.mark.parametrize("alpha", [-0.7, 0.4, 1.5])
    def test_kappa_one_energy_scales_exponentially(self, alpha):
        g = grid()
        pot = Potential.harmonic(g, 0.5)
        p = P.with_kappa(1.0)
        f = packet_fields(g, params=p)
        sf, spot = scale_fields(f, pot, ScaleParams(alpha=alpha))
        assert abs(hamiltonians(sf, spot, p).H_kappa - math.exp(-alpha) * hamiltonians(f, pot, p).H_kappa) < 1e-8


class TestKappaReduction:
    def test_linear_equation_is_fixed(self):
        g = grid(256)
        wf = WaveFunction(g, gaussian_packet(g.x, 1.0, 0.0, 0.3))
        red = kappa_reduce(wf, Potential.zero(g), 0.0, P)
        assert red.time_dilation == 1.0 and red.target_kappa == 0.0
        assert red.psi is wf

    def test_kappa_two_is_fixed(self):
        g = grid(256)
        wf = WaveFunction(g, gaussian_packet(g.x, 1.0))
        pot = Potential.harmonic(g, 0.5)
        red = kappa_reduce(wf, pot, 2.0, P)
        assert red.target_kappa == 2.0 and red.time_dilation == 1.0
        np.testing.assert_array_equal(red.pot.V, pot.V)

    def test_borderline(self):
        g = grid(256)
        with pytest.raises(BorderlineKappa):
            kappa_reduce(WaveFunction(g, gaussian_packet(g.x)), Potential.zero(g), 1.0, P)

    def test_reduction_scales_phase_and_potential(self):
        g = grid(256)
        wf = WaveFunction(g, gaussian_packet(g.x, 1.0, 0.0, 0.4))
        pot = Potential.harmonic(g, 1.0)
        red = kappa_reduce(wf, pot, 0.75, P)
        assert red.time_dilation == pytest.approx(0.5)
        np.testing.assert_allclose(red.pot.V, pot.V * 4)
        back = kappa_pullback(red.psi, red, P, s=decompose(red.psi, P).s)
        # the phase is meaningless below the density floor, compare on the resolved support
        f = decompose(wf, P)
        core = f.rho >= 1e-10 * f.rho.max()
        assert np.abs(back.psi - compose(f).psi)[core].max() < 1e-12

    def test_nonlinear_run_equals_pulled_back_linear_run(self):
        g = grid()
        kappa, dt, steps = 0.5, 1e-3, 300
        params = P.with_kappa(kappa)
        pot = Potential.harmonic(g, 1.0)
        f0 = decompose(WaveFunction(g, gaussian_packet(g.x, 0.8, 0.5, 0.4)), params)
        psi = compose(f0).psi
        red = kappa_reduce(WaveFunction(g, psi), pot, kappa, params)
        c = red.time_dilation
        direct = ModularStepper(g, pot, params, dt)
        linear = ModularStepper(g, red.pot, params.with_kappa(0.0), c * dt)
        tr = PhaseTracker(psi, 1.0, s0=f0.s)
        rpsi = red.psi.psi
        rtr = PhaseTracker(rpsi, 1.0, s0=f0.s / c)
        for _ in range(steps):
            psi = direct.step_array(psi)
            rpsi = linear.step_array(rpsi)
            tr.update(psi)
            rtr.update(rpsi)
        f = decompose(WaveFunction(g, psi), params)
        rf = decompose(WaveFunction(g, rpsi), params)
        back = kappa_pullback(WaveFunction(g, rpsi), red, params, s=rtr.gauge(rf.s)).psi
        direct_psi = np.sqrt(f.rho) * np.exp(1j * tr.gauge(f.s))
        assert math.sqrt(g.integrate(np.abs(back - direct_psi) ** 2)) < 1e-5


class TestQuantumToHeat:
    def test_zero_phase(self):
        g = grid(256)
        amp = np.sqrt(gaussian_density(g.x, 0.0, 1.0))
        pair = wick_quantum_to_heat(WaveFunction(g, amp), P)
        np.testing.assert_array_equal(pair.theta, amp)
        np.testing.assert_array_equal(pair.theta_star, amp)

    @settings(max_examples=30, deadline=None)
    @given(p0=st.floats(-1, 1), x0=st.floats(-2, 2))
    def test_factorization(self, p0, x0):
        g = grid(512)
        wf = WaveFunction(g, gaussian_packet(g.x, 1.0, x0, p0))
        pair = wick_quantum_to_heat(wf, P)
        assert np.abs(pair.rho - wf.rho).max() < 1e-12

    def test_large_action_warns(self):
        g = grid(512)
        wf = WaveFunction(g, gaussian_packet(g.x, 3.0, 0.0, 5.0))
        with pytest.warns(RangeWarning):
            wick_quantum_to_heat(wf, P)

    def test_kappa2_trajectory_obeys_both_heat_equations(self):
        g = grid()
        params = P.with_kappa(2.0)
        pot = Potential.harmonic(g, 0.5, sign_convention="scattering")
        dt, steps = 1e-3, 500
        f0 = decompose(WaveFunction(g, gaussian_packet(g.x, 1.0)), params)
        psi = compose(f0).psi
        tr = PhaseTracker(psi, 1.0, s0=f0.s)
        st_ = ModularStepper(g, pot, params, dt, horizon=steps * dt)
        pairs, masks = [], []
        for k in range(steps + 1):
            if k:
                psi = st_.step_array(psi)
                tr.update(psi)
            if k % 100 == 0:
                f = decompose(WaveFunction(g, psi), params)
                pairs.append(wick_quantum_to_heat(WaveFunction(g, psi), params, s=tr.gauge(f.s)))
                masks.append(f.rho >= 1e-10 * f.rho.max())
        heat = HeatStepper(g, pot, params, dt)
        ts = pairs[0].theta_star
        for j in range(1, len(pairs)):
            for _ in range(100):
                ts = heat.step(ts)
            assert rel_l2(pairs[j].theta_star, ts, g, masks[j]) < 1e-6
        # theta from its horizon value, propagated back towards t = 0
        th = pairs[-1].theta
        ctl = StepControl(dt, t=steps * dt)
        for j in range(len(pairs) - 2, -1, -1):
            for _ in range(100):
                th = step_heat_backward(th, pot, params, ctl, horizon=steps * dt)
            assert rel_l2(pairs[j].theta, th, g, masks[j]) < 1e-6


class TestClassicalMap:
    def test_static_free_state_is_self_dual(self):
        g = grid(128)
        rho = gaussian_density(g.x)
        r, s, pot = wick_classical(rho, np.zeros(g.n), Potential.zero(g))
        np.testing.assert_array_equal(r, rho)
        assert np.all(s == 0.0)
        assert np.all(pot.effective == 0.0)

    def test_involution(self):
        g = grid(128)
        rho, s = gaussian_density(g.x), 0.3 * g.x + 0.1 * g.x**2
        pot = Potential.harmonic(g, 0.8)
        r2, s2, pot2 = wick_classical(*wick_classical(rho, s, pot))
        np.testing.assert_array_equal(r2, rho)
        np.testing.assert_array_equal(s2, s)
        assert pot2 == pot

    def test_harmonic_dual_centroid_is_inverted_oscillator(self):
        g = grid(1024, 12.0, "reflecting")
        q0, p0, omega, T, dt = 0.4, 0.3, 1.0, 0.5, 1e-3
        rho, s, pot = wick_classical(gaussian_density(g.x, q0, 0.5), p0 * g.x, Potential.harmonic(g, omega))
        f = MadelungFields(g, rho, s, P.with_kappa(1.0))
        ctl = StepControl(dt, scheme="method_of_lines_rk4")
        for _ in range(int(round(T / dt))):
            f = step_hj_classical(f, pot, P, ctl)
        q, p = inverted_trajectory(q0, p0, omega, 1.0, T)
        assert abs(f.mean(g.x) - q) < 1e-6
        assert abs(f.mean(f.v) - p) < 1e-6


class TestSchrodingerToDiffusion:
    def test_ground_state_log_slope(self):
        g = grid(256, 10.0)
        pot = Potential.harmonic(g, 1.0)
        phi, E0 = harmonic_ground_state(g.x, 1.0)
        times = np.linspace(0, 1.0, 11)
        traj = [phi * np.exp(-1j * E0 * t) for t in times]
        dual = wick_schrodinger_to_diffusion(traj, times, pot, P)
        logs = [math.log(math.sqrt(g.integrate(dual.theta_star[k] ** 2))) for k in range(len(times))]
        slope = np.polyfit(times, logs, 1)[0]
        assert abs(-slope - E0) < 1e-6
        assert dual.report["trajectory_spread"] < 1e-8

    def test_free_gaussian_matches_heat_kernel(self):
        g = grid(512, 20.0)
        pot = Potential.zero(g)
        sig, dt = 1.0, 1e-3
        psi = gaussian_packet(g.x, sig)
        st_ = ModularStepper(g, pot, P, dt)
        times, traj = [0.0], [psi]
        for k in range(1, 501):
            psi = st_.step_array(psi)
            if k % 100 == 0:
                times.append(k * dt)
                traj.append(psi)
        dual = wick_schrodinger_to_diffusion(traj, times, pot, P)
        amp0 = np.abs(traj[0]).max()
        for k, t in enumerate(times):
            ref = heat_gaussian(g.x, t, P.D, math.sqrt(2) * sig, 0.0, amp0)
            assert rel_l2(dual.theta_star[k], ref, g) < 1e-6
        assert dual.report["forward_semigroup_deviation"] < 1e-6
        assert dual.report["backward_semigroup_deviation"] < 1e-6

    def test_anchor_slice_factorizes(self):
        # reflecting box wide enough that the even extension has no visible kink
        g = grid(256, 14.0, "reflecting")
        pot = Potential.harmonic(g, 0.7)
        psi = gaussian_packet(g.x, 1.0, 0.3, 0.2)
        dual = wick_schrodinger_to_diffusion([psi], [0.0], pot, P, horizon=0.5)
        assert np.abs(dual.theta[0] * dual.theta_star[0] - np.abs(psi) ** 2).max() < 1e-12

    def test_times_beyond_horizon(self):
        g = grid(256, 10.0)
        psi = gaussian_packet(g.x)
        with pytest.raises(HorizonExceeded):
            wick_schrodinger_to_diffusion([psi, psi], [0.0, 2.0], Potential.zero(g), P, horizon=1.0)
