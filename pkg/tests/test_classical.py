import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdual.classical import (
    OscillatorState,
    free_limit,
    harmonic_trajectory,
    inverted_trajectory,
    newton_rhs,
    rk4,
    wick_correspondence_check,
)
from qdual.errors import RangeWarning


class TestHarmonic:
    def test_rest(self):
        q, p = harmonic_trajectory(0.0, 0.0, 1.7, 2.0, np.linspace(0, 50, 101))
        assert np.all(q == 0.0) and np.all(p == 0.0)

    def test_quarter_period(self):
        q0, p0, w, m = 0.8, -0.3, 2.0, 1.5
        q, p = harmonic_trajectory(q0, p0, w, m, math.pi / (2 * w))
        assert q == pytest.approx(p0 / (m * w), abs=1e-14)
        assert p == pytest.approx(-m * w * q0, abs=1e-14)

    def test_energy_constant(self):
        t = np.linspace(0, 40, 401)
        q, p = harmonic_trajectory(1.1, 0.4, 1.3, 0.7, t)
        H = OscillatorState(q, p, 1.3, 0.7).H
        assert np.abs(H - H[0]).max() < 1e-12

    def test_rk4_oracle(self):
        q0, p0, w, m = 1.0, 0.5, 1.2, 0.9
        period = 2 * math.pi / w
        t, y = rk4(newton_rhs(lambda q: -m * w**2 * q, m), [q0, p0], 10 * period, period / 1000)
        q, p = harmonic_trajectory(q0, p0, w, m, t)
        assert np.abs(y[:, 0] - q).max() < 1e-9
        assert np.abs(y[:, 1] - p).max() < 1e-9
        H = OscillatorState(y[:, 0], y[:, 1], w, m).H
        assert np.abs(H - H[0]).max() < 1e-9

    def test_rejects_non_positive_omega(self):
        with pytest.raises(ValueError):
            harmonic_trajectory(1.0, 0.0, 0.0, 1.0, 1.0)


class TestInverted:
    def test_initial_point_flips_momentum(self):
        q, p = inverted_trajectory(0.6, 1.4, 0.9, 1.2, 0.0)
        assert (q, p) == (0.6, -1.4)

    def test_newton_residual(self):
        q0, p0, w, m = 0.5, 0.2, 0.8, 1.3
        h = 1e-3
        t = np.linspace(0, 5, 51)
        q, _ = inverted_trajectory(q0, p0, w, m, t)
        qp, _ = inverted_trajectory(q0, p0, w, m, t + h)
        qm, _ = inverted_trajectory(q0, p0, w, m, t - h)
        # analytic second derivative: w^2 times the trajectory itself
        ddq = w**2 * (q0 * np.cosh(w * t) - p0 / (m * w) * np.sinh(w * t))
        np.testing.assert_allclose(m * ddq, m * w**2 * q, rtol=1e-14, atol=0)
        fd = (qp - 2 * q + qm) / h**2
        assert np.abs(m * fd - m * w**2 * q).max() / max(1.0, np.abs(q).max()) < 1e-6

    def test_momentum_is_mass_times_velocity(self):
        q0, p0, w, m = 0.5, 0.2, 0.8, 1.3
        h = 1e-5
        t = np.linspace(0, 3, 13)
        qp, _ = inverted_trajectory(q0, p0, w, m, t + h)
        qm, _ = inverted_trajectory(q0, p0, w, m, t - h)
        _, p = inverted_trajectory(q0, p0, w, m, t)
        np.testing.assert_allclose(m * (qp - qm) / (2 * h), p, atol=1e-8)

    @pytest.mark.parametrize("q0,p0,w,m", [(1.0, 0.0, 1.0, 1.0), (0.3, -0.8, 2.5, 0.6), (-1.2, 0.9, 0.4, 3.0)])
    def test_dual_energy_constant(self, q0, p0, w, m):
        t = np.linspace(-20 / w, 20 / w, 801)
        q, p = inverted_trajectory(q0, p0, w, m, t)
        Hb = OscillatorState(q, p, w, m).H_bar
        ref = p0**2 / (2 * m) - m * w**2 * q0**2 / 2
        # cosh^2 - sinh^2 cancels terms of size ~exp(2|wt|); error is relative to that scale
        scale = (p**2 / (2 * m) + m * w**2 * q**2 / 2).max()
        assert np.abs(Hb - ref).max() / scale < 1e-10

    def test_time_reflected_pair(self):
        q0, p0, w, m = 0.7, 0.3, 1.1, 1.0
        t = np.linspace(0, 4, 41)
        qr, pr = inverted_trajectory(q0, p0, w, m, t, reflected=True)
        q, p = inverted_trajectory(q0, p0, w, m, -t)
        np.testing.assert_array_equal(qr, q)
        np.testing.assert_array_equal(pr, -p)
        # the reflected pair runs the inverted dynamics backwards from (q0, p0)
        assert (qr[0], pr[0]) == (q0, p0)
        t2, y = rk4(newton_rhs(lambda x: m * w**2 * x, m), [q0, p0], 4.0, 1e-3)
        np.testing.assert_allclose(y[::100, 0], qr, atol=1e-9, rtol=1e-10)
        np.testing.assert_allclose(y[::100, 1], pr, atol=1e-9, rtol=1e-10)

    def test_range_warning(self):
        with pytest.warns(RangeWarning):
            inverted_trajectory(1.0, 0.0, 1.0, 1.0, np.array([0.0, 800.0]))

    def test_no_warning_in_range(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            inverted_trajectory(1.0, 0.0, 1.0, 1.0, np.array([0.0, 600.0]))


class TestCorrespondence:
    @settings(max_examples=200, deadline=None)
    @given(
        q0=st.floats(-3, 3),
        p0=st.floats(-3, 3),
        w=st.floats(0.05, 5.0),
        t=st.floats(-4, 4),
        m=st.floats(0.2, 5.0),
    )
    def test_substitution_reproduces_inverted(self, q0, p0, w, m, t):
        assert wick_correspondence_check(q0, p0, w, m, t)["max_deviation"] < 1e-12

    def test_energy_map(self):
        for q0, p0, w, m in [(1.0, 0.5, 1.0, 1.0), (-0.4, 2.0, 0.3, 2.5)]:
            assert wick_correspondence_check(q0, p0, w, m, 0.7)["energy_deviation"] < 1e-12

    def test_free_limit(self):
        q0, p0, m, w = 0.4, 0.9, 1.5, 1e-8
        t = np.linspace(0, 10, 21)
        (qf, pf), (qb, pb) = free_limit(q0, p0, m, t)
        q, p = harmonic_trajectory(q0, p0, w, m, t)
        qi, pi = inverted_trajectory(q0, p0, w, m, t)
        assert np.abs(q - qf).max() < 1e-8 and np.abs(p - pf).max() < 1e-8
        assert np.abs(qi - qb).max() < 1e-8 and np.abs(pi - pb).max() < 1e-8
