"""Closed-form solutions used as oracles and as benchmark initial data."""

from __future__ import annotations

import numpy as np

from .fields import PhysicalParams


def gaussian_density(x, mean=0.0, sigma=1.0):
    return np.exp(-((x - mean) ** 2) / (2.0 * sigma**2)) / np.sqrt(2.0 * np.pi * sigma**2)


def gaussian_packet(x, sigma=1.0, x0=0.0, p0=0.0, hbar=1.0):
    """Normalized Gaussian with position spread ``sigma`` and mean momentum ``p0``."""
    return np.sqrt(gaussian_density(x, x0, sigma)) * np.exp(1j * p0 * (x - x0) / hbar)


def _free_packet_log(x, t, sigma, x0, p0, hbar, m):
    """log psi for the free linear packet; its imaginary part is the continuous phase s/hbar."""
    tau = hbar * t / (2.0 * m * sigma**2)
    z = 1.0 + 1j * tau
    xc = x - x0 - p0 * t / m
    return (
        -0.25 * np.log(2.0 * np.pi * sigma**2)
        - 0.5 * np.log(z)
        - xc**2 / (4.0 * sigma**2 * z)
        + 1j * p0 * (x - x0) / hbar
        - 1j * p0**2 * t / (2.0 * m * hbar)
    )


def free_packet(x, t, sigma=1.0, x0=0.0, p0=0.0, hbar=1.0, m=1.0):
    """Free linear Schrodinger evolution of :func:`gaussian_packet`."""
    return np.exp(_free_packet_log(x, t, sigma, x0, p0, hbar, m))


def free_packet_width(t, sigma=1.0, hbar=1.0, m=1.0):
    return sigma * np.sqrt(1.0 + (hbar * t / (2.0 * m * sigma**2)) ** 2)


def modular_free_packet(x, t, kappa, sigma=1.0, x0=0.0, p0=0.0, hbar=1.0, m=1.0):
    """Free Gaussian solution of the modular equation for ``0 <= kappa < 1``.

    Obtained by pulling the linear free packet back through the kappa
    scaling: with ``c = sqrt(1 - kappa)`` the density is the linear one at
    time ``c t`` and the phase is ``c`` times the linear phase, where the
    linear packet starts with momentum ``p0 / c``.
    """
    if not 0 <= kappa < 1:
        raise ValueError("closed form only for 0 <= kappa < 1")
    c = np.sqrt(1.0 - kappa)
    log = _free_packet_log(x, c * t, sigma, x0, p0 / c, hbar, m)
    return np.exp(log.real) * np.exp(1j * c * log.imag)


def heat_gaussian(x, t, D, sigma0=1.0, x0=0.0, amplitude=1.0):
    """Solution of ``f_t = D f''`` from ``amplitude * exp(-(x-x0)^2 / 2 sigma0^2)``."""
    var = sigma0**2 + 2.0 * D * t
    return amplitude * np.sqrt(sigma0**2 / var) * np.exp(-((x - x0) ** 2) / (2.0 * var))


def heat_entropy(t, D, sigma0=0.0):
    """Shannon entropy of a Gaussian whose variance is ``sigma0^2 + 2 D t``."""
    return 0.5 * np.log(2.0 * np.pi * np.e * (sigma0**2 + 2.0 * D * t))


def harmonic_ground_state(x, omega=1.0, params: PhysicalParams | None = None, center=0.0):
    """Ground state of ``-(hbar^2/2m) d^2 + m omega^2 x^2 / 2`` and its energy."""
    params = params or PhysicalParams()
    hbar, m = params.hbar, params.m
    phi = (m * omega / (np.pi * hbar)) ** 0.25 * np.exp(-m * omega * (x - center) ** 2 / (2.0 * hbar))
    return phi, 0.5 * hbar * omega


def ou_variance(t, var0, var_inf, rate):
    """Variance of an Ornstein-Uhlenbeck density with drift ``-rate * x``."""
    return var_inf + (var0 - var_inf) * np.exp(-2.0 * rate * t)
