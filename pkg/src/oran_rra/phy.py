"""SINR and per-RB achievable rates: Shannon with puncturing loss (eMBB), finite blocklength (URLLC)."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc, erfcinv

DEFAULT_TARGET_ERROR = 1e-5


def sinr(p, g, interference=0.0, noise_power: float = 1.0):
    """p*g / (sum of interferer p'*g' + noise).

    ``interference`` is either the already-summed interference power or an
    iterable of (p', g') pairs.
    """
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    if isinstance(interference, (list, tuple)):
        interference = sum(pi * gi for pi, gi in interference)
    return np.asarray(p) * np.asarray(g) / (np.asarray(interference) + noise_power)


def _check_fraction(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("puncture fraction must lie in [0, 1]")
    return rho


def embb_rb_rate(rb_bandwidth, rho, zeta):
    """Per-RB eMBB rate after losing the punctured fraction of mini-slots."""
    rho = _check_fraction(rho)
    return rb_bandwidth * (1.0 - rho) * np.log2(1.0 + np.asarray(zeta))


def embb_user_throughput(theta_row, rates) -> float:
    theta_row = np.asarray(theta_row)
    if not np.all((theta_row == 0) | (theta_row == 1)):
        raise ValueError("allocation indicators must be binary")
    return float(np.sum(theta_row * np.asarray(rates)))


def gaussian_q(z):
    """Gaussian tail probability Q(z) = P(N(0,1) > z)."""
    return 0.5 * erfc(np.asarray(z) / math.sqrt(2.0))


def q_inverse(x):
    """Inverse Gaussian tail: returns z with Q(z) = x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("q_inverse needs 0 < x < 1")
    z = math.sqrt(2.0) * erfcinv(2.0 * x)
    return float(z) if z.ndim == 0 else z


def channel_dispersion(zeta):
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("SINR must be non-negative")
    return 1.0 - 1.0 / (1.0 + zeta) ** 2


def urllc_rate_fbl(rb_bandwidth, rho, zeta, symbols, target_error: float = DEFAULT_TARGET_ERROR):
    """Normal-approximation short-packet rate on one RB, clamped at zero."""
    if np.any(np.asarray(symbols) <= 0):
        raise ValueError("symbols per mini-slot must be positive")
    rho = _check_fraction(rho)
    zeta = np.asarray(zeta, dtype=float)
    penalty = np.sqrt(channel_dispersion(zeta) / symbols) * q_inverse(target_error)
    per_hz = np.maximum(np.log2(1.0 + zeta) - penalty, 0.0)
    return rb_bandwidth * rho * per_hz
