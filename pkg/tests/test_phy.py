import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erfc

from oran_rra.phy import (
    channel_dispersion,
    embb_rb_rate,
    embb_user_throughput,
    gaussian_q,
    q_inverse,
    sinr,
    urllc_rate_fbl,
)

Q_INV_1E5 = 4.264890793922825  # frozen: bisection on the erfc tail below


def q_by_bisection(x, lo=-40.0, hi=40.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2)) > x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_sinr_examples():
    assert sinr(1.0, 1.0, 0.0, 1.0) == 1.0
    assert sinr(1.0, 1.0, [(1.0, 1.0)], 1.0) == 0.5
    assert sinr(0.0, 3.0, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        sinr(1.0, 1.0, 0.0, 0.0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(1e-3, 10), st.floats(1e-3, 1e3))
def test_sinr_scale_invariant(p, g, i, n, c):
    assert sinr(c * p, g, c * i, c * n) == pytest.approx(sinr(p, g, i, n), rel=1e-9, abs=1e-300)


def test_embb_rate_examples():
    assert embb_rb_rate(180e3, 0.0, 1.0) == pytest.approx(180000.0, rel=1e-12)
    assert embb_rb_rate(180e3, 1.0, 123.0) == 0.0
    assert embb_rb_rate(180e3, 3 / 7, 3.0) == pytest.approx(180e3 * 4 / 7 * 2, rel=1e-12)
    with pytest.raises(ValueError):
        embb_rb_rate(180e3, 1.2, 1.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e6), st.floats(0, 1e6))
def test_embb_rate_monotone(r1, r2, z1, z2):
    (ra, rb), (za, zb) = sorted((r1, r2)), sorted((z1, z2))
    assert embb_rb_rate(180e3, rb, za) <= embb_rb_rate(180e3, ra, za) + 1e-9
    assert embb_rb_rate(180e3, ra, za) <= embb_rb_rate(180e3, ra, zb) + 1e-9


def test_user_throughput():
    assert embb_user_throughput([0, 0, 0], [1.0, 2.0, 3.0]) == 0.0
    assert embb_user_throughput([0, 1, 0], [1.0, 2.0, 3.0]) == 2.0
    assert embb_user_throughput([1, 0, 1], [1.0, 2.0, 3.0]) == 4.0
    with pytest.raises(ValueError):
        embb_user_throughput([0.5, 0, 1], [1.0, 2.0, 3.0])


def test_q_inverse_examples():
    assert q_inverse(0.5) == pytest.approx(0.0, abs=1e-15)
    assert q_inverse(1e-5) == pytest.approx(Q_INV_1E5, rel=1e-12)
    assert q_by_bisection(1e-5) == pytest.approx(Q_INV_1E5, rel=1e-12)
    assert q_inverse(1e-6) > q_inverse(1e-5)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            q_inverse(bad)


@given(st.floats(1e-12, 1 - 1e-12))
def test_q_inverse_roundtrip(x):
    z = q_inverse(x)
    assert abs(float(gaussian_q(z)) - x) / x <= 1e-10
    assert abs(0.5 * float(erfc(z / math.sqrt(2))) - x) / x <= 1e-10


def test_dispersion_examples():
    assert channel_dispersion(0.0) == 0.0
    assert channel_dispersion(1.0) == pytest.approx(0.75, rel=1e-12)
    assert channel_dispersion(9.0) == pytest.approx(0.99, rel=1e-12)
    with pytest.raises(ValueError):
        channel_dispersion(-0.1)


def test_fbl_examples():
    assert urllc_rate_fbl(180e3, 1.0, 0.0, 24) == 0.0
    assert urllc_rate_fbl(180e3, 1.0, 3.0, 24, 1e-5) == pytest.approx(
        180e3 * (2 - math.sqrt(0.9375 / 24) * Q_INV_1E5), rel=1e-9)
    assert urllc_rate_fbl(180e3, 1.0, 3.0, 24, 1e-5) == pytest.approx(208273.85009235077, rel=1e-9)
    assert urllc_rate_fbl(180e3, 0.5, 3.0, 1e12) == pytest.approx(180e3 * 0.5 * 2, rel=1e-5)
    with pytest.raises(ValueError):
        urllc_rate_fbl(180e3, 1.0, 3.0, 0)


def test_fbl_clamped_at_zero():
    assert urllc_rate_fbl(180e3, 1.0, 1e-3, 8) == 0.0


@given(st.floats(1e-6, 1e6), st.floats(1e-3, 1e5), st.floats(1e-9, 0.49), st.floats(1e-3, 1))
def test_fbl_below_shannon(zeta, symbols, x, rho):
    shannon = 180e3 * rho * math.log2(1 + zeta)
    assert urllc_rate_fbl(180e3, rho, zeta, symbols, x) < shannon
    assert urllc_rate_fbl(180e3, rho, zeta, symbols, x) >= 0.0
