import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oran_rra.split import (
    SplitConfig,
    TrafficSplitter,
    acf,
    acf_all_lags,
    dynamic_window,
    ewma_ee,
    smoothed_ee,
    split_ratios,
    window_from_acf,
)

CFG = SplitConfig(history=32, threshold=0.5, window_min=2, window_max=16, decay=0.9)


def acf_loops(x, z):
    """Double-loop autocorrelation oracle."""
    j = len(x)
    mean = sum(x) / j
    num = sum((x[i] - mean) * (x[i + z] - mean) for i in range(j - z))
    den = sum((x[i] - mean) ** 2 for i in range(j))
    return 1.0 if den == 0 else num / den


def test_acf_examples():
    assert acf([3, 5, 9, 1], 0) == pytest.approx(1.0, abs=1e-15)
    assert acf([1, -1, 1, -1], 1) == pytest.approx(-0.75, abs=1e-15)
    assert all(acf([4, 4, 4, 4], z) == 1.0 for z in range(4))
    with pytest.raises(ValueError):
        acf([1, 2, 3], 3)


@given(st.lists(st.integers(1, 15), min_size=2, max_size=40))
def test_acf_matches_loops(series):
    x = [float(v) for v in series]
    batch = acf_all_lags(np.array(x))
    for z in range(len(x)):
        ref = acf_loops(x, z)
        assert acf(x, z) == pytest.approx(ref, abs=1e-12)
        assert batch[z] == pytest.approx(ref, abs=1e-12)
        assert -1 - 1e-12 <= ref <= 1 + 1e-12


def test_window_examples():
    cfg = SplitConfig(history=8, threshold=0.5, window_min=1, window_max=6)
    assert window_from_acf([1.0, 0.9, 0.4, 0.2], cfg) == 2
    assert window_from_acf([1.0, 0.4], SplitConfig(history=8, window_min=2, window_max=6)) == 2
    assert dynamic_window([7] * 8, cfg) == 6
    with pytest.raises(ValueError):
        dynamic_window([7], cfg)


@given(st.lists(st.integers(1, 15), min_size=2, max_size=32))
def test_window_in_bounds(series):
    assert CFG.window_min <= dynamic_window(series, CFG) <= CFG.window_max


def test_smoothing_examples():
    assert ewma_ee([2.0, 4.0], 0.5, 2) == pytest.approx(10 / 3, rel=1e-12)
    assert smoothed_ee([3.0] * 6, [1.5] * 6, 3, 0.9) == pytest.approx(2.0, rel=1e-12)
    assert smoothed_ee([1.0, 2.0, 9.0], [1.0, 1.0, 3.0], 1, 0.9) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(ValueError):
        smoothed_ee([1.0, 1.0], [0.0, 0.0], 2, 0.9)


def test_split_examples():
    assert np.allclose(split_ratios([2.0, 2.0]), [0.5, 0.5])
    assert np.allclose(split_ratios([3.0, 1.0]), [0.75, 0.25])
    assert split_ratios([0.0, 1.0, 3.0])[0] == 0.0
    with pytest.raises(ValueError):
        split_ratios([0.0, 0.0])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=6).filter(lambda v: sum(v) > 1e-3),
       st.floats(1e-3, 1e3))
def test_split_simplex_and_scale_invariance(ee, c):
    s = split_ratios(ee)
    assert np.all(s >= 0) and abs(s.sum() - 1) <= 1e-12
    assert np.allclose(split_ratios(np.array(ee) * c), s, rtol=1e-9, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_splitter_matches_scalar_functions(seed):
    rng = np.random.default_rng(seed)
    n, u = 3, 2
    sp = TrafficSplitter(n, u, CFG)
    cqi, rates, powers = [], [], []
    for _ in range(40):
        c = rng.integers(1, 16, (n, u))
        r = rng.random((n, u)) * 1e6
        p = rng.random(n) + 0.5
        sp.observe(c, r, p)
        cqi.append(c), rates.append(r), powers.append(p)
    cqi, rates, powers = np.array(cqi), np.array(rates), np.array(powers)
    out = sp.split()
    expect = np.zeros((n, u))
    for k in range(n):
        for j in range(u):
            g = dynamic_window(cqi[-CFG.history:, k, j], CFG)
            expect[k, j] = smoothed_ee(rates[:, k, j], powers[:, k], g, CFG.decay)
    assert np.allclose(out, expect / expect.sum(axis=0), rtol=1e-9)
    assert np.allclose(out.sum(axis=0), 1.0, atol=1e-12)
