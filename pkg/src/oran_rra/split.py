"""Traffic-split xApp: ACF-sized window over CQI history, smoothed per-route EE, normalized split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitConfig:
    history: int = 32  # J
    threshold: float = 0.5  # ACF cut-off
    window_min: int = 4
    window_max: int = 16
    decay: float = 0.9

    def __post_init__(self) -> None:
        if not 0 < self.threshold < 1:
            raise ValueError("ACF threshold must lie in (0, 1)")
        if not 1 <= self.window_min <= self.window_max <= self.history:
            raise ValueError("need 1 <= window_min <= window_max <= history")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")


def acf(series, lag: int) -> float:
    """Sample autocorrelation at ``lag``, normalized by the lag-0 sum of squares.

    A constant series is treated as perfectly correlated (returns 1).
    """
    x = np.asarray(series, dtype=float)
    j = len(x)
    if j < 2:
        raise ValueError("need at least two samples")
    if not 0 <= lag < j:
        raise ValueError(f"lag must lie in [0, {j})")
    dev = x - x.mean()
    den = float(dev @ dev)
    if den == 0.0:
        return 1.0
    return float(dev[: j - lag] @ dev[lag:]) / den


def window_from_acf(acf_values, cfg: SplitConfig) -> int:
    """First lag whose ACF drops below the threshold, clamped to [window_min, window_max]."""
    below = [z for z, v in enumerate(acf_values) if v < cfg.threshold]
    raw = below[0] if below else cfg.window_max
    return max(cfg.window_min, min(cfg.window_max, raw))


def dynamic_window(history, cfg: SplitConfig) -> int:
    x = np.asarray(history, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two CQI samples")
    return window_from_acf([acf(x, z) for z in range(len(x))], cfg)


def ewma_ee(ee_frames, decay: float, window: int) -> float:
    """Exponentially weighted mean of the last ``window`` per-frame EE values (newest weight 1)."""
    ee = np.asarray(ee_frames, dtype=float)[-window:]
    w = decay ** np.arange(len(ee) - 1, -1, -1)
    return float(w @ ee / w.sum())


def smoothed_ee(rates, powers, window: int, decay: float) -> float:
    """Windowed EE per frame (rate sum over power sum), then exponentially smoothed.

    ``rates`` and ``powers`` are per-TTI samples, oldest first.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    r = np.asarray(rates, dtype=float)
    p = np.asarray(powers, dtype=float)
    if r.shape != p.shape or r.size == 0:
        raise ValueError("rates and powers must be equal-length, non-empty")
    t = len(r)
    frames = []
    for i in range(max(0, t - window), t):
        lo = max(0, i - window + 1)
        ptot = p[lo : i + 1].sum()
        if ptot <= 0:
            raise ValueError("zero total power in window")
        frames.append(r[lo : i + 1].sum() / ptot)
    return ewma_ee(frames, decay, window)


def split_ratios(ee_row) -> np.ndarray:
    ee = np.asarray(ee_row, dtype=float)
    if np.any(ee < 0):
        raise ValueError("EE values must be non-negative")
    total = ee.sum()
    if total <= 0:
        raise ValueError("no viable route: all EE values are zero")
    return ee / total


def acf_all_lags(history: np.ndarray) -> np.ndarray:
    """ACF at lags 0..J-1 along the last axis, batched over leading axes."""
    x = np.asarray(history, dtype=float)
    j = x.shape[-1]
    dev = x - x.mean(axis=-1, keepdims=True)
    den = np.einsum("...i,...i->...", dev, dev)
    # shifted[..., z, i] = dev[..., i + z], zero past the end
    padded = np.concatenate([dev, np.zeros_like(dev)], axis=-1)
    lags = np.arange(j)[:, None] + np.arange(j)[None, :]
    num = np.einsum("...zi,...i->...z", padded[..., lags], dev)
    nz = den > 0
    return np.where(nz[..., None], num / np.where(nz, den, 1.0)[..., None], 1.0)


class TrafficSplitter:
    """Per-(RU, user) CQI, rate and power histories; owned and mutated by the environment loop."""

    def __init__(self, n_rus: int, n_users: int, cfg: SplitConfig):
        self.cfg = cfg
        self.n_rus = n_rus
        self.n_users = n_users
        self.keep = 2 * cfg.window_max
        self.cqi = np.zeros((n_rus, n_users, cfg.history))
        self.rates = np.zeros((self.keep, n_rus, n_users))
        self.powers = np.zeros((self.keep, n_rus))
        self.count = 0

    def observe(self, cqi: np.ndarray, rates: np.ndarray, powers: np.ndarray) -> None:
        """cqi, rates: (N, U); powers: (N,) consumed power per RU (must be > 0)."""
        self.cqi = np.roll(self.cqi, -1, axis=-1)
        self.cqi[..., -1] = cqi
        self.rates = np.roll(self.rates, -1, axis=0)
        self.rates[-1] = rates
        self.powers = np.roll(self.powers, -1, axis=0)
        self.powers[-1] = powers
        self.count += 1

    def cqi_history(self) -> np.ndarray:
        return self.cqi[..., -min(self.count, self.cfg.history):]

    def windows(self) -> np.ndarray:
        if self.count < 2:
            return np.full((self.n_rus, self.n_users), self.cfg.window_min, dtype=int)
        phi = acf_all_lags(self.cqi_history())
        below = phi < self.cfg.threshold
        raw = np.where(below.any(axis=-1), below.argmax(axis=-1), self.cfg.window_max)
        return np.clip(raw, self.cfg.window_min, self.cfg.window_max).astype(int)

    def smoothed(self) -> np.ndarray:
        """Smoothed EE per route, shape (N, U)."""
        t = min(self.count, self.keep)
        rates = self.rates[self.keep - t:]
        powers = self.powers[self.keep - t:]
        cr = np.concatenate([np.zeros((1,) + rates.shape[1:]), np.cumsum(rates, axis=0)])
        cp = np.concatenate([np.zeros((1,) + powers.shape[1:]), np.cumsum(powers, axis=0)])
        win = self.windows()
        out = np.zeros((self.n_rus, self.n_users))
        for g in np.unique(win):
            idx = np.arange(max(0, t - g), t)
            lo = np.maximum(0, idx - g + 1)
            ee = (cr[idx + 1] - cr[lo]) / (cp[idx + 1] - cp[lo])[:, :, None]  # (F, N, U)
            w = self.cfg.decay ** np.arange(len(idx) - 1, -1, -1)
            val = np.tensordot(w, ee, axes=1) / w.sum()
            mask = win == g
            out[mask] = val[mask]
        return out

    def split(self) -> np.ndarray:
        """Current split estimate, shape (N, U); uniform until history exists."""
        uniform = np.full((self.n_rus, self.n_users), 1.0 / self.n_rus)
        if self.count == 0:
            return uniform
        ee = self.smoothed()
        tot = ee.sum(axis=0)
        ok = tot > 0
        out = uniform.copy()
        out[:, ok] = ee[:, ok] / tot[ok]
        return out
