"""Large-scale path loss (TR 38.901 LOS/NLOS), Rayleigh block fading, noise and CQI reports."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, ScenarioConfig, canonical_scenario
from .network import NetworkTopology, ResourceGrid

SPEED_OF_LIGHT = 3.0e8
THERMAL_NOISE_DBM_HZ = -174.0

# Minimum SINR (dB) for CQI 1..15; anything lower still reports CQI 1.
CQI_THRESHOLDS_DB = -6.0 + 2.0 * np.arange(15)

# (min, max) carrier frequency in Hz for which each path-loss formula is defined.
_FREQ_RANGE = {"UMa": (0.5e9, 100e9), "RMa": (0.5e9, 30e9), "InH": (0.5e9, 100e9)}


@dataclass(frozen=True)
class PathLossScenario:
    kind: str
    carrier_frequency: float = 3.5e9
    bs_height: float = 25.0
    ut_height: float = 1.5
    los: bool = True
    building_height: float = 5.0  # RMa only
    street_width: float = 20.0  # RMa only

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", canonical_scenario(self.kind))
        lo, hi = _FREQ_RANGE[self.kind]
        if not lo <= self.carrier_frequency <= hi:
            raise ConfigError(f"{self.kind}: carrier {self.carrier_frequency:g} Hz outside [{lo:g}, {hi:g}]")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, tier: str = "macro") -> "PathLossScenario":
        fc = cfg.carrier_frequency_macro if tier == "macro" else cfg.carrier_frequency_small
        return cls(kind=cfg.scenario, carrier_frequency=fc, bs_height=float(cfg.bs_height),
                   ut_height=float(cfg.ut_height))


def _uma_los(d3: np.ndarray, d2: np.ndarray, sc: PathLossScenario) -> np.ndarray:
    fc_ghz = sc.carrier_frequency / 1e9
    h_e = 1.0
    d_bp = 4.0 * (sc.bs_height - h_e) * (sc.ut_height - h_e) * sc.carrier_frequency / SPEED_OF_LIGHT
    pl1 = 28.0 + 22.0 * np.log10(d3) + 20.0 * np.log10(fc_ghz)
    pl2 = (28.0 + 40.0 * np.log10(d3) + 20.0 * np.log10(fc_ghz)
           - 9.0 * np.log10(d_bp ** 2 + (sc.bs_height - sc.ut_height) ** 2))
    return np.where(d2 <= d_bp, pl1, pl2)


def _rma_pl1(d3: np.ndarray, fc_ghz: float, h: float) -> np.ndarray:
    return (20.0 * np.log10(40.0 * np.pi * d3 * fc_ghz / 3.0)
            + min(0.03 * h ** 1.72, 10.0) * np.log10(d3)
            - min(0.044 * h ** 1.72, 14.77)
            + 0.002 * np.log10(h) * d3)


def _rma_los(d3: np.ndarray, d2: np.ndarray, sc: PathLossScenario) -> np.ndarray:
    fc_ghz = sc.carrier_frequency / 1e9
    h = sc.building_height
    d_bp = 2.0 * np.pi * sc.bs_height * sc.ut_height * sc.carrier_frequency / SPEED_OF_LIGHT
    d3_bp = np.hypot(d_bp, sc.bs_height - sc.ut_height)
    pl1 = _rma_pl1(d3, fc_ghz, h)
    pl2 = _rma_pl1(d3_bp, fc_ghz, h) + 40.0 * np.log10(d3 / d3_bp)
    return np.where(d2 <= d_bp, pl1, pl2)


def _inh_los(d3: np.ndarray, d2: np.ndarray, sc: PathLossScenario) -> np.ndarray:
    fc_ghz = sc.carrier_frequency / 1e9
    return 32.4 + 17.3 * np.log10(d3) + 20.0 * np.log10(fc_ghz)


def _uma_nlos(d3, d2, sc):
    fc_ghz = sc.carrier_frequency / 1e9
    pl = 13.54 + 39.08 * np.log10(d3) + 20.0 * np.log10(fc_ghz) - 0.6 * (sc.ut_height - 1.5)
    return np.maximum(_uma_los(d3, d2, sc), pl)


def _rma_nlos(d3, d2, sc):
    fc_ghz = sc.carrier_frequency / 1e9
    h, w, hbs, hut = sc.building_height, sc.street_width, sc.bs_height, sc.ut_height
    pl = (161.04 - 7.1 * np.log10(w) + 7.5 * np.log10(h)
          - (24.37 - 3.7 * (h / hbs) ** 2) * np.log10(hbs)
          + (43.42 - 3.1 * np.log10(hbs)) * (np.log10(d3) - 3.0)
          + 20.0 * np.log10(fc_ghz)
          - (3.2 * np.log10(11.75 * hut) ** 2 - 4.97))
    return np.maximum(_rma_los(d3, d2, sc), pl)


def _inh_nlos(d3, d2, sc):
    fc_ghz = sc.carrier_frequency / 1e9
    pl = 38.3 * np.log10(d3) + 17.30 + 24.9 * np.log10(fc_ghz)
    return np.maximum(_inh_los(d3, d2, sc), pl)


_PL = {"UMa": _uma_los, "RMa": _rma_los, "InH": _inh_los}
_PL_NLOS = {"UMa": _uma_nlos, "RMa": _rma_nlos, "InH": _inh_nlos}


def los_probability(kind: str, distance_2d):
    """Line-of-sight probability versus ground distance (UMa for UT heights <= 13 m, InH mixed office)."""
    d = np.maximum(np.asarray(distance_2d, dtype=float), 1e-9)
    kind = canonical_scenario(kind)
    if kind == "UMa":
        p = np.where(d <= 18.0, 1.0, 18.0 / d + np.exp(-d / 63.0) * (1.0 - 18.0 / d))
    elif kind == "RMa":
        p = np.where(d <= 10.0, 1.0, np.exp(-(d - 10.0) / 1000.0))
    else:
        p = np.where(d <= 1.2, 1.0,
                     np.where(d < 6.5, np.exp(-(d - 1.2) / 4.7), 0.32 * np.exp(-(d - 6.5) / 32.6)))
    return float(p) if p.ndim == 0 else p


def path_loss_db(scenario: PathLossScenario, distance_3d):
    """Path loss in dB at the given 3D distance(s), in metres (LOS or NLOS per ``scenario.los``).

    The breakpoint is tested on the ground distance, which keeps the
    two-slope UMa/RMa curves continuous.
    """
    d3 = np.asarray(distance_3d, dtype=float)
    if np.any(d3 < 1.0):
        raise ValueError("distance below the 1 m validity floor")
    dh = abs(scenario.bs_height - scenario.ut_height)
    d2 = np.sqrt(np.maximum(d3 ** 2 - dh ** 2, 0.0))
    out = (_PL if scenario.los else _PL_NLOS)[scenario.kind](d3, d2, scenario)
    return float(out) if out.ndim == 0 else out


def cosine_antenna_gain_db(offset_deg, max_gain_db: float, hpbw_deg: float, floor_db: float = 30.0):
    """Cosine-power pattern cos^n(theta) with n set by the half-power beamwidth."""
    theta = np.deg2rad(np.abs((np.asarray(offset_deg, dtype=float) + 180.0) % 360.0 - 180.0))
    n = np.log(0.5) / np.log(np.cos(np.deg2rad(hpbw_deg) / 2.0))
    with np.errstate(divide="ignore"):
        rel = np.where(theta < np.pi / 2, n * 10.0 * np.log10(np.maximum(np.cos(theta), 1e-300)), -np.inf)
    return max_gain_db + np.maximum(rel, -floor_db)


def noise_power_w(bandwidth_hz: float, noise_figure_db: float) -> float:
    dbm = THERMAL_NOISE_DBM_HZ + 10.0 * np.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


def link_los_states(topo: NetworkTopology, positions: np.ndarray, cfg: ScenarioConfig, stream: int = 0) -> np.ndarray:
    """Boolean LOS state per (user, RU) link, fixed for the topology."""
    d2 = np.stack([np.linalg.norm(positions - np.asarray(ru.position), axis=1) for ru in topo.rus], axis=1)
    if cfg.los_mode == "los":
        return np.ones(d2.shape, dtype=bool)
    if cfg.los_mode == "nlos":
        return np.zeros(d2.shape, dtype=bool)
    u = np.random.default_rng([cfg.seed, 0x105, stream]).random(d2.shape)
    return u < los_probability(cfg.scenario, d2)


def large_scale_gain(topo: NetworkTopology, positions: np.ndarray, cfg: ScenarioConfig, stream: int = 0) -> np.ndarray:
    """Linear antenna x path gain, shape (users, RUs)."""
    los = link_los_states(topo, positions, cfg, stream)
    out = np.empty((len(positions), topo.n_rus))
    for n, ru in enumerate(topo.rus):
        tier = "macro" if ru.kind == "macro" else "small"
        sc = PathLossScenario.from_config(cfg, tier)
        delta = positions - np.asarray(ru.position)
        d2 = np.linalg.norm(delta, axis=1)
        d3 = np.maximum(np.hypot(d2, sc.bs_height - sc.ut_height), 1.0)
        bearing = np.rad2deg(np.arctan2(delta[:, 1], delta[:, 0]))
        offsets = np.stack([bearing - b for b in ru.boresights_deg])
        gains = cosine_antenna_gain_db(offsets, ru.antenna_gain_db, ru.hpbw_deg, cfg.front_to_back_db)
        g_ant = gains.max(axis=0)
        pl = np.where(los[:, n], path_loss_db(sc, d3), path_loss_db(replace(sc, los=False), d3))
        out[:, n] = 10.0 ** ((g_ant - pl) / 10.0)
    return out


@dataclass(frozen=True)
class ChannelState:
    gain_embb: np.ndarray  # (U_e, N, M) linear
    gain_urllc: np.ndarray  # (U_ur, N, M) linear
    noise_power: float
    tti_index: int

    @property
    def gain(self) -> np.ndarray:
        return np.concatenate([self.gain_embb, self.gain_urllc], axis=0)


def rayleigh_power(rng: np.random.Generator, shape) -> np.ndarray:
    """|h|^2 for unit-power circularly-symmetric complex Gaussian h."""
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.abs(h) ** 2


def draw_channel(
    topo: NetworkTopology,
    grid: ResourceGrid,
    cfg: ScenarioConfig,
    tti_index: int,
    rng_seed: int,
    path_gain: tuple[np.ndarray, np.ndarray] | None = None,
) -> ChannelState:
    """Per-TTI channel: deterministic path/antenna gain times i.i.d. Rayleigh |h|^2 per (user, RU, RB)."""
    if path_gain is None:
        path_gain = (large_scale_gain(topo, topo.embb_positions, cfg),
                     large_scale_gain(topo, topo.urllc_positions, cfg, stream=1))
    pe, pu = path_gain
    m = grid.rb_count
    ge = np.repeat(pe[:, :, None], m, axis=2)
    gu = np.repeat(pu[:, :, None], m, axis=2)
    if cfg.fading:
        rng = np.random.default_rng([int(rng_seed), int(tti_index), 0xC4A])
        ge = ge * rayleigh_power(rng, ge.shape)
        gu = gu * rayleigh_power(rng, gu.shape)
    sigma2 = noise_power_w(grid.rb_bandwidth, cfg.noise_figure_ue_db)
    return ChannelState(gain_embb=ge, gain_urllc=gu, noise_power=sigma2, tti_index=int(tti_index))


def cqi_from_sinr(sinr):
    """Map linear SINR to CQI 1..15 with 2 dB steps starting at -6 dB."""
    z = np.asarray(sinr, dtype=float)
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ValueError("SINR must be non-negative")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(z)
    out = np.maximum(np.searchsorted(CQI_THRESHOLDS_DB, db, side="right"), 1)
    return int(out) if out.ndim == 0 else out
