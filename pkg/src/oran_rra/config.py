"""Scenario configuration: one flat dataclass with Table-I defaults, loadable from YAML."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

SCENARIOS = ("UMa", "RMa", "InH")

# Per-scenario antenna beamwidth and site heights (m).
SCENARIO_PRESETS: dict[str, dict[str, float]] = {
    "UMa": {"hpbw_deg": 65.0, "bs_height": 25.0, "ut_height": 1.5},
    "RMa": {"hpbw_deg": 65.0, "bs_height": 35.0, "ut_height": 1.5},
    "InH": {"hpbw_deg": 40.0, "bs_height": 3.0, "ut_height": 1.0},
}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario configuration."""


def canonical_scenario(name: str) -> str:
    for s in SCENARIOS:
        if s.lower() == str(name).lower():
            return s
    raise ConfigError(f"unknown path-loss scenario {name!r}; expected one of {SCENARIOS}")


@dataclass
class ScenarioConfig:
    # topology
    scenario: str = "UMa"
    seed: int = 0
    n_small_rus: int = 3
    users_embb: int = 4
    users_urllc: int = 4
    region_radius: float = 500.0
    small_ru_offset: float = 250.0
    small_ru_coverage: float = 100.0
    user_placement: str = "clustered"  # clustered | uniform
    los_mode: str = "los"  # los | nlos | stochastic (per-link LOS drawn from the LOS probability)

    # radio
    carrier_frequency_macro: float = 3.5e9
    carrier_frequency_small: float = 3.5e9
    bandwidth_macro: float = 20e6
    bandwidth_small: float = 100e6
    subcarrier_spacing: float = 15e3
    rb_macro: int = 4
    rb_small: int = 4
    tx_power_macro_dbm: float = 40.0
    tx_power_small_dbm: float = 26.0
    antenna_gain_db: float = 15.0
    hpbw_deg: float | None = None
    front_to_back_db: float = 30.0
    bs_height: float | None = None
    ut_height: float | None = None
    noise_figure_ue_db: float = 5.0
    noise_figure_ru_db: float = 9.0
    fading: bool = True

    # grid
    minislots_per_tti: int = 7
    ofdm_symbols_per_tti: int = 14
    symbols_per_minislot: int = 2
    tti_duration: float = 1e-3
    frame_duration: float = 10e-3
    urllc_tti: float = 0.25e-3

    # traffic
    urllc_arrival_rate: float = 200.0
    packet_size_bytes: int = 32
    embb_full_buffer: bool = True
    embb_arrival_rate: float = 0.0

    # transport / compute
    midhaul_capacity: float = 1e8
    fronthaul_capacity: float = 1e9
    cu_cycles: float = 4e8
    du_cycles: float = 2.5e8
    cycles_per_packet: float = 1e5
    ru_proc_delay: float = 1e-4
    outage_delay: float = 30e-3

    # power
    static_power_ru: float = 2.0
    static_power_du: float = 4.0

    # link
    target_error: float = 1e-5
    symbols_per_minislot_per_rb: int | None = None

    # reward
    upsilon1: float = 1e3
    upsilon2: float = 1e-5
    latency_threshold: float = 15e-3
    embb_rate_floor: float = 1e6
    reward_ee_scale: float = 1e-6

    # traffic split heuristic
    split_mode: str = "heuristic"
    cqi_history: int = 32
    acf_threshold: float = 0.5
    window_min: int = 4
    window_max: int = 16
    split_decay: float = 0.9

    # episode
    episode_ttis: int = 200

    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.scenario = canonical_scenario(self.scenario)
        preset = SCENARIO_PRESETS[self.scenario]
        if self.hpbw_deg is None:
            self.hpbw_deg = preset["hpbw_deg"]
        if self.bs_height is None:
            self.bs_height = preset["bs_height"]
        if self.ut_height is None:
            self.ut_height = preset["ut_height"]
        if self.symbols_per_minislot_per_rb is None:
            self.symbols_per_minislot_per_rb = 12 * self.symbols_per_minislot
        if self.los_mode not in ("los", "nlos", "stochastic"):
            raise ConfigError(f"los_mode must be los|nlos|stochastic, got {self.los_mode!r}")
        if self.split_mode not in ("heuristic", "oracle", "uniform"):
            raise ConfigError(f"split_mode must be heuristic|oracle|uniform, got {self.split_mode!r}")

    @property
    def packet_bits(self) -> float:
        return 8.0 * self.packet_size_bytes

    @property
    def rb_bandwidth(self) -> float:
        return 12.0 * self.subcarrier_spacing

    def replace(self, **changes: Any) -> "ScenarioConfig":
        # presets re-derive unless explicitly given
        base = self.to_dict()
        if "scenario" in changes:
            for k in ("hpbw_deg", "bs_height", "ut_height"):
                if k not in changes:
                    base[k] = None
        base.update(changes)
        return ScenarioConfig(**base)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj: Any) -> str:
    """Stable short digest of a canonicalized JSON rendering."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path: str | Path | None = None, **overrides: Any) -> ScenarioConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        data.update(raw)
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
