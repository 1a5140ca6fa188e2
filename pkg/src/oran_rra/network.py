"""Topology, resource-grid geometry, traffic generation and the joint decision object."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ScenarioConfig


class InfeasibleScenario(ValueError):
    """Aggregate URLLC load would make the CU/DU queues unstable."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class RuNode:
    kind: str  # "macro" | "small"
    position: tuple[float, float]
    carrier_frequency: float
    bandwidth: float
    subband: int  # 0 -> macro set, 1 -> small-cell set
    tx_power_dbm: float
    antenna_gain_db: float
    hpbw_deg: float
    boresights_deg: tuple[float, ...]
    coverage_radius: float

    @property
    def max_power(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)


@dataclass(frozen=True)
class ResourceGrid:
    rb_macro: int
    rb_small: int
    minislots_per_tti: int = 7
    ofdm_symbols_per_tti: int = 14
    symbols_per_minislot: int = 2
    subcarrier_spacing: float = 15e3
    tti_duration: float = 1e-3
    frame_duration: float = 10e-3
    symbols_per_minislot_per_rb: int = 24

    def __post_init__(self) -> None:
        if self.minislots_per_tti * self.symbols_per_minislot != self.ofdm_symbols_per_tti:
            raise ConfigError("minislots_per_tti * symbols_per_minislot must equal ofdm_symbols_per_tti")
        if self.rb_macro < 1 or self.rb_small < 1:
            raise ConfigError("each sub-band set needs at least one RB")

    @property
    def rb_count(self) -> int:
        return self.rb_macro + self.rb_small

    @property
    def rb_bandwidth(self) -> float:
        return 12.0 * self.subcarrier_spacing

    def subband_rbs(self, subband: int) -> np.ndarray:
        if subband == 0:
            return np.arange(self.rb_macro)
        return np.arange(self.rb_macro, self.rb_count)

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ResourceGrid":
        return cls(
            rb_macro=cfg.rb_macro,
            rb_small=cfg.rb_small,
            minislots_per_tti=cfg.minislots_per_tti,
            ofdm_symbols_per_tti=cfg.ofdm_symbols_per_tti,
            symbols_per_minislot=cfg.symbols_per_minislot,
            subcarrier_spacing=cfg.subcarrier_spacing,
            tti_duration=cfg.tti_duration,
            frame_duration=cfg.frame_duration,
            symbols_per_minislot_per_rb=int(cfg.symbols_per_minislot_per_rb),
        )


@dataclass(frozen=True)
class NetworkTopology:
    rus: tuple[RuNode, ...]
    embb_positions: np.ndarray  # (U_e, 2)
    urllc_positions: np.ndarray  # (U_ur, 2)
    region_radius: float
    midhaul_capacity: float
    fronthaul_capacity: np.ndarray  # (N,)
    cu_cycles: float
    du_cycles: float
    cycles_per_packet: float
    static_power_ru: float
    static_power_du: float
    du_count: int = 1

    @property
    def n_rus(self) -> int:
        return len(self.rus)

    @property
    def n_embb(self) -> int:
        return len(self.embb_positions)

    @property
    def n_urllc(self) -> int:
        return len(self.urllc_positions)

    @property
    def cu_service_rate(self) -> float:
        return self.cu_cycles / self.cycles_per_packet

    @property
    def du_service_rate(self) -> float:
        return self.du_cycles / self.cycles_per_packet

    @property
    def max_power(self) -> np.ndarray:
        return np.array([ru.max_power for ru in self.rus])

    @property
    def ru_positions(self) -> np.ndarray:
        return np.array([ru.position for ru in self.rus], dtype=float)

    def nearest_ru(self, positions: np.ndarray) -> np.ndarray:
        """Index of the closest small RU within coverage, else the macro (index 0)."""
        d = np.linalg.norm(positions[:, None, :] - self.ru_positions[None, :, :], axis=-1)
        out = np.zeros(len(positions), dtype=int)
        for i in range(len(positions)):
            best = None
            for n, ru in enumerate(self.rus):
                if ru.kind == "small" and d[i, n] <= ru.coverage_radius:
                    if best is None or d[i, n] < d[i, best]:
                        best = n
            out[i] = 0 if best is None else best
        return out

    def users_per_ru(self) -> tuple[np.ndarray, np.ndarray]:
        e = np.bincount(self.nearest_ru(self.embb_positions), minlength=self.n_rus)
        u = np.bincount(self.nearest_ru(self.urllc_positions), minlength=self.n_rus)
        return e, u


def _uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def _clustered(rng: np.random.Generator, n: int, rus: list[RuNode], radius: float) -> np.ndarray:
    """User i lands in the coverage disk of RU i mod N (the macro's disk is the whole region)."""
    out = np.empty((n, 2))
    for i in range(n):
        ru = rus[i % len(rus)]
        r = radius if ru.kind == "macro" else ru.coverage_radius
        out[i] = np.asarray(ru.position) + _uniform_disk(rng, 1, r)[0]
    return out


def build_topology(cfg: ScenarioConfig, seed: int | None = None) -> NetworkTopology:
    """One macro RU at the origin plus one small RU per sector center; users clustered per RU or uniform."""
    if cfg.n_small_rus < 1:
        raise ConfigError("at least one small RU is required")
    if cfg.users_embb < 1 or cfg.users_urllc < 1:
        raise ConfigError("user counts must be positive")
    for name in ("midhaul_capacity", "fronthaul_capacity", "cu_cycles", "du_cycles", "cycles_per_packet"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    sectors = cfg.n_small_rus
    boresights = tuple(360.0 * s / sectors for s in range(sectors))
    macro = RuNode(
        kind="macro",
        position=(0.0, 0.0),
        carrier_frequency=cfg.carrier_frequency_macro,
        bandwidth=cfg.bandwidth_macro,
        subband=0,
        tx_power_dbm=cfg.tx_power_macro_dbm,
        antenna_gain_db=cfg.antenna_gain_db,
        hpbw_deg=float(cfg.hpbw_deg),
        boresights_deg=boresights,
        coverage_radius=cfg.region_radius,
    )
    rus = [macro]
    for b in boresights:
        a = np.deg2rad(b)
        rus.append(
            RuNode(
                kind="small",
                position=(cfg.small_ru_offset * np.cos(a), cfg.small_ru_offset * np.sin(a)),
                carrier_frequency=cfg.carrier_frequency_small,
                bandwidth=cfg.bandwidth_small,
                subband=1,
                tx_power_dbm=cfg.tx_power_small_dbm,
                antenna_gain_db=cfg.antenna_gain_db,
                hpbw_deg=float(cfg.hpbw_deg),
                boresights_deg=(b,),
                coverage_radius=cfg.small_ru_coverage,
            )
        )
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    if cfg.user_placement == "uniform":
        embb = _uniform_disk(rng, cfg.users_embb, cfg.region_radius)
        urllc = _uniform_disk(rng, cfg.users_urllc, cfg.region_radius)
    elif cfg.user_placement == "clustered":
        embb = _clustered(rng, cfg.users_embb, rus, cfg.region_radius)
        urllc = _clustered(rng, cfg.users_urllc, rus, cfg.region_radius)
    else:
        raise ConfigError(f"unknown user placement {cfg.user_placement!r}")
    return NetworkTopology(
        rus=tuple(rus),
        embb_positions=embb,
        urllc_positions=urllc,
        region_radius=cfg.region_radius,
        midhaul_capacity=cfg.midhaul_capacity,
        fronthaul_capacity=np.full(len(rus), float(cfg.fronthaul_capacity)),
        cu_cycles=cfg.cu_cycles,
        du_cycles=cfg.du_cycles,
        cycles_per_packet=cfg.cycles_per_packet,
        static_power_ru=cfg.static_power_ru,
        static_power_du=cfg.static_power_du,
    )


@dataclass(frozen=True)
class TrafficModel:
    urllc_rates: np.ndarray  # packets/s per URLLC user
    packet_size_bytes: int = 32
    tti_duration: float = 1e-3
    embb_full_buffer: bool = True
    embb_rate: float = 0.0

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.urllc_rates) < 0):
            raise ValueError("arrival rates must be non-negative")
        if self.packet_size_bytes <= 0:
            raise ValueError("packet size must be positive")

    @property
    def packet_bits(self) -> float:
        return 8.0 * self.packet_size_bytes

    @property
    def aggregate_rate(self) -> float:
        """Mean aggregate URLLC arrival rate (packets/s) seen by the CU."""
        return float(np.sum(self.urllc_rates))


def build_traffic(cfg: ScenarioConfig, topo: NetworkTopology, rate: float | None = None) -> TrafficModel:
    rate = cfg.urllc_arrival_rate if rate is None else rate
    traffic = TrafficModel(
        urllc_rates=np.full(topo.n_urllc, float(rate)),
        packet_size_bytes=cfg.packet_size_bytes,
        tti_duration=cfg.tti_duration,
        embb_full_buffer=cfg.embb_full_buffer,
        embb_rate=cfg.embb_arrival_rate,
    )
    bound = min(topo.cu_service_rate, topo.du_service_rate)
    if traffic.aggregate_rate >= bound:
        raise InfeasibleScenario(
            f"aggregate URLLC rate {traffic.aggregate_rate:g} pkt/s >= service rate {bound:g} pkt/s"
        )
    return traffic


def sample_arrivals(traffic: TrafficModel, tti_index: int, rng_seed: int) -> np.ndarray:
    """Poisson packet counts for one TTI; a pure function of (seed, tti_index)."""
    rates = np.asarray(traffic.urllc_rates, dtype=float)
    if np.any(rates < 0):
        raise ValueError("arrival rates must be non-negative")
    rng = np.random.default_rng([int(rng_seed), int(tti_index), 0xA11])
    return rng.poisson(rates * traffic.tti_duration)


@dataclass
class ResourceGridDecision:
    """Joint per-TTI decision; index order follows (user, rb, ru) for theta/power,
    (rb, minislot, ru, user) for phi and (ru, user) for split."""

    theta: np.ndarray  # (U_e, M, N) binary
    power: np.ndarray  # (U_e, M, N) watts
    phi: np.ndarray  # (M, L, N, U_ur) binary
    split: np.ndarray  # (N, U_ur)

    @classmethod
    def zeros(cls, topo: NetworkTopology, grid: ResourceGrid) -> "ResourceGridDecision":
        n, m, l = topo.n_rus, grid.rb_count, grid.minislots_per_tti
        split = np.zeros((n, topo.n_urllc))
        split[0] = 1.0
        return cls(
            theta=np.zeros((topo.n_embb, m, n)),
            power=np.zeros((topo.n_embb, m, n)),
            phi=np.zeros((m, l, n, topo.n_urllc)),
            split=split,
        )

    def rb_power(self) -> np.ndarray:
        """Transmit power per (RU, RB), shape (N, M)."""
        return self.power.sum(axis=0).T


@dataclass(frozen=True)
class Violation:
    code: str
    index: tuple[int, ...]
    value: float


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __len__(self) -> int:
        return len(self.violations)


def _is_binary(a: np.ndarray) -> np.ndarray:
    return (a == 0) | (a == 1)


def validate_decision(
    d: ResourceGridDecision,
    topo: NetworkTopology,
    grid: ResourceGrid,
    tol: float = 1e-9,
) -> ValidationReport:
    """List every structural invariant the decision breaks (C1-C3, C6-C9, band mask, split simplex)."""
    n, m, l = topo.n_rus, grid.rb_count, grid.minislots_per_tti
    ue, uu = topo.n_embb, topo.n_urllc
    expected = {
        "theta": (ue, m, n),
        "power": (ue, m, n),
        "phi": (m, l, n, uu),
        "split": (n, uu),
    }
    for name, shape in expected.items():
        got = np.shape(getattr(d, name))
        if got != shape:
            raise ValueError(f"{name} has shape {got}, expected {shape}")

    theta = np.asarray(d.theta, dtype=float)
    power = np.asarray(d.power, dtype=float)
    phi = np.asarray(d.phi, dtype=float)
    split = np.asarray(d.split, dtype=float)
    out: list[Violation] = []

    def add(code: str, mask: np.ndarray, values: np.ndarray) -> None:
        for idx in zip(*np.nonzero(mask)):
            out.append(Violation(code, tuple(int(i) for i in idx), float(values[idx])))

    c1 = theta.sum(axis=0)  # (M, N)
    add("C1", c1 > 1 + tol, c1)
    c2 = phi.sum(axis=3)  # (M, L, N)
    add("C2", c2 > 1 + tol, c2)
    c3 = phi.sum(axis=1)  # (M, N, U)
    add("C3", c3 > l + tol, c3)
    c6 = power.sum(axis=(0, 1))  # (N,)
    add("C6", c6 > topo.max_power * (1 + tol), c6)
    add("C7", power < 0, power)
    add("C8", ~_is_binary(theta), theta)
    add("C9", ~_is_binary(phi), phi)

    band = np.zeros((m, n), dtype=bool)
    for k, ru in enumerate(topo.rus):
        band[grid.subband_rbs(ru.subband), k] = True
    off = ~band
    add("band", (np.abs(theta).sum(axis=0) > 0) & off, theta.sum(axis=0))
    add("band", (np.abs(power).sum(axis=0) > 0) & off, power.sum(axis=0))
    phi_rb = np.abs(phi).sum(axis=(1, 3))
    add("band", (phi_rb > 0) & off, phi_rb)

    add("split_negative", split < -tol, split)
    rows = split.sum(axis=0)
    add("split_simplex", np.abs(rows - 1.0) > 1e-9, rows)
    return ValidationReport(out)
