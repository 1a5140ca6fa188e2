"""Energy efficiency, constraint evaluation (C1-C11) and the penalized per-TTI reward."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import NetworkTopology, ResourceGrid, ResourceGridDecision

HARD = ("C1", "C2", "C3", "C6", "C7", "C8", "C9")
SOFT = ("C4", "C5", "C10", "C11")


@dataclass(frozen=True)
class RewardWeights:
    upsilon1: float = 1e3  # per second of latency excess
    upsilon2: float = 1e-5  # per bit/s of eMBB shortfall
    latency_threshold: float = 15e-3
    embb_rate_floor: float = 1e6

    def __post_init__(self) -> None:
        if self.upsilon1 < 0 or self.upsilon2 < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.latency_threshold <= 0:
            raise ValueError("latency threshold must be positive")


def energy_efficiency(embb_rates, urllc_rates, tx_powers, n_rus: int, static_power_ru: float,
                      static_power_du: float) -> float:
    """Delivered bits per joule: sum of rates over transmit plus static RU/DU power."""
    denom = float(np.sum(tx_powers)) + n_rus * static_power_ru + static_power_du
    if denom <= 0:
        raise ValueError("total power must be positive")
    return float(np.sum(embb_rates) + np.sum(urllc_rates)) / denom


def reward(ee: float, latencies, embb_rate_sum, weights: RewardWeights) -> float:
    """Energy efficiency minus latency-excess and eMBB-shortfall penalties.

    ``embb_rate_sum`` may be a scalar or one aggregate per RU; shortfalls are summed.
    """
    lat = np.asarray(latencies, dtype=float)
    excess = np.maximum(0.0, lat - weights.latency_threshold).sum()
    shortfall = np.maximum(0.0, weights.embb_rate_floor - np.asarray(embb_rate_sum, dtype=float)).sum()
    return float(ee - weights.upsilon1 * excess - weights.upsilon2 * shortfall)


@dataclass
class ConstraintStatus:
    name: str
    satisfied: bool
    margin: float  # > 0 means violated by that amount (soft) or count of breaches (hard)
    hard: bool
    count: int = 0


@dataclass
class ConstraintReport:
    items: dict[str, ConstraintStatus] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ConstraintStatus:
        return self.items[name]

    @property
    def all_satisfied(self) -> bool:
        return all(s.satisfied for s in self.items.values())

    def violated(self) -> list[str]:
        return [k for k, s in self.items.items() if not s.satisfied]

    def hard_violations(self) -> int:
        return sum(s.count for s in self.items.values() if s.hard)

    def to_json(self) -> str:
        return json.dumps({k: asdict(v) for k, v in self.items.items()}, sort_keys=True)


def _hard(name: str, breaches: np.ndarray) -> ConstraintStatus:
    c = int(np.count_nonzero(breaches))
    return ConstraintStatus(name, c == 0, float(c), True, c)


def _soft(name: str, excess: np.ndarray, tol: float = 0.0) -> ConstraintStatus:
    excess = np.atleast_1d(np.asarray(excess, dtype=float))
    worst = float(np.max(excess)) if excess.size else 0.0
    c = int(np.count_nonzero(excess > tol))
    return ConstraintStatus(name, c == 0, worst, False, c)


def check_constraints(
    decision: ResourceGridDecision,
    embb_rates: np.ndarray,
    urllc_rates: np.ndarray,
    latencies: np.ndarray,
    topo: NetworkTopology,
    grid: ResourceGrid,
    weights: RewardWeights,
    arrival_rates: np.ndarray,
    packet_bits: float,
    tol: float = 1e-9,
) -> ConstraintReport:
    """Evaluate C1-C11 for one TTI.

    embb_rates: (N, U_e) throughput per (RU, eMBB user); urllc_rates: (N, U_ur);
    latencies: (U_ur,) end-to-end seconds; arrival_rates: (U_ur,) packets/s.
    """
    theta = np.asarray(decision.theta, dtype=float)
    phi = np.asarray(decision.phi, dtype=float)
    power = np.asarray(decision.power, dtype=float)
    split = np.asarray(decision.split, dtype=float)
    L = grid.minislots_per_tti
    M = grid.rb_count
    items = {
        "C1": _hard("C1", theta.sum(axis=0) > 1 + tol),
        "C2": _hard("C2", phi.sum(axis=3) > 1 + tol),
        "C3": _hard("C3", phi.sum(axis=1) > L + tol),
        "C4": _soft("C4", np.asarray(latencies, dtype=float) - weights.latency_threshold),
        "C5": _soft("C5", weights.embb_rate_floor - np.asarray(embb_rates).sum(axis=1)),
        "C6": _hard("C6", power.sum(axis=(0, 1)) > topo.max_power * (1 + tol)),
        "C7": _hard("C7", power < 0),
        "C8": _hard("C8", (theta != 0) & (theta != 1)),
        "C9": _hard("C9", (phi != 0) & (phi != 1)),
        "C10": _soft("C10", np.asarray(embb_rates).sum(axis=1) + np.asarray(urllc_rates).sum(axis=1)
                     - topo.fronthaul_capacity),
        "C11": _soft("C11", split * np.asarray(arrival_rates)[None, :] * packet_bits / M
                     - np.asarray(urllc_rates), tol),
    }
    return ConstraintReport(items)
