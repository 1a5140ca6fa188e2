"""URLLC end-to-end latency chain: M/M/1 processing at CU/DU plus transport and access delays."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np


class QueueUnstable(ValueError):
    """Arrival rate reaches or exceeds the service rate."""


class InfeasibleRoute(ValueError):
    """Traffic is routed over an RU that offers the user zero rate."""


@dataclass(frozen=True)
class LatencyBreakdown:
    cu_proc: float
    du_proc: float
    mh_tx: float
    fh_tx: float
    access_tx: float
    ru_proc: float

    @property
    def total(self) -> float:
        return self.cu_proc + self.du_proc + self.mh_tx + self.fh_tx + self.access_tx + self.ru_proc

    def as_dict(self) -> dict[str, float]:
        return {
            "cu_proc": self.cu_proc,
            "du_proc": self.du_proc,
            "mh_tx": self.mh_tx,
            "fh_tx": self.fh_tx,
            "access_tx": self.access_tx,
            "ru_proc": self.ru_proc,
            "total": self.total,
        }


def mm1_processing_delay(service_rate: float, arrival_rate: float) -> float:
    """Mean sojourn time 1/(xi - delta) of a stable M/M/1 queue."""
    if arrival_rate < 0:
        raise ValueError("arrival rate must be non-negative")
    if arrival_rate >= service_rate:
        raise QueueUnstable(f"arrival rate {arrival_rate:g} >= service rate {service_rate:g}")
    return 1.0 / (service_rate - arrival_rate)


def midhaul_delay(arrival_rate: float, packet_bits: float, capacity: float) -> float:
    if capacity <= 0:
        raise ValueError("midhaul capacity must be positive")
    return arrival_rate * packet_bits / capacity


def fronthaul_delay(split, rates, packet_bits: float, capacities) -> float:
    """Slowest fronthaul link: max_n sum_u split[n,u]*rate_u*bits / capacity_n."""
    split = np.atleast_2d(np.asarray(split, dtype=float))
    caps = np.broadcast_to(np.asarray(capacities, dtype=float), (split.shape[0],))
    if np.any(caps <= 0):
        raise ValueError("fronthaul capacities must be positive")
    load = split @ np.asarray(rates, dtype=float) * packet_bits
    return float(np.max(load / caps))


def access_delay(split_u, rate_u: float, packet_bits: float, urllc_rates_u, tti_duration: float = 1e-3) -> float:
    """RU-to-user delay of one URLLC user, max over the routes that carry its traffic.

    split*rate*bits/r is the offered-load to service-rate ratio; it is turned
    into seconds by multiplying with the TTI duration.
    """
    split_u = np.asarray(split_u, dtype=float)
    r = np.asarray(urllc_rates_u, dtype=float)
    load = split_u * rate_u * packet_bits
    used = (split_u > 0) & (load > 0)
    if not np.any(used):
        return 0.0
    if np.any(r[used] <= 0):
        raise InfeasibleRoute("traffic routed over an RU with zero URLLC rate")
    return float(np.max(load[used] / r[used]) * tti_duration)


def e2e_latency(cu_proc: float, du_proc: float, mh_tx: float, fh_tx: float, access_tx: float,
                ru_proc: float) -> LatencyBreakdown:
    parts = (cu_proc, du_proc, mh_tx, fh_tx, access_tx, ru_proc)
    if any(p < 0 for p in parts):
        raise ValueError("latency components must be non-negative")
    return LatencyBreakdown(*parts)


def simulate_mm1(service_rate: float, arrival_rate: float, n_packets: int, rng_seed: int) -> float:
    """Event-driven FIFO single-server queue; returns the empirical mean sojourn time."""
    if arrival_rate >= service_rate:
        raise QueueUnstable(f"arrival rate {arrival_rate:g} >= service rate {service_rate:g}")
    rng = np.random.default_rng(rng_seed)
    if arrival_rate <= 0:
        # no queueing: every packet sees an idle server
        return float(np.mean(rng.exponential(1.0 / service_rate, n_packets)))
    inter = rng.exponential(1.0 / arrival_rate, n_packets)
    service = rng.exponential(1.0 / service_rate, n_packets)
    # event list: (time, kind, packet id); kind 0 = departure, 1 = arrival
    events: list[tuple[float, int, int]] = [(inter[0], 1, 0)]
    queue: deque[int] = deque()
    arrived = np.empty(n_packets)
    total_sojourn = 0.0
    busy = False
    next_id = 1
    while events:
        t, kind, pid = heapq.heappop(events)
        if kind == 1:
            arrived[pid] = t
            if next_id < n_packets:
                heapq.heappush(events, (t + inter[next_id], 1, next_id))
                next_id += 1
            if busy:
                queue.append(pid)
            else:
                busy = True
                heapq.heappush(events, (t + service[pid], 0, pid))
        else:
            total_sojourn += t - arrived[pid]
            if queue:
                nxt = queue.popleft()
                heapq.heappush(events, (t + service[nxt], 0, nxt))
            else:
                busy = False
    return total_sojourn / n_packets
