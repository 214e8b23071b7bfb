"""WAN cost model: distance-derived bandwidth, per-site delay, straggler delay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

METERS_PER_MILE = 1609.344
DERIVED = "derived"


@dataclass(frozen=True)
class NetworkParams:
    propagation_speed_mps: float = 2.0e8  # fiber, roughly 2/3 of c
    ref_bandwidth_bps: float = 10e9
    ref_distance_miles: float = 100.0
    bandwidth_floor_bps: float = 10e6
    # "single": update counted once (formula as printed); "half": once per direction
    duplex: str = "single"
    jitter_sigma: float = 0.0

    def validate(self) -> None:
        for name in ("propagation_speed_mps", "ref_bandwidth_bps",
                     "ref_distance_miles", "bandwidth_floor_bps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"network.{name} must be > 0")
        if self.duplex not in ("single", "half"):
            raise ValueError(f"network.duplex must be 'single' or 'half', got {self.duplex!r}")
        if self.jitter_sigma < 0:
            raise ValueError("network.jitter_sigma must be >= 0")


def bandwidth_of(distance_miles: float, params: NetworkParams) -> float:
    """Bandwidth inversely proportional to distance, clamped at the floor."""
    if distance_miles <= 0:
        raise ValueError(f"distance must be positive, got {distance_miles}")
    bw = params.ref_bandwidth_bps * params.ref_distance_miles / distance_miles
    return max(bw, params.bandwidth_floor_bps)


def site_bandwidth(site, params: NetworkParams) -> float:
    if site.bandwidth_bps == DERIVED:
        return bandwidth_of(site.distance_miles, params)
    return float(site.bandwidth_bps)


def transfer_delay(distance_miles: float, bandwidth_bps: float, update_size_bytes: int,
                   params: NetworkParams) -> float:
    """Round-trip propagation plus serialization of one model update."""
    propagation = 2.0 * distance_miles * METERS_PER_MILE / params.propagation_speed_mps
    if update_size_bytes == 0:
        return propagation
    transfers = 2 if params.duplex == "half" else 1
    return propagation + transfers * 8.0 * update_size_bytes / bandwidth_bps


def comm_delay(site, update_size_bytes: int, params: NetworkParams) -> float:
    if update_size_bytes == 0:
        # bandwidth irrelevant; avoids deriving it for co-located sites
        return transfer_delay(site.distance_miles, 1.0, 0, params)
    return transfer_delay(site.distance_miles, site_bandwidth(site, params),
                          update_size_bytes, params)


def round_comm_time(sites: Iterable, update_size_bytes: int, params: NetworkParams) -> float:
    """Synchronous rounds wait for the slowest selected site."""
    delays = [comm_delay(s, update_size_bytes, params) for s in sites]
    if not delays:
        raise ValueError("round_comm_time needs at least one site")
    return max(delays)
