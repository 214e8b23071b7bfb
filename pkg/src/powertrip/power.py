"""Site power availability and power-capped throughput."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Sequence, Tuple


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class PowerTrace:
    """Utilized power as a fraction of capacity, sampled at fixed spacing.

    Lookups are zero-order hold: the value at ``t`` is the last sample at or
    before ``t``; queries before the first sample return the first sample.
    """

    trace_id: str
    samples: Tuple[Tuple[int, float], ...]
    granularity_s: int = 300
    _times: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.samples:
            raise TraceError(f"trace {self.trace_id!r} has no samples")
        times = tuple(int(t) for t, _ in self.samples)
        for a, b in zip(times, times[1:]):
            if b <= a:
                raise TraceError(f"trace {self.trace_id!r}: timestamps not strictly increasing at t={b}")
        for t, u in self.samples:
            if not 0.0 <= u <= 1.0:
                raise TraceError(f"trace {self.trace_id!r}: utilization {u} at t={t} outside [0,1]")
        if self.granularity_s <= 0:
            raise TraceError("granularity_s must be positive")
        object.__setattr__(self, "_times", times)

    @property
    def duration_s(self) -> int:
        # span covered including the hold interval of the final sample
        return self._times[-1] - self._times[0] + self.granularity_s

    def utilization_at(self, t: float, wrap: bool = False) -> float:
        if wrap:
            t = self._times[0] + (t - self._times[0]) % self.duration_s
        i = bisect.bisect_right(self._times, t) - 1
        return self.samples[max(i, 0)][1]


@dataclass(frozen=True)
class PowerTraceTable(Mapping):
    traces: Dict[str, PowerTrace] = field(default_factory=dict)

    def __getitem__(self, trace_id: str) -> PowerTrace:
        return self.traces[trace_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self.traces)

    def __len__(self) -> int:
        return len(self.traces)


@dataclass(frozen=True)
class PowerSnapshot:
    available_watts: float
    effective_gpus: int
    throughput_wups: float


def available_power(site, traces: Mapping[str, PowerTrace] | None, t: float,
                    wrap: bool = False) -> float:
    if site.static_fraction is not None:
        return site.power_cap_watts * site.static_fraction
    if traces is None or site.trace_ref not in traces:
        raise TraceError(f"site {site.site_id!r}: unresolved trace_ref {site.trace_ref!r}")
    u = traces[site.trace_ref].utilization_at(t, wrap=wrap)
    return site.power_cap_watts * (1.0 - u)


def effective_gpus(site, available_watts: float) -> int:
    return min(site.gpu_count, math.floor(available_watts / site.gpu_power_watts))


def site_throughput(site, traces: Mapping[str, PowerTrace] | None, t: float,
                    wrap: bool = False) -> PowerSnapshot:
    watts = available_power(site, traces, t, wrap=wrap)
    n_eff = effective_gpus(site, watts)
    if site.static_fraction is not None:
        # fractional slowdown model: no per-GPU quantization
        throughput = site.gpu_count * site.gpu_throughput_wups * site.static_fraction
    else:
        throughput = n_eff * site.gpu_throughput_wups
    return PowerSnapshot(watts, n_eff, throughput)


def scale_availability(table: Mapping[str, PowerTrace], factor: float) -> PowerTraceTable:
    """Multiply every trace's spare capacity (1 - utilization) by ``factor``."""
    if not 0.0 <= factor <= 1.0:
        raise ValueError("factor must lie in [0, 1]")
    out = {}
    for tid, tr in table.items():
        samples = tuple((t, 1.0 - factor * (1.0 - u)) for t, u in tr.samples)
        out[tid] = PowerTrace(tid, samples, tr.granularity_s)
    return PowerTraceTable(out)


def fleet_snapshots(sites: Sequence, traces, t: float, wrap: bool = False) -> Dict[str, PowerSnapshot]:
    return {s.site_id: site_throughput(s, traces, t, wrap=wrap) for s in sites}
