"""Experiment scenarios: site fleet, workload, model knobs, traces.

A scenario is one YAML document with top-level keys ``sites``, ``workload``,
``network``, ``curve``, ``policy``, ``seed`` and an optional ``traces`` path
(resolved relative to the document) for trace-backed sites.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .learning import LearningCurveParams
from .network import DERIVED, NetworkParams
from .policies import PolicyConfig
from .power import PowerTrace, PowerTraceTable, TraceError

FRACTION_RANGE = (0.1, 1.0)
TRACE_HEADER = ["trace_id", "timestamp_s", "utilization_fraction"]


class ScenarioError(ValueError):
    """A scenario document violates an invariant."""


class ScenarioParseError(ScenarioError):
    """A scenario document is not well-formed."""


@dataclass(frozen=True)
class SiteSpec:
    site_id: str
    distance_miles: float
    power_cap_watts: float
    gpu_count: int
    gpu_power_watts: float = 300.0
    gpu_throughput_wups: float = 1.0
    bandwidth_bps: Union[float, str] = DERIVED
    static_fraction: Optional[float] = None
    trace_ref: Optional[str] = None

    @property
    def full_throughput(self) -> float:
        return self.gpu_count * self.gpu_throughput_wups

    def validate(self) -> None:
        sid = self.site_id
        if not isinstance(sid, str) or not sid:
            raise ScenarioError(f"site_id must be a non-empty string, got {sid!r}")
        if not self.distance_miles >= 0:
            raise ScenarioError(f"site {sid!r}: distance_miles must be >= 0")
        if self.bandwidth_bps != DERIVED and not (
                isinstance(self.bandwidth_bps, (int, float)) and self.bandwidth_bps > 0):
            raise ScenarioError(f"site {sid!r}: bandwidth_bps must be > 0 or 'derived'")
        if self.bandwidth_bps == DERIVED and self.distance_miles <= 0:
            raise ScenarioError(f"site {sid!r}: derived bandwidth needs distance_miles > 0")
        if not self.power_cap_watts > 0:
            raise ScenarioError(f"site {sid!r}: power_cap_watts must be > 0")
        if not (isinstance(self.gpu_count, int) and self.gpu_count >= 0):
            raise ScenarioError(f"site {sid!r}: gpu_count must be an integer >= 0")
        if not self.gpu_power_watts > 0:
            raise ScenarioError(f"site {sid!r}: gpu_power_watts must be > 0")
        if not self.gpu_throughput_wups > 0:
            raise ScenarioError(f"site {sid!r}: gpu_throughput_wups must be > 0")
        if (self.static_fraction is None) == (self.trace_ref is None):
            raise ScenarioError(
                f"site {sid!r}: exactly one of static_fraction / trace_ref must be set")
        if self.static_fraction is not None:
            lo, hi = FRACTION_RANGE
            if not lo <= self.static_fraction <= hi:
                raise ScenarioError(
                    f"site {sid!r}: static_fraction {self.static_fraction} out of [0.1,1.0]")


@dataclass(frozen=True)
class WorkloadSpec:
    update_size_bytes: int = 1_500_000_000
    round_work_units: float = 1000.0
    local_epochs: int = 1
    target_accuracy: float = 0.45
    max_rounds: int = 400

    def validate(self) -> None:
        if not (isinstance(self.update_size_bytes, int) and self.update_size_bytes > 0):
            raise ScenarioError("workload.update_size_bytes must be an integer > 0")
        if not self.round_work_units > 0:
            raise ScenarioError("workload.round_work_units must be > 0")
        if not (isinstance(self.local_epochs, int) and self.local_epochs >= 1):
            raise ScenarioError("workload.local_epochs must be an integer >= 1")
        if not 0.0 < self.target_accuracy < 1.0:
            raise ScenarioError("workload.target_accuracy must lie in (0, 1)")
        if not (isinstance(self.max_rounds, int) and self.max_rounds >= 1):
            raise ScenarioError("workload.max_rounds must be an integer >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    sites: Tuple[SiteSpec, ...]
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    network: NetworkParams = field(default_factory=NetworkParams)
    curve: LearningCurveParams = field(default_factory=LearningCurveParams)
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig("powertrip"))
    seed: int = 0
    traces: Optional[str] = None

    @property
    def site_ids(self) -> List[str]:
        return [s.site_id for s in self.sites]

    def site(self, site_id: str) -> SiteSpec:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)

    def validate(self, traces: Optional[PowerTraceTable] = None) -> "ScenarioConfig":
        if not self.sites:
            raise ScenarioError("scenario needs at least one site")
        seen = set()
        for s in self.sites:
            s.validate()
            if s.site_id in seen:
                raise ScenarioError(f"duplicate site_id {s.site_id!r}")
            seen.add(s.site_id)
        self.workload.validate()
        for part in (self.network, self.curve, self.policy):
            try:
                part.validate()
            except ScenarioError:
                raise
            except ValueError as e:
                raise ScenarioError(str(e)) from None
        if self.workload.target_accuracy >= self.curve.alpha_max:
            raise ScenarioError(
                f"workload.target_accuracy {self.workload.target_accuracy} must be below "
                f"curve.alpha_max {self.curve.alpha_max}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        if traces is not None:
            for s in self.sites:
                if s.trace_ref is not None and s.trace_ref not in traces:
                    raise ScenarioError(f"site {s.site_id!r}: unresolved trace_ref {s.trace_ref!r}")
        return self


# ---------- serialization ----------

def _site_to_dict(s: SiteSpec) -> Dict[str, Any]:
    src = ({"static_fraction": s.static_fraction} if s.static_fraction is not None
           else {"trace_ref": s.trace_ref})
    return {
        "site_id": s.site_id,
        "distance_miles": s.distance_miles,
        "bandwidth_bps": s.bandwidth_bps,
        "power_cap_watts": s.power_cap_watts,
        "gpu_count": s.gpu_count,
        "gpu_power_watts": s.gpu_power_watts,
        "gpu_throughput_wups": s.gpu_throughput_wups,
        "power_source": src,
    }


def scenario_to_dict(cfg: ScenarioConfig) -> Dict[str, Any]:
    doc = {
        "sites": [_site_to_dict(s) for s in cfg.sites],
        "workload": dataclasses.asdict(cfg.workload),
        "network": dataclasses.asdict(cfg.network),
        "curve": dataclasses.asdict(cfg.curve),
        "policy": {"kind": cfg.policy.kind, "params": dict(cfg.policy.params)},
        "seed": cfg.seed,
    }
    if cfg.traces is not None:
        doc["traces"] = cfg.traces
    return doc


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False, default_flow_style=False)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_scenario(cfg), encoding="utf-8")


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{where} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    extra = set(data) - known
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ScenarioError(f"{where}: {e}") from None


def _site_from_dict(d: Any, index: int) -> SiteSpec:
    if not isinstance(d, dict):
        raise ScenarioParseError(f"sites[{index}] must be a mapping")
    d = dict(d)
    sid = d.get("site_id", f"<sites[{index}]>")
    src = d.pop("power_source", None)
    if not isinstance(src, dict) or not src:
        raise ScenarioError(f"site {sid!r}: power_source must set static_fraction or trace_ref")
    unknown = set(src) - {"static_fraction", "trace_ref"}
    if unknown:
        raise ScenarioError(f"site {sid!r}: unknown power_source field(s) {sorted(unknown)}")
    d["static_fraction"] = src.get("static_fraction")
    d["trace_ref"] = src.get("trace_ref")
    required = ("site_id", "distance_miles", "power_cap_watts", "gpu_count")
    for key in required:
        if key not in d:
            raise ScenarioError(f"site {sid!r}: missing field {key!r}")
    return _build(SiteSpec, d, f"site {sid!r}")


def scenario_from_dict(doc: Any) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a mapping at top level")
    allowed = {"sites", "workload", "network", "curve", "policy", "seed", "traces"}
    extra = set(doc) - allowed
    if extra:
        raise ScenarioError(f"unknown top-level key(s) {sorted(extra)}")
    if "sites" not in doc or not isinstance(doc["sites"], list):
        raise ScenarioError("'sites' must be a list")
    sites = tuple(_site_from_dict(d, i) for i, d in enumerate(doc["sites"]))
    pol = doc.get("policy") or {"kind": "powertrip"}
    if not isinstance(pol, dict) or "kind" not in pol:
        raise ScenarioError("policy must be a mapping with a 'kind'")
    policy = PolicyConfig(pol["kind"], dict(pol.get("params") or {}))
    return ScenarioConfig(
        sites=sites,
        workload=_build(WorkloadSpec, doc.get("workload"), "workload"),
        network=_build(NetworkParams, doc.get("network"), "network"),
        curve=_build(LearningCurveParams, doc.get("curve"), "curve"),
        policy=policy,
        seed=doc.get("seed", 0),
        traces=doc.get("traces"),
    )


def load_scenario(path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"{path}: malformed document: {e}") from None
    cfg = scenario_from_dict(doc)
    traces = None
    if cfg.traces is not None:
        traces = load_traces(resolve_traces_path(cfg, path))
    return cfg.validate(traces)


def resolve_traces_path(cfg: ScenarioConfig, scenario_path) -> Optional[Path]:
    if cfg.traces is None:
        return None
    p = Path(cfg.traces)
    return p if p.is_absolute() else Path(scenario_path).parent / p


def load_scenario_with_traces(path) -> Tuple[ScenarioConfig, Optional[PowerTraceTable]]:
    cfg = load_scenario(path)
    tp = resolve_traces_path(cfg, path)
    return cfg, (load_traces(tp) if tp is not None else None)


# ---------- traces ----------

def load_traces(path) -> PowerTraceTable:
    """Read a ``trace_id,timestamp_s,utilization_fraction`` CSV."""
    rows: Dict[str, List[Tuple[int, float]]] = {}
    order: List[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return PowerTraceTable({})
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceError(f"{path}:{lineno}: expected 3 columns")
            tid = row[0].strip()
            try:
                ts = int(row[1])
                u = float(row[2])
            except ValueError:
                raise TraceError(f"{path}:{lineno}: bad numeric field") from None
            if not 0.0 <= u <= 1.0:
                raise TraceError(f"{path}:{lineno}: utilization {u} outside [0,1]")
            if tid not in rows:
                rows[tid] = []
                order.append(tid)
            elif order[-1] != tid:
                raise TraceError(f"{path}:{lineno}: rows for trace {tid!r} are not contiguous")
            samples = rows[tid]
            if samples and ts <= samples[-1][0]:
                raise TraceError(f"{path}:{lineno}: non-monotone timestamp {ts} in trace {tid!r}")
            samples.append((ts, u))
    table = {}
    for tid in order:
        samples = rows[tid]
        gaps = Counter(b[0] - a[0] for a, b in zip(samples, samples[1:]))
        gran = gaps.most_common(1)[0][0] if gaps else 300
        table[tid] = PowerTrace(tid, tuple(samples), gran)
    return PowerTraceTable(table)


def save_traces(table: PowerTraceTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for tid in table:
            for t, u in table[tid].samples:
                w.writerow([tid, t, repr(u)])


def synthesize_traces(n_traces: int, seed: int, n_samples: int = 288,
                      granularity_s: int = 300,
                      avail_band: Tuple[float, float] = (0.26, 0.51)) -> PowerTraceTable:
    """Diurnal, noisy utilization traces whose spare capacity stays in ``avail_band``.

    Shaped after production power utilization: a per-site base level, a
    daily swing, and AR(1) noise at five-minute steps.
    """
    lo, hi = avail_band
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("avail_band must satisfy 0 <= lo < hi <= 1")
    rng = np.random.default_rng(seed)
    width = hi - lo
    day = 86_400
    out = {}
    for i in range(n_traces):
        base = rng.uniform(lo + 0.25 * width, hi - 0.25 * width)
        swing = rng.uniform(0.1, 0.3) * width
        phase = rng.uniform(0, 2 * math.pi)
        noise = 0.0
        samples = []
        for j in range(n_samples):
            t = j * granularity_s
            noise = 0.8 * noise + rng.normal(0.0, 0.03 * width)
            avail = base + swing * math.sin(2 * math.pi * t / day + phase) + noise
            avail = min(hi, max(lo, avail))
            samples.append((t, round(1.0 - avail, 6)))
        tid = f"trace{i:02d}"
        out[tid] = PowerTrace(tid, tuple(samples), granularity_s)
    return PowerTraceTable(out)


# ---------- synthetic fleets ----------

@dataclass(frozen=True)
class GenerationParams:
    distance_range: Tuple[float, float] = (100.0, 10_000.0)
    fraction_range: Tuple[float, float] = FRACTION_RANGE
    # 100 GPUs at 0.01 wu/s: same fleet throughput as one 1 wu/s GPU per site,
    # with enough GPUs for power-capped counts to be meaningful
    gpu_count: int = 100
    gpu_power_watts: float = 300.0
    gpu_throughput_wups: float = 0.01
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    network: NetworkParams = field(default_factory=NetworkParams)
    curve: LearningCurveParams = field(default_factory=LearningCurveParams)
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig("powertrip"))


def generate_synthetic(n_sites: int, seed: int,
                       params: GenerationParams = GenerationParams()) -> ScenarioConfig:
    """Random fleet: uniform distances, uniform static power fractions, derived bandwidth."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    rng = np.random.default_rng(seed)
    dists = rng.uniform(*params.distance_range, size=n_sites)
    fracs = rng.uniform(*params.fraction_range, size=n_sites)
    width = max(3, len(str(n_sites - 1)))
    sites = tuple(
        SiteSpec(
            site_id=f"s{i:0{width}d}",
            distance_miles=float(d),
            power_cap_watts=float(params.gpu_count * params.gpu_power_watts),
            gpu_count=params.gpu_count,
            gpu_power_watts=params.gpu_power_watts,
            gpu_throughput_wups=params.gpu_throughput_wups,
            bandwidth_bps=DERIVED,
            static_fraction=float(f),
        )
        for i, (d, f) in enumerate(zip(dists, fracs))
    )
    cfg = ScenarioConfig(sites, params.workload, params.network, params.curve,
                         params.policy, seed=int(seed))
    return cfg.validate()


def bind_traces(cfg: ScenarioConfig, table: PowerTraceTable,
                traces_path: Optional[str] = None) -> ScenarioConfig:
    """Switch every site to trace-backed power, assigning trace ids round-robin."""
    ids = sorted(table)
    if not ids:
        raise ScenarioError("cannot bind sites to an empty trace table")
    sites = tuple(
        dataclasses.replace(s, static_fraction=None, trace_ref=ids[i % len(ids)])
        for i, s in enumerate(cfg.sites)
    )
    return dataclasses.replace(cfg, sites=sites, traces=traces_path).validate(table)


def with_policy(cfg: ScenarioConfig, policy: PolicyConfig) -> ScenarioConfig:
    return dataclasses.replace(cfg, policy=policy)
