"""Synchronous-round simulator, static sweep and policy comparison harness."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .learning import AccuracyHistory, accuracy_after, round_work
from .network import comm_delay
from .policies import (
    DynamicPolicyState, PolicyConfig, central_site, PolicyError, RankedSite, adapt_weights,
    powertrip_step, rank_sites, select_baseline, select_prefix, _DEFAULTS,
)
from .power import PowerSnapshot, PowerTraceTable, fleet_snapshots
from .scenario import ScenarioConfig, WorkloadSpec

log = logging.getLogger(__name__)

ROUNDS_HEADER = ["round", "policy", "k", "t_compute_s", "t_comm_s", "t_round_s",
                 "accuracy", "cumulative_time_s"]
SUMMARY_HEADER = ["policy", "k_star_or_k", "time_to_accuracy_s", "rounds", "final_accuracy"]
DEFAULT_THRESHOLDS = (_DEFAULTS["powertrip"]["small_update_bytes"],
                      _DEFAULTS["powertrip"]["large_update_bytes"])
MAX_STALLS = 100_000


class StallError(RuntimeError):
    """Selected sites have no usable power and waiting cannot help."""


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: Tuple[str, ...]
    k: int
    t_compute_s: float
    t_comm_s: float
    t_round_s: float
    accuracy_after: float
    cumulative_time_s: float
    cumulative_work: float


@dataclass
class SimResult:
    policy: str
    rounds: List[RoundRecord] = field(default_factory=list)
    reached_target: bool = False
    time_to_accuracy_s: Optional[float] = None
    rounds_to_accuracy: Optional[int] = None
    efficiency_series: List[float] = field(default_factory=list)
    stalls: List[Tuple[int, float]] = field(default_factory=list)
    decisions: list = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.rounds[-1].accuracy_after if self.rounds else 0.0

    @property
    def k_series(self) -> List[int]:
        return [r.k for r in self.rounds]


@dataclass(frozen=True)
class SweepResult:
    entries: List[Tuple[int, Optional[float]]]
    k_star: Optional[int]

    def time_of(self, k: int) -> Optional[float]:
        return dict(self.entries)[k]


def round_compute_time(selected: Sequence[str], snapshots: Mapping[str, PowerSnapshot],
                       workload: WorkloadSpec) -> float:
    """Round work split over the aggregate throughput of the selection."""
    if not selected:
        raise ValueError("empty selection")
    total = sum(snapshots[s].throughput_wups for s in selected)
    if total <= 0:
        raise StallError("selected sites have zero aggregate throughput")
    return workload.round_work_units * workload.local_epochs / total


class Simulation:
    """One run: a clock, an accuracy history and the policy's private state."""

    def __init__(self, scenario: ScenarioConfig, policy: Optional[PolicyConfig] = None,
                 traces: Optional[PowerTraceTable] = None, seed: Optional[int] = None,
                 trace_wrap: bool = False):
        self.scenario = scenario
        self.policy = policy or scenario.policy
        self.policy.validate(len(scenario.sites))
        self.traces = traces
        self.trace_wrap = trace_wrap
        seed = scenario.seed if seed is None else seed
        ss = np.random.SeedSequence(seed)
        self.rng_policy, self.rng_noise, self.rng_jitter = (
            np.random.default_rng(s) for s in ss.spawn(3))

        self.sites = list(scenario.sites)
        self.ids = [s.site_id for s in self.sites]
        wl = scenario.workload
        self.nominal_comm = {s.site_id: comm_delay(s, wl.update_size_bytes, scenario.network)
                             for s in self.sites}
        if self.policy.kind == "powertrip":
            thresholds = (self.policy.get("small_update_bytes"),
                          self.policy.get("large_update_bytes"))
        else:
            thresholds = DEFAULT_THRESHOLDS
        self.weights = adapt_weights(wl.update_size_bytes, thresholds)
        self.granularity = min((tr.granularity_s for tr in traces.values()), default=300) \
            if traces else 300
        self.time_varying = any(s.trace_ref is not None for s in self.sites)

        self.clock = 0.0
        self.history = AccuracyHistory()
        self.result = SimResult(self.policy.label())
        self.ranked: Optional[List[RankedSite]] = None
        self.state: Optional[DynamicPolicyState] = None
        self._last_selection: Optional[List[str]] = None

        kind = self.policy.kind
        if kind == "powertrip":
            self.state = DynamicPolicyState.initial(self.policy, len(self.sites))
        elif kind == "static_k":
            self.ranked = self._rank(self._snapshots(), "power_to_cost")
        elif kind == "centralized":
            frac = float(self.policy.get("power_fraction"))
            self.central_site = central_site(self.sites, self.policy.get("site"))
            self.central_throughput = self.central_site.full_throughput * frac

    @property
    def terminated(self) -> bool:
        return self.state is not None and self.state.terminated

    def _snapshots(self) -> Dict[str, PowerSnapshot]:
        return fleet_snapshots(self.sites, self.traces, self.clock, wrap=self.trace_wrap)

    def _rank(self, snaps, strategy) -> List[RankedSite]:
        tps = {sid: snap.throughput_wups for sid, snap in snaps.items()}
        return rank_sites(self.ids, tps, self.nominal_comm, self.weights, strategy)

    def _select(self, snaps) -> List[str]:
        kind = self.policy.kind
        if kind == "powertrip":
            st = self.state
            refresh = self.ranked is None or (
                st.r % st.adjustment_interval == 0 and not self.policy.get("freeze_ranking"))
            if refresh:
                self.ranked = self._rank(snaps, self.policy.get("strategy"))
            return select_prefix(self.ranked, st.k_current)
        if kind in ("highest_power", "lowest_latency"):
            self.ranked = self._rank(snaps, kind)
        if kind == "random" or self._last_selection is None or kind in (
                "highest_power", "lowest_latency"):
            return select_baseline(self.policy, self.sites, self.ranked, self.rng_policy)
        return self._last_selection

    def _comm(self, selected: Sequence[str]) -> float:
        sigma = self.scenario.network.jitter_sigma
        if sigma > 0:
            z = self.rng_jitter.normal(0.0, sigma, size=len(selected))
            return max(self.nominal_comm[s] * math.exp(v) for s, v in zip(selected, z))
        return max(self.nominal_comm[s] for s in selected)

    def run_round(self) -> RoundRecord:
        if self.terminated:
            raise RuntimeError("simulation already terminated")
        wl = self.scenario.workload
        r = len(self.result.rounds)
        stalls = 0
        while True:
            snaps = self._snapshots()
            selected = self._select(snaps)
            self._last_selection = selected
            if self.policy.kind == "centralized":
                t_compute = wl.round_work_units * wl.local_epochs / self.central_throughput
                t_comm = 0.0
                break
            try:
                t_compute = round_compute_time(selected, snaps, wl)
            except StallError:
                if not self.time_varying or stalls >= MAX_STALLS:
                    raise
                stalls += 1
                self.result.stalls.append((r, self.clock))
                log.warning("round %d stalled at t=%.0fs; retrying after %ds",
                            r, self.clock, self.granularity)
                self.clock += self.granularity
                continue
            t_comm = self._comm(selected)
            break

        k = len(selected)
        work = round_work(k, wl.round_work_units, wl.local_epochs, self.scenario.curve)
        sigma = self.scenario.curve.noise_sigma
        noise = float(self.rng_noise.normal(0.0, sigma)) if sigma > 0 else 0.0
        prev_alpha = self.history.last_two()[0]
        alpha = accuracy_after(self.history.cumulative_work + work, self.scenario.curve, noise)
        self.history.append(alpha, work)
        t_round = t_compute + t_comm
        self.clock += t_round
        rec = RoundRecord(r, tuple(selected), k, t_compute, t_comm, t_round, alpha,
                          self.clock, self.history.cumulative_work)
        self.result.rounds.append(rec)
        self.result.efficiency_series.append((alpha - prev_alpha) / t_round)
        if self.state is not None:
            self.state = powertrip_step(self.state, self.ranked, alpha, prev_alpha, t_compute)
            self.state.history = self.history
        return rec

    def run(self) -> SimResult:
        wl = self.scenario.workload
        res = self.result
        while len(res.rounds) < wl.max_rounds:
            rec = self.run_round()
            if rec.accuracy_after >= wl.target_accuracy:
                res.reached_target = True
                res.time_to_accuracy_s = rec.cumulative_time_s
                res.rounds_to_accuracy = rec.round + 1
                break
            if self.terminated:
                log.info("policy %s stopped on plateau at round %d", res.policy, rec.round)
                break
        if self.state is not None:
            res.decisions = list(self.state.decisions)
        return res


def simulate(scenario: ScenarioConfig, policy: Optional[PolicyConfig] = None,
             traces: Optional[PowerTraceTable] = None, seed: Optional[int] = None,
             trace_wrap: bool = False) -> SimResult:
    return Simulation(scenario, policy, traces, seed, trace_wrap).run()


def _simulate_job(args) -> SimResult:
    return simulate(*args)


def _run_all(jobs: List[tuple], workers: Optional[int]) -> List[SimResult]:
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_simulate_job, jobs))
    return [_simulate_job(j) for j in jobs]


def _tta_key(t: Optional[float]) -> float:
    return math.inf if t is None else t


def static_sweep(scenario: ScenarioConfig, ks: Iterable[int],
                 traces: Optional[PowerTraceTable] = None, seed: Optional[int] = None,
                 trace_wrap: bool = False, workers: Optional[int] = None) -> SweepResult:
    """Time-to-accuracy of a fixed top-k selection for each k; k* is the argmin."""
    ks = list(ks)
    if not ks:
        raise ValueError("no k values to sweep")
    n = len(scenario.sites)
    for k in ks:
        if not 1 <= k <= n:
            raise ValueError(f"k={k} outside [1, {n}]")
    jobs = [(scenario, PolicyConfig("static_k", {"k": k}), traces, seed, trace_wrap) for k in ks]
    results = _run_all(jobs, workers)
    entries = [(k, res.time_to_accuracy_s) for k, res in zip(ks, results)]
    best = min(entries, key=lambda e: (_tta_key(e[1]), e[0]))
    k_star = best[0] if best[1] is not None else None
    if k_star is None:
        log.warning("no swept k reached the target accuracy")
    return SweepResult(entries, k_star)


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    k: int
    time_to_accuracy_s: Optional[float]
    rounds: int
    final_accuracy: float
    reached_target: bool
    speedup_vs_slowest: Optional[float] = None


def compare_policies(scenario: ScenarioConfig, policies: Sequence[PolicyConfig],
                     traces: Optional[PowerTraceTable] = None, seed: Optional[int] = None,
                     trace_wrap: bool = False, workers: Optional[int] = None
                     ) -> Tuple[List[ComparisonRow], List[SimResult]]:
    """Run every policy on the same scenario and seed; rows keep input order."""
    if not policies:
        raise PolicyError("no policies to compare")
    for p in policies:
        p.validate(len(scenario.sites))
    jobs = [(scenario, p, traces, seed, trace_wrap) for p in policies]
    results = _run_all(jobs, workers)
    reached = [r.time_to_accuracy_s for r in results if r.time_to_accuracy_s is not None]
    slowest = max(reached) if reached else None
    rows = []
    for res in results:
        tta = res.time_to_accuracy_s
        rows.append(ComparisonRow(
            res.policy, res.rounds[-1].k if res.rounds else 0, tta, len(res.rounds),
            res.final_accuracy, res.reached_target,
            slowest / tta if (tta and slowest) else None))
    return rows, results


def ranking(rows: Sequence[ComparisonRow]) -> List[ComparisonRow]:
    return sorted(rows, key=lambda r: _tta_key(r.time_to_accuracy_s))


# ---------- output ----------

def _f(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def rounds_csv(results: Iterable[SimResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUNDS_HEADER)
    for res in results:
        for r in res.rounds:
            w.writerow([r.round, res.policy, r.k, _f(r.t_compute_s), _f(r.t_comm_s),
                        _f(r.t_round_s), _f(r.accuracy_after), _f(r.cumulative_time_s)])
    return buf.getvalue()


def summary_csv(rows: Sequence[ComparisonRow], with_speedup: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER + (["speedup_vs_slowest"] if with_speedup else []))
    for r in rows:
        line = [r.policy, r.k, _f(r.time_to_accuracy_s), r.rounds, _f(r.final_accuracy)]
        if with_speedup:
            line.append(_f(r.speedup_vs_slowest))
        w.writerow(line)
    return buf.getvalue()


def sweep_csv(sweep: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "time_to_accuracy_s"])
    for k, t in sweep.entries:
        w.writerow([k, _f(t)])
    return buf.getvalue()


def result_to_dict(res: SimResult) -> dict:
    return {
        "policy": res.policy,
        "reached_target": res.reached_target,
        "time_to_accuracy_s": res.time_to_accuracy_s,
        "rounds_to_accuracy": res.rounds_to_accuracy,
        "final_accuracy": res.final_accuracy,
        "efficiency_series": res.efficiency_series,
        "stalls": [list(s) for s in res.stalls],
        "rounds": [dataclasses.asdict(r) for r in res.rounds],
    }


def result_json(res: SimResult) -> str:
    return json.dumps(result_to_dict(res), indent=2)
