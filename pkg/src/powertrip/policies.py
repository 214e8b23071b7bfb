"""Site ranking, baseline selection policies and the dynamic greedy controller."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .learning import AccuracyHistory, project_accuracy_gain

log = logging.getLogger(__name__)

KINDS = ("random", "fixed_radius", "highest_power", "lowest_latency",
         "select_all", "static_k", "centralized", "powertrip")
STRATEGIES = ("power_to_cost", "lowest_latency", "highest_power")
T_COMM_EPS = 1e-3
GB = 1_000_000_000

_ALIASES = {"miles": "radius_miles", "frac": "power_fraction"}

_DEFAULTS: Dict[str, Dict[str, object]] = {
    "random": {"k": 10},
    "fixed_radius": {"radius_miles": 1000.0},
    "highest_power": {"k": 10},
    "lowest_latency": {"k": 10},
    "select_all": {},
    "static_k": {},
    "centralized": {"power_fraction": 0.25, "site": None},
    "powertrip": {
        "initial_sites": 10,
        "adjustment_interval": 5,
        "patience": 10,
        "candidate_offsets": [5, 10],
        "strategy": "power_to_cost",
        "small_update_bytes": int(1.2 * GB),
        "large_update_bytes": int(1.8 * GB),
        "freeze_ranking": False,
    },
}


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        norm = {_ALIASES.get(k, k): v for k, v in self.params.items()}
        object.__setattr__(self, "params", norm)

    def get(self, name: str):
        if name in self.params:
            return self.params[name]
        return _DEFAULTS.get(self.kind, {}).get(name)

    def validate(self, n_sites: Optional[int] = None) -> None:
        if self.kind not in KINDS:
            raise PolicyError(f"unknown policy {self.kind!r}; valid: {', '.join(KINDS)}")
        allowed = set(_DEFAULTS[self.kind]) | ({"k"} if self.kind == "static_k" else set())
        extra = set(self.params) - allowed
        if extra:
            raise PolicyError(f"policy {self.kind}: unknown param(s) {sorted(extra)}")
        if self.kind in ("random", "highest_power", "lowest_latency", "static_k"):
            k = self.get("k")
            if k is None:
                raise PolicyError(f"policy {self.kind} requires k")
            _positive_int(self.kind, "k", k)
            if n_sites is not None and k > n_sites:
                raise PolicyError(f"policy {self.kind}: k={k} exceeds fleet size {n_sites}")
        elif self.kind == "fixed_radius":
            if not _num(self.get("radius_miles")) > 0:
                raise PolicyError("policy fixed_radius: radius_miles must be > 0")
        elif self.kind == "centralized":
            if not 0 < _num(self.get("power_fraction")) <= 1:
                raise PolicyError("policy centralized: power_fraction must lie in (0, 1]")
        elif self.kind == "powertrip":
            for name in ("initial_sites", "adjustment_interval", "patience"):
                _positive_int(self.kind, name, self.get(name))
            offs = self.get("candidate_offsets")
            if not offs or not all(isinstance(n, int) and n > 0 for n in offs):
                raise PolicyError("policy powertrip: candidate_offsets must be positive integers")
            if self.get("strategy") not in STRATEGIES:
                raise PolicyError(f"policy powertrip: strategy must be one of {STRATEGIES}")
            if not self.get("small_update_bytes") < self.get("large_update_bytes"):
                raise PolicyError("policy powertrip: small_update_bytes must be < large_update_bytes")

    def label(self) -> str:
        if not self.params:
            return self.kind
        parts = [f"{k}={_fmt(v)}" for k, v in self.params.items()]
        return f"{self.kind}:" + ":".join(parts)

    __str__ = label


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def _positive_int(kind, name, v):
    if not (isinstance(v, int) and not isinstance(v, bool) and v >= 1):
        raise PolicyError(f"policy {kind}: {name} must be a positive integer, got {v!r}")


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "/".join(str(x) for x in v)
    return str(v)


def _parse_value(key: str, raw: str):
    if key == "candidate_offsets":
        return [int(x) for x in raw.split("/") if x]
    if key in ("strategy", "site"):
        return raw
    if key == "freeze_ranking":
        return raw.lower() in ("1", "true", "yes")
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise PolicyError(f"bad value for {key}: {raw!r}") from None


def parse_policy(spec: str) -> PolicyConfig:
    """``name[:key=value[:key=value...]]`` -> PolicyConfig."""
    name, _, rest = spec.strip().partition(":")
    params = {}
    for item in filter(None, rest.split(":")):
        key, eq, raw = item.partition("=")
        if not eq:
            raise PolicyError(f"policy param {item!r} is not key=value")
        key = _ALIASES.get(key.strip(), key.strip())
        params[key] = _parse_value(key, raw.strip())
    cfg = PolicyConfig(name, params)
    cfg.validate()
    return cfg


def parse_policy_list(text: str) -> List[PolicyConfig]:
    """Comma-separated policy specs; a bare ``key=value`` token attaches to the previous policy."""
    specs: List[str] = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        head = tok.partition(":")[0]
        if "=" in head and specs:
            specs[-1] += ":" + tok
        else:
            specs.append(tok)
    if not specs:
        raise PolicyError("empty policy list")
    return [parse_policy(s) for s in specs]


# ---------- scoring and ranking ----------

@dataclass(frozen=True)
class ScoreWeights:
    w_p: float
    w_c: float

    def __post_init__(self):
        if not (self.w_p > 0 and self.w_c > 0):
            raise ValueError("score weights must be positive")


def adapt_weights(update_size_bytes: int, thresholds: Tuple[float, float]) -> ScoreWeights:
    """Small updates favour power, large updates favour low communication cost."""
    small, large = thresholds
    if not small < large:
        raise ValueError("thresholds must satisfy small < large")
    if update_size_bytes < small:
        return ScoreWeights(2.0, 1.0)
    if update_size_bytes > large:
        return ScoreWeights(1.0, 2.0)
    return ScoreWeights(1.0, 1.0)


def power_to_cost_score(p_avail_norm: float, t_comm_s: float, weights: ScoreWeights) -> float:
    t = max(t_comm_s, T_COMM_EPS)
    return (p_avail_norm * weights.w_p) / (t * weights.w_c)


@dataclass(frozen=True)
class RankedSite:
    site_id: str
    score: float
    p_avail_norm: float
    t_comm_s: float


def _sort_key(strategy: str):
    if strategy == "power_to_cost":
        return lambda r: (-r.score, r.site_id)
    if strategy == "lowest_latency":
        return lambda r: (r.t_comm_s, r.site_id)
    if strategy == "highest_power":
        return lambda r: (-r.p_avail_norm, r.site_id)
    raise ValueError(f"unknown ranking strategy {strategy!r}")


def rank_sites(site_ids: Sequence[str], throughputs: Mapping[str, float],
               comm_delays: Mapping[str, float], weights: ScoreWeights,
               strategy: str = "power_to_cost") -> List[RankedSite]:
    """Order every site by the strategy's key, most desirable first.

    Power availability is normalized to the largest per-site throughput in the
    fleet so the score is unit-free.
    """
    if not site_ids:
        raise ValueError("cannot rank an empty fleet")
    key = _sort_key(strategy)
    peak = max(throughputs[s] for s in site_ids)
    ranked = []
    for sid in site_ids:
        p = throughputs[sid] / peak if peak > 0 else 0.0
        t = comm_delays[sid]
        ranked.append(RankedSite(sid, power_to_cost_score(p, t, weights), p, t))
    ranked.sort(key=key)
    return ranked


# ---------- dynamic controller ----------

def estimate_round_time(k: int, ranked: Sequence[RankedSite], t_comp_ref: float) -> float:
    """Estimated round time with the top k sites: compute over mean power plus worst comm."""
    if not 1 <= k <= len(ranked):
        raise ValueError(f"k={k} outside [1, {len(ranked)}]")
    top = ranked[:k]
    mean_p = sum(r.p_avail_norm for r in top) / k
    comm = max(r.t_comm_s for r in top)
    if mean_p <= 0:
        return math.inf
    return t_comp_ref / mean_p + comm


def candidate_counts(k_current: int, offsets: Sequence[int], n_sites: int) -> List[int]:
    ks = {k_current}
    for n in offsets:
        ks.add(k_current + n)
        ks.add(k_current - n)
    return sorted({min(max(k, 1), n_sites) for k in ks})


@dataclass(frozen=True)
class Decision:
    round: int
    k_current: int
    candidates: Tuple[int, ...]
    efficiency: Tuple[float, ...]
    k_next: int


@dataclass
class DynamicPolicyState:
    k_current: int
    r: int = 0
    last_improvement: int = 0
    patience: int = 10
    adjustment_interval: int = 5
    candidate_offsets: Tuple[int, ...] = (5, 10)
    initial_sites: int = 10
    history: AccuracyHistory = field(default_factory=AccuracyHistory)
    terminated: bool = False
    decisions: List[Decision] = field(default_factory=list)

    @classmethod
    def initial(cls, policy: PolicyConfig, n_sites: int) -> "DynamicPolicyState":
        init = policy.get("initial_sites")
        return cls(
            k_current=min(init, n_sites),
            patience=policy.get("patience"),
            adjustment_interval=policy.get("adjustment_interval"),
            candidate_offsets=tuple(policy.get("candidate_offsets")),
            initial_sites=init,
        )


def efficiency_table(state: DynamicPolicyState, ranked: Sequence[RankedSite],
                     t_comp_ref: float, alpha_r: float, alpha_prev: float
                     ) -> List[Tuple[int, float]]:
    out = []
    for k in candidate_counts(state.k_current, state.candidate_offsets, len(ranked)):
        tau = estimate_round_time(k, ranked, t_comp_ref)
        gain = project_accuracy_gain(k, state.k_current, alpha_r, alpha_prev)
        out.append((k, gain / tau if math.isfinite(tau) else 0.0))
    return out


def choose_next_k(state: DynamicPolicyState, ranked: Sequence[RankedSite],
                  t_comp_ref: float, alpha_r: float, alpha_prev: float) -> int:
    table = efficiency_table(state, ranked, t_comp_ref, alpha_r, alpha_prev)
    # candidates ascend, so strict > keeps the smaller k on ties
    best_k, best_eta = table[0]
    for k, eta in table[1:]:
        if eta > best_eta:
            best_k, best_eta = k, eta
    if best_k < state.k_current and state.r - state.last_improvement < state.patience:
        return state.k_current
    return best_k


def powertrip_step(state: DynamicPolicyState, ranked: Sequence[RankedSite],
                   alpha_r: float, alpha_prev: float, t_compute_s: float
                   ) -> DynamicPolicyState:
    """Post-round bookkeeping for the dynamic controller; returns the next state.

    ``t_compute_s`` is the measured compute time of the round just run; it is
    rescaled by the selection's mean normalized power to give the full-power
    reference compute time used in round-time estimates.
    """
    s = dataclasses.replace(state, decisions=list(state.decisions))
    if s.r - s.last_improvement > s.patience:
        s.terminated = True
        return s
    if s.r % s.adjustment_interval == 0:
        top = ranked[:s.k_current]
        t_comp_ref = t_compute_s * sum(r.p_avail_norm for r in top) / len(top)
        table = efficiency_table(s, ranked, t_comp_ref, alpha_r, alpha_prev)
        k_next = choose_next_k(s, ranked, t_comp_ref, alpha_r, alpha_prev)
        s.decisions.append(Decision(s.r, s.k_current, tuple(k for k, _ in table),
                                    tuple(e for _, e in table), k_next))
        log.debug("round %d: k %d -> %d", s.r, s.k_current, k_next)
        s.k_current = k_next
    if alpha_r > alpha_prev:
        s.last_improvement = s.r
    s.r += 1
    return s


def select_prefix(ranked: Sequence[RankedSite], k: int) -> List[str]:
    return [r.site_id for r in ranked[:k]]


# ---------- baselines ----------

def central_site(sites: Sequence, site_id: Optional[str] = None):
    """The configured site, or the one with the most hardware throughput."""
    if site_id is not None:
        for s in sites:
            if s.site_id == site_id:
                return s
        raise PolicyError(f"centralized: unknown site {site_id!r}")
    return min(sites, key=lambda s: (-s.full_throughput, s.site_id))


def select_baseline(policy: PolicyConfig, sites: Sequence, ranked: Optional[Sequence[RankedSite]],
                    rng=None) -> List[str]:
    """One round's selection for a non-dynamic policy (ids in fleet or rank order)."""
    kind = policy.kind
    if kind == "select_all":
        return [s.site_id for s in sites]
    if kind == "fixed_radius":
        radius = float(policy.get("radius_miles"))
        chosen = [s.site_id for s in sites if s.distance_miles <= radius]
        if not chosen:
            raise PolicyError(f"fixed_radius: no site within {radius} miles")
        return chosen
    if kind in ("static_k", "highest_power", "lowest_latency"):
        k = policy.get("k")
        if ranked is None or k > len(ranked):
            raise PolicyError(f"{kind}: k={k} exceeds fleet size {len(sites)}")
        return select_prefix(ranked, k)
    if kind == "random":
        k = policy.get("k")
        if k > len(sites):
            raise PolicyError(f"random: k={k} exceeds fleet size {len(sites)}")
        idx = sorted(rng.choice(len(sites), size=k, replace=False).tolist())
        return [sites[i].site_id for i in idx]
    if kind == "centralized":
        return [central_site(sites, policy.get("site")).site_id]
    raise PolicyError(f"select_baseline does not handle {kind!r}")
