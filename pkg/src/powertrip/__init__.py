"""Trace-driven simulator for power-constrained, geo-distributed training."""

from .engine import (RoundRecord, SimResult, Simulation, SweepResult, compare_policies,
                     round_compute_time, simulate, static_sweep)
from .learning import LearningCurveParams, accuracy_after, project_accuracy_gain
from .network import NetworkParams, bandwidth_of, comm_delay, round_comm_time
from .policies import (DynamicPolicyState, PolicyConfig, RankedSite, ScoreWeights,
                       adapt_weights, choose_next_k, estimate_round_time, parse_policy,
                       power_to_cost_score, powertrip_step, rank_sites, select_baseline)
from .power import (PowerSnapshot, PowerTrace, PowerTraceTable, available_power,
                    effective_gpus, site_throughput)
from .scenario import (GenerationParams, ScenarioConfig, ScenarioError, SiteSpec, WorkloadSpec,
                       generate_synthetic, load_scenario, load_traces, save_scenario)

__version__ = "0.1.0"
