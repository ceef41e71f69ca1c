"""Slotted-time simulation of underlay edge networks.

The package covers the full control stack: admission (flow) control driven by
queue backlogs, centralized max-weight scheduling under average and
instantaneous interference constraints, four distributed contention
schedulers, closed-form contention oracles for testing, and a dual
subgradient solver that traces the boundary of the achievable rate region.
"""

from .channel import ChannelState, FadingSpec, rate, sample_state, uniform_means
from .queueing import FlowParams, NetworkState, advance_queues, flow_control
from .schedulers import (
    Outcome,
    PolicyConfig,
    ScheduleDecision,
    WeightMapper,
    fit_optimal_mapper,
    minislot_linear,
    minislot_uniform,
    schedule_cads,
    schedule_centralized,
    schedule_irds,
    weight,
)
from .analytics import (
    BetaEstimate,
    PairedWeightLog,
    alpha_bound,
    beta_estimate,
    success_probability,
)
from .stability import (
    BoundaryPoint,
    DualPoint,
    SolverOptions,
    dual_scheduler,
    solve_boundary_point,
    solve_boundary_point_unconstrained,
    trace_boundary,
)
from .engine import RunConfig, RunResult, RunSummary, paired_beta, run, sweep

__version__ = "0.1.0"

__all__ = [
    "ChannelState",
    "FadingSpec",
    "rate",
    "sample_state",
    "uniform_means",
    "FlowParams",
    "NetworkState",
    "advance_queues",
    "flow_control",
    "Outcome",
    "PolicyConfig",
    "ScheduleDecision",
    "WeightMapper",
    "fit_optimal_mapper",
    "minislot_linear",
    "minislot_uniform",
    "schedule_cads",
    "schedule_centralized",
    "schedule_irds",
    "weight",
    "BetaEstimate",
    "PairedWeightLog",
    "alpha_bound",
    "beta_estimate",
    "success_probability",
    "BoundaryPoint",
    "DualPoint",
    "SolverOptions",
    "dual_scheduler",
    "solve_boundary_point",
    "solve_boundary_point_unconstrained",
    "trace_boundary",
    "RunConfig",
    "RunResult",
    "RunSummary",
    "paired_beta",
    "run",
    "sweep",
    "__version__",
]
