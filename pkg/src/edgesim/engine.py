"""Slotted simulation engine and parameter sweeps.

A run advances the network one slot at a time: sample the channel, pick a
transmitter under the configured policy, admit new traffic through the flow
controller, and update the data and virtual queues. Channel draws come from
per-device generator substreams consumed in fixed-size blocks, so results are
reproducible bit for bit and unchanged by how often metrics are read.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .analytics import BetaEstimate, PairedWeightLog, beta_estimate
from .channel import FadingSpec, sample_block
from .queueing import FlowParams, apply_slot_update, flow_control_vector
from .schedulers import (
    MapperBank,
    Outcome,
    PolicyConfig,
    WeightReservoir,
    fit_optimal_mapper,
    irds_step,
    linear_minislots,
    max_weight_winner,
    resolve_contention,
    transmit_probability,
)

__all__ = [
    "RunConfig",
    "RunSummary",
    "RunResult",
    "run",
    "sweep",
    "paired_beta",
    "THREADS_ENV",
]

CHANNEL_BLOCK = 8192
REFIT_EVERY = 1000
RATE_SAMPLE_SIZE = 4096
THREADS_ENV = "EDGESIM_THREADS"

OUTCOME_CODES = {Outcome.SUCCESS: 0, Outcome.COLLISION: 1, Outcome.IDLE: 2}
OUTCOME_NAMES = {0: "Success", 1: "Collision", 2: "Idle"}


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation run depends on.

    Attributes:
        fading: channel statistics, including the device count.
        policy: scheduling policy and contention parameters.
        flow: flow controller parameters.
        gamma: average interference budget per slot (infinity disables the
            virtual queue).
        horizon: number of slots to simulate.
        seed: root seed; every generator in the run derives from it.
        warmup: slots excluded from the summary metrics; None means a tenth
            of the horizon.
        power: transmit power of every device.
        log_queues: how many device queues the per-slot trace keeps.
    """

    fading: FadingSpec
    policy: PolicyConfig
    flow: FlowParams
    gamma: float = 0.1
    horizon: int = 100_000
    seed: int = 0
    warmup: int | None = None
    power: float = 1.0
    log_queues: int = 8

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError("horizon must be at least 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive (infinity allowed)")
        if self.warmup is not None:
            w = int(self.warmup)
            if not 0 <= w < self.horizon:
                raise ValueError("warmup must lie in [0, horizon)")
            object.__setattr__(self, "warmup", w)
        if not (np.isfinite(self.power) and self.power > 0.0):
            raise ValueError("power must be finite and positive")
        if int(self.log_queues) < 0:
            raise ValueError("log_queues must be nonnegative")
        object.__setattr__(self, "log_queues", int(self.log_queues))

    @property
    def resolved_warmup(self) -> int:
        return self.warmup if self.warmup is not None else self.horizon // 10


@dataclass(frozen=True, eq=False)
class RunSummary:
    """Post-warmup averages of one run.

    Attributes:
        avg_admitted: mean admitted traffic per device per slot.
        sum_rate: total admitted traffic per slot across devices.
        sum_utility: utility of the per-device average admissions, summed.
        avg_queue: time average of the total backlog.
        avg_interference: mean interference power delivered to the shared
            receiver per slot.
        success_frac / collision_frac / idle_frac: slot outcome fractions.
        beta: realized fraction of the best feasible weight (None when no
            slot had a feasible contender).
        final_z: virtual queue value at the end of the run.
    """

    avg_admitted: np.ndarray
    sum_rate: float
    sum_utility: float
    avg_queue: float
    avg_interference: float
    success_frac: float
    collision_frac: float
    idle_frac: float
    beta: float | None
    final_z: float


@dataclass(frozen=True, eq=False)
class RunResult:
    """A run's summary plus its per-slot trace.

    The trace dict holds equal-length vectors over the full horizon:
    "scheduled" (device index, -1 when idle or collided), "outcome"
    (0 success, 1 collision, 2 idle), "w_sched" (weight secured, overhead
    included), "max_feasible" (best nonnegative feasible weight), "z", and
    "q" with shape (horizon, log_queues) holding the leading device backlogs.
    """

    config: RunConfig
    summary: RunSummary
    trace: dict[str, np.ndarray]


def _link_rngs(seed: int, tag: int, n: int) -> list[np.random.Generator]:
    return [
        np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag, i)))
        for i in range(n)
    ]


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))


def _prefill_pairs(
    spec: FadingSpec, rng: np.random.Generator, count: int, power: float
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (rate, gain) pairs from the channel distribution; shapes (count, n)."""
    n = spec.n_links
    h = rng.exponential(spec.direct_mean, size=(count, n))
    g = rng.exponential(spec.interference_mean, size=(count, n))
    if spec.n_external:
        ext = rng.exponential(spec.external_means[None, :, None], size=(count, spec.n_external, n))
        i_ext = spec.external_power * ext.sum(axis=1)
    else:
        i_ext = np.zeros((count, n))
    r = np.log1p(power * h / (i_ext + spec.noise_power))
    return r, g


def run(config: RunConfig) -> RunResult:
    """Simulate one run and return its summary and per-slot trace."""
    spec = config.fading
    pol = config.policy
    flow = config.flow
    n = spec.n_links
    t_end = config.horizon
    warmup = config.resolved_warmup
    power = config.power
    noise = spec.noise_power
    scale = pol.contention_overhead
    kind = pol.kind

    channel_rngs = _link_rngs(config.seed, 0, n)
    policy_rng = _stream(config.seed, 1)
    prefill_rng = _stream(config.seed, 2)

    # Policy state.
    reservoir: WeightReservoir | None = None
    bank: MapperBank | None = None
    rate_quantile = 0.0
    w_cap = 0.0
    prev_winner: int | None = None
    if kind in ("CadsUniform", "CadsOptimal"):
        reservoir = WeightReservoir(n, pol.reservoir_size)
        r0, g0 = _prefill_pairs(spec, prefill_rng, pol.reservoir_size, power)
        for i in range(pol.reservoir_size):
            reservoir.push(r0[i], g0[i])
    if kind == "CadsOptimal":
        zero_q = np.zeros(n)
        start = reservoir.weights(zero_q, 0.0, power)
        bank = MapperBank(
            [fit_optimal_mapper(start[i], pol.m_slots, n) for i in range(n)]
        )
    if kind == "CadsLinear" and pol.w_max is None:
        r1, _ = _prefill_pairs(spec, prefill_rng, max(RATE_SAMPLE_SIZE // n, 1), power)
        rate_quantile = float(np.quantile(r1.ravel(), 1.0 - 1.0 / pol.m_slots))

    q = np.zeros(n)
    z = 0.0

    n_log_q = min(n, config.log_queues)
    trace_sched = np.full(t_end, -1, dtype=np.int32)
    trace_outcome = np.full(t_end, OUTCOME_CODES[Outcome.IDLE], dtype=np.int8)
    trace_wsched = np.zeros(t_end)
    trace_maxw = np.zeros(t_end)
    trace_z = np.zeros(t_end)
    trace_q = np.zeros((t_end, n_log_q))

    admitted_sum = np.zeros(n)
    queue_sum = 0.0
    intf_sum = 0.0
    outcome_counts = np.zeros(3, dtype=np.int64)

    block_start = 0
    rates_blk = g_blk = None

    for t in range(t_end):
        if rates_blk is None or t - block_start >= CHANNEL_BLOCK:
            block_start = t
            h_b, g_b, i_b = sample_block(spec, channel_rngs, CHANNEL_BLOCK)
            rates_blk = np.log1p(power * h_b / (i_b + noise))
            g_blk = g_b
        row = t - block_start
        r_t = rates_blk[row]
        g_t = g_blk[row]

        w = q * r_t - (power * z) * g_t
        feasible = power * g_t <= pol.nu

        if kind == "Centralized":
            winner = max_weight_winner(w, feasible)
            outcome = Outcome.SUCCESS if winner is not None else Outcome.IDLE
        elif kind == "Irds":
            contends = policy_rng.random(n) < (1.0 / n)
            transmit = policy_rng.random(n) < transmit_probability(w)
            winner = irds_step(prev_winner, contends, transmit, feasible)
            if winner is not None:
                outcome = Outcome.SUCCESS
            else:
                outcome = Outcome.COLLISION if int(contends.sum()) >= 2 else Outcome.IDLE
            prev_winner = winner
        else:
            reservoir_active = reservoir is not None
            if reservoir_active:
                reservoir.push(r_t, g_t)
            if kind == "CadsUniform":
                picks = reservoir.uniform_picks(w, q, z, power, pol.m_slots)
            elif kind == "CadsOptimal":
                if t > 0 and t % REFIT_EVERY == 0:
                    sample = reservoir.weights(q, z, power)
                    for i in range(n):
                        prev = bank.mappers[i]
                        init = prev.interior if pol.m_slots > 1 else None
                        bank.replace(
                            i,
                            fit_optimal_mapper(
                                sample[i], pol.m_slots, n, init_interior=init
                            ),
                        )
                picks = bank.minislots(w)
            else:  # CadsLinear
                if pol.w_max is not None:
                    w_eff = pol.w_max
                else:
                    w_cap = max(w_cap, float(q.max()) * rate_quantile)
                    w_eff = w_cap if w_cap > 0.0 else 1.0
                picks = linear_minislots(w, w_eff, pol.m_slots)
            picks = np.where(feasible, picks, pol.m_slots + 1)
            winner, outcome, _, _ = resolve_contention(picks, pol.m_slots)

        eligible = feasible & (w >= 0.0)
        max_feasible = float(w[eligible].max()) if eligible.any() else 0.0
        w_sched = scale * float(w[winner]) if winner is not None else 0.0

        admitted = flow_control_vector(q, flow)

        trace_sched[t] = -1 if winner is None else winner
        trace_outcome[t] = OUTCOME_CODES[outcome]
        trace_wsched[t] = w_sched
        trace_maxw[t] = max_feasible
        trace_z[t] = z
        if n_log_q:
            trace_q[t] = q[:n_log_q]

        if t >= warmup:
            admitted_sum += admitted
            queue_sum += float(q.sum())
            outcome_counts[OUTCOME_CODES[outcome]] += 1

        if winner is not None:
            service = scale * r_t[winner]
            interference = scale * power * g_t[winner]
        else:
            service = 0.0
            interference = 0.0
        if t >= warmup:
            intf_sum += interference

        z = apply_slot_update(q, z, winner, service, interference, admitted, config.gamma)

    measured = t_end - warmup
    avg_admitted = admitted_sum / measured
    sum_rate = float(avg_admitted.sum())
    sum_utility = float(np.sum([flow.utility_value(a) for a in avg_admitted]))
    maxw_tail = trace_maxw[warmup:]
    wsched_tail = trace_wsched[warmup:]
    denom = float(maxw_tail.mean())
    beta = float(wsched_tail.mean()) / denom if denom > 0.0 else None

    summary = RunSummary(
        avg_admitted=avg_admitted,
        sum_rate=sum_rate,
        sum_utility=sum_utility,
        avg_queue=queue_sum / measured,
        avg_interference=intf_sum / measured,
        success_frac=float(outcome_counts[0] / measured),
        collision_frac=float(outcome_counts[1] / measured),
        idle_frac=float(outcome_counts[2] / measured),
        beta=beta,
        final_z=float(z),
    )
    trace = {
        "scheduled": trace_sched,
        "outcome": trace_outcome,
        "w_sched": trace_wsched,
        "max_feasible": trace_maxw,
        "z": trace_z,
        "q": trace_q,
    }
    return RunResult(config=config, summary=summary, trace=trace)


def paired_beta(result: RunResult, n_boot: int = 500, seed: int = 0) -> BetaEstimate:
    """Bootstrap interval for the secured weight fraction of a finished run."""
    w = result.config.resolved_warmup
    log = PairedWeightLog(result.trace["w_sched"][w:], result.trace["max_feasible"][w:])
    return beta_estimate(log, n_boot=n_boot, seed=seed)


SWEEP_AXES = ("V", "gamma", "N", "M", "tau", "policy")


def _with_axis_value(base: RunConfig, axis: str, value) -> RunConfig:
    if axis == "V":
        return replace(base, flow=replace(base.flow, v=float(value)))
    if axis == "gamma":
        return replace(base, gamma=float(value))
    if axis == "N":
        spec = base.fading
        def scalar(mean: np.ndarray, label: str) -> float:
            if np.unique(mean).size != 1:
                raise ValueError(f"cannot resize per-device {label} means")
            return float(mean[0])
        fading = FadingSpec(
            n_links=int(value),
            direct_mean=scalar(spec.direct_mean, "direct"),
            interference_mean=scalar(spec.interference_mean, "interference"),
            n_external=spec.n_external,
            external_means=spec.external_means,
            external_power=spec.external_power,
            noise_power=spec.noise_power,
        )
        return replace(base, fading=fading)
    if axis == "M":
        return replace(base, policy=replace(base.policy, m_slots=int(value)))
    if axis == "tau":
        return replace(base, policy=replace(base.policy, tau=float(value)))
    if axis == "policy":
        return replace(base, policy=replace(base.policy, kind=str(value)))
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def _derived_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(100, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _max_workers(n_jobs: int) -> int:
    env = os.environ.get(THREADS_ENV, "")
    if env.strip():
        try:
            cap = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be at least 1")
    else:
        try:
            cap = len(os.sched_getaffinity(0))
        except AttributeError:
            cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def sweep(base: RunConfig, axis: str, values: Sequence) -> list[RunResult]:
    """Run one simulation per value of the swept axis.

    Each point gets its own seed derived from the base seed and its position,
    so points are statistically independent and any one of them can be
    reproduced in isolation. Points run in parallel processes when the
    machine (or the EDGESIM_THREADS variable) allows.
    """
    values = list(values)
    if not values:
        return []
    configs = [
        replace(_with_axis_value(base, axis, v), seed=_derived_seed(base.seed, i))
        for i, v in enumerate(values)
    ]
    workers = _max_workers(len(configs))
    if workers == 1:
        return [run(c) for c in configs]
    import multiprocessing as mp

    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(run, configs))
