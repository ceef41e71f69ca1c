"""Per-slot scheduling policies behind a single decision interface.

Five policies are implemented: a centralized max-weight scheduler, three
contention schedulers that map device weights to mini-slot backoff indices
(uniform, fitted-threshold, and linear mappings), and a single-round
random-access scheduler with sigmoid transmission persistence. Every policy
schedules at most one device per slot and never schedules a device whose
instantaneous interference power exceeds the cap nu.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelState, rate
from .queueing import NetworkState

__all__ = [
    "Outcome",
    "ScheduleDecision",
    "PolicyConfig",
    "WeightMapper",
    "MapperBank",
    "LinearMapper",
    "UniformSampleMapper",
    "WeightReservoir",
    "weight",
    "schedule_centralized",
    "schedule_cads",
    "schedule_irds",
    "minislot_uniform",
    "minislot_linear",
    "linear_minislots",
    "fit_optimal_mapper",
    "contention_payoff",
    "resolve_contention",
    "transmit_probability",
]

POLICY_KINDS = ("Centralized", "CadsUniform", "CadsOptimal", "CadsLinear", "Irds")


class Outcome(str, enum.Enum):
    """What happened to the slot: one transmission, a collision, or nothing."""

    SUCCESS = "Success"
    COLLISION = "Collision"
    IDLE = "Idle"


@dataclass(frozen=True, eq=False)
class ScheduleDecision:
    """One slot's scheduling result.

    Attributes:
        scheduled: index of the transmitting device, present iff Success.
        outcome: Success, Collision, or Idle.
        winning_minislot: the winner's contention index (contention policies,
            Success only).
        weights: snapshot of every device's weight this slot.
        contenders: how many devices had nonnegative weight and satisfied the
            instantaneous interference cap.
    """

    scheduled: int | None
    outcome: Outcome
    winning_minislot: int | None
    weights: np.ndarray
    contenders: int

    def __post_init__(self):
        if (self.scheduled is not None) != (self.outcome is Outcome.SUCCESS):
            raise ValueError("scheduled must be present exactly when the outcome is Success")
        if self.winning_minislot is not None and self.winning_minislot < 1:
            raise ValueError("winning_minislot must be a 1-based index")
        if self.contenders < 0:
            raise ValueError("contenders must be nonnegative")


@dataclass(frozen=True)
class PolicyConfig:
    """Which policy runs and its contention parameters.

    Attributes:
        kind: one of Centralized, CadsUniform, CadsOptimal, CadsLinear, Irds.
        m_slots: number of contention mini-slots M.
        tau: mini-slot duration as a fraction of the slot; M * tau must stay
            below 1 so the data phase is never consumed entirely.
        nu: instantaneous interference cap (infinity disables it).
        w_max: weight cap for the linear mapping; None selects a running
            estimate targeting an exceedance probability of 1 / M.
        reservoir_size: per-device sample count backing the empirical weight
            distribution used by the uniform and fitted mappings.
    """

    kind: str = "Centralized"
    m_slots: int = 200
    tau: float = 1e-4
    nu: float = np.inf
    w_max: float | None = None
    reservoir_size: int = 512

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}, got {self.kind!r}")
        if int(self.m_slots) < 1:
            raise ValueError("m_slots must be at least 1")
        object.__setattr__(self, "m_slots", int(self.m_slots))
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError("tau must be finite and strictly positive")
        if self.m_slots * self.tau >= 1.0:
            raise ValueError("m_slots * tau must be below 1")
        if not self.nu > 0.0:
            raise ValueError("nu must be strictly positive (infinity allowed)")
        if self.w_max is not None and not (np.isfinite(self.w_max) and self.w_max > 0.0):
            raise ValueError("w_max must be strictly positive when given")
        if int(self.reservoir_size) < 1:
            raise ValueError("reservoir_size must be at least 1")
        object.__setattr__(self, "reservoir_size", int(self.reservoir_size))

    @property
    def contention_overhead(self) -> float:
        """Fraction of the slot left for data after the contention phase."""
        if self.kind in ("CadsUniform", "CadsOptimal", "CadsLinear"):
            return 1.0 - self.m_slots * self.tau
        if self.kind == "Irds":
            return 1.0 - self.tau
        return 1.0


def weight(q_i, r_i, z, g_i, power):
    """Scheduling weight q*r - power*z*g (scalar or elementwise on arrays)."""
    out = np.asarray(q_i, dtype=float) * np.asarray(r_i, dtype=float) - (
        float(power) * float(z)
    ) * np.asarray(g_i, dtype=float)
    return float(out) if out.ndim == 0 else out


def max_weight_winner(weights: np.ndarray, feasible: np.ndarray) -> int | None:
    """Lowest-index argmax over devices with nonnegative weight inside feasible.

    Returns None when no device qualifies.
    """
    eligible = feasible & (weights >= 0.0)
    if not eligible.any():
        return None
    masked = np.where(eligible, weights, -np.inf)
    return int(np.argmax(masked))


def schedule_centralized(
    state: NetworkState,
    channel: ChannelState,
    config: PolicyConfig,
    power: float = 1.0,
    noise: float = 1.0,
) -> ScheduleDecision:
    """Schedule the feasible device with the largest weight, or nobody.

    Feasible means weight >= 0 and power * g <= nu. Ties break to the lowest
    device index so runs stay reproducible.
    """
    r = rate(channel.h, channel.i_ext, power, noise)
    w = weight(state.q, r, state.z, channel.g, power)
    feasible = power * channel.g <= config.nu
    winner = max_weight_winner(w, feasible)
    n_cont = int(np.count_nonzero(feasible & (w >= 0.0)))
    if winner is None:
        return ScheduleDecision(None, Outcome.IDLE, None, w, n_cont)
    return ScheduleDecision(winner, Outcome.SUCCESS, None, w, n_cont)


# ---------------------------------------------------------------------------
# Mini-slot mappings


def minislot_uniform(w_i: float, empirical_samples, m_slots: int) -> int:
    """Mini-slot index from the empirical distribution of nonnegative weights.

    Index m satisfies m = clamp(M - floor(M * F(w)), 1, M) where F is the
    empirical CDF over the nonnegative entries of empirical_samples; a
    negative weight maps to M + 1 (sit the slot out). Counting is done in
    integer arithmetic so bin edges are exact.
    """
    m = int(m_slots)
    if m < 1:
        raise ValueError("m_slots must be at least 1")
    if w_i < 0.0:
        return m + 1
    s = np.asarray(empirical_samples, dtype=float).ravel()
    s = s[s >= 0.0]
    if s.size == 0:
        raise ValueError("need at least one nonnegative sample when the weight is nonnegative")
    count = int(np.count_nonzero(s <= w_i))
    return int(np.clip(m - (m * count) // s.size, 1, m))


def linear_minislots(w, w_max: float, m_slots: int):
    """Vectorized linear mapping of weights onto mini-slot indices.

    Bin m collects weights in [(M-m-1)*w_max/M, (M-m)*w_max/M); weights at or
    above w_max*(M-1)/M clamp to mini-slot 1 and negative weights map to M+1.
    """
    if not (np.isfinite(w_max) and w_max > 0.0):
        raise ValueError("w_max must be finite and strictly positive")
    m = int(m_slots)
    w = np.asarray(w, dtype=float)
    idx = np.floor(w * m / w_max)
    picks = np.clip(m - 1.0 - idx, 1, m)
    picks = np.where(w < 0.0, m + 1, picks)
    return picks.astype(np.int64)


def minislot_linear(w_i: float, w_max: float, m_slots: int) -> int:
    """Scalar form of linear_minislots."""
    return int(linear_minislots(np.asarray([w_i]), w_max, m_slots)[0])


@dataclass(frozen=True, eq=False)
class WeightMapper:
    """Threshold mapping for one device: descending a_0=inf > a_1 > ... > a_M=0.

    A weight in [a_m, a_{m-1}) contends in mini-slot m; negative weights map
    to M + 1. The first and last thresholds are pinned (every nonnegative
    weight contends somewhere), only the interior thresholds carry design
    freedom.
    """

    thresholds: np.ndarray
    converged: bool = True

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("thresholds must be a vector of length m_slots + 1")
        if not np.isinf(t[0]):
            raise ValueError("thresholds[0] must be +infinity")
        if t[-1] != 0.0:
            raise ValueError("the last threshold must be exactly 0")
        if np.any(np.diff(t) >= 0.0):
            raise ValueError("thresholds must be strictly decreasing")
        object.__setattr__(self, "thresholds", t)

    @property
    def m_slots(self) -> int:
        return self.thresholds.size - 1

    @property
    def interior(self) -> np.ndarray:
        """Thresholds a_1 .. a_{M-1} (empty when M = 1)."""
        return self.thresholds[1:-1]

    def minislot(self, w_i: float) -> int:
        return int(self.minislots(np.asarray([w_i]))[0])

    def minislots(self, w) -> np.ndarray:
        """Map a weight vector to mini-slot indices under these thresholds."""
        w = np.asarray(w, dtype=float)
        m = self.m_slots
        ascending = np.ascontiguousarray(self.interior[::-1])
        count = np.searchsorted(ascending, w, side="right")
        picks = m - count
        return np.where(w < 0.0, m + 1, picks).astype(np.int64)


class MapperBank:
    """Per-device threshold mappings applied in one vectorized pass."""

    def __init__(self, mappers: Sequence[WeightMapper]):
        if not mappers:
            raise ValueError("need at least one mapper")
        m = mappers[0].m_slots
        if any(mp.m_slots != m for mp in mappers):
            raise ValueError("all mappers must share the same m_slots")
        self.m_slots = m
        self.mappers = list(mappers)
        # row i holds device i's interior thresholds
        self._interior = np.vstack([mp.interior for mp in mappers]) if m > 1 else np.zeros(
            (len(mappers), 0)
        )

    def replace(self, device: int, mapper: WeightMapper) -> None:
        if mapper.m_slots != self.m_slots:
            raise ValueError("mapper m_slots mismatch")
        self.mappers[device] = mapper
        if self.m_slots > 1:
            self._interior[device] = mapper.interior

    def minislots(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        count = (self._interior <= w[:, None]).sum(axis=1)
        picks = self.m_slots - count
        return np.where(w < 0.0, self.m_slots + 1, picks).astype(np.int64)


@dataclass(frozen=True)
class LinearMapper:
    """Linear mapping with a fixed weight cap, shared by all devices."""

    w_max: float
    m_slots: int

    def minislots(self, w) -> np.ndarray:
        return linear_minislots(w, self.w_max, self.m_slots)


class UniformSampleMapper:
    """Uniform mapping backed by an explicit per-device sample set snapshot."""

    def __init__(self, samples: Sequence, m_slots: int):
        self.samples = [np.asarray(s, dtype=float).ravel() for s in samples]
        self.m_slots = int(m_slots)

    def minislots(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[0] != len(self.samples):
            raise ValueError("one sample set per device is required")
        return np.array(
            [
                self.m_slots + 1
                if wi < 0.0
                else minislot_uniform(wi, self.samples[i], self.m_slots)
                for i, wi in enumerate(w)
            ],
            dtype=np.int64,
        )


class WeightReservoir:
    """Sliding per-device history of (rate, interference gain) pairs.

    The stored pairs are re-weighted with the current backlog and virtual
    queue every slot, so the empirical weight distribution is always the one
    conditioned on the present queue state.
    """

    def __init__(self, n_links: int, size: int):
        if size < 1:
            raise ValueError("reservoir size must be at least 1")
        self.size = int(size)
        self._r = np.zeros((n_links, self.size))
        self._g = np.zeros((n_links, self.size))
        self._filled = 0
        self._cursor = 0

    @property
    def filled(self) -> int:
        return self._filled

    def push(self, r_vec: np.ndarray, g_vec: np.ndarray) -> None:
        """Record one slot's (rate, gain) column, evicting the oldest entry."""
        self._r[:, self._cursor] = r_vec
        self._g[:, self._cursor] = g_vec
        self._cursor = (self._cursor + 1) % self.size
        if self._filled < self.size:
            self._filled += 1

    def weights(self, q: np.ndarray, z: float, power: float) -> np.ndarray:
        """Stored pairs re-weighted at the current (q, z); shape (N, filled)."""
        k = self._filled
        return q[:, None] * self._r[:, :k] - (power * z) * self._g[:, :k]

    def uniform_picks(
        self, w: np.ndarray, q: np.ndarray, z: float, power: float, m_slots: int
    ) -> np.ndarray:
        """Vectorized uniform mapping of each device's weight against its history."""
        m = int(m_slots)
        wres = self.weights(q, z, power)
        nonneg = wres >= 0.0
        below = nonneg & (wres <= w[:, None])
        count = below.sum(axis=1)
        total = np.maximum(nonneg.sum(axis=1), 1)
        picks = np.clip(m - (m * count) // total, 1, m)
        return np.where(w < 0.0, m + 1, picks).astype(np.int64)


# ---------------------------------------------------------------------------
# Fitted threshold mapping


def contention_payoff(mapper: WeightMapper, samples, n_contenders: float) -> float:
    """Expected weight a device secures per slot under symmetric contention.

    The device's weight is drawn from the empirical distribution of samples;
    each of the n_contenders - 1 rivals independently draws from the same
    distribution and uses the same mapping. The device collects its weight
    exactly when every rival lands strictly later (a rival below a_m maps
    past mini-slot m, negative rival weights sit out entirely).
    """
    w = np.sort(np.asarray(samples, dtype=float).ravel())
    if w.size == 0:
        raise ValueError("sample set must be nonempty")
    n = float(n_contenders)
    if n < 1.0:
        raise ValueError("n_contenders must be at least 1")
    prefix = np.concatenate(([0.0], np.cumsum(w)))
    t = mapper.thresholds
    total = w.size
    payoff = 0.0
    for m in range(1, mapper.m_slots + 1):
        lo, hi = t[m], t[m - 1]
        i0 = np.searchsorted(w, lo, side="left")
        i1 = total if np.isinf(hi) else np.searchsorted(w, hi, side="left")
        mass = (prefix[i1] - prefix[i0]) / total
        survive = i0 / total  # empirical P(rival weight < lo)
        payoff += mass * survive ** (n - 1.0)
    return float(payoff)


def _quantile_ladder(samples: np.ndarray, m_slots: int) -> np.ndarray | None:
    """Strictly descending interior thresholds at uniform quantile levels."""
    levels = (m_slots - np.arange(1, m_slots)) / m_slots
    if samples.size:
        ladder = np.quantile(samples, levels)
        if np.all(np.diff(ladder) < 0.0) and ladder[-1] > 0.0:
            return ladder
        top = float(samples.max())
        if top > 0.0:
            return top * levels
    return None


def fit_optimal_mapper(
    weight_sample_set,
    m_slots: int,
    n_contenders: float,
    n_candidates: int = 128,
    max_sweeps: int = 64,
    rel_tol: float = 1e-9,
    init_interior=None,
) -> WeightMapper:
    """Fit interior thresholds maximizing the expected scheduled weight.

    Runs coordinate ascent over candidate thresholds taken from the empirical
    quantiles of the nonnegative samples; each move re-evaluates only the two
    bins the moved threshold borders. The endpoint thresholds stay pinned at
    +infinity and 0. If a full sweep still improves the objective after
    max_sweeps sweeps, the best thresholds so far are returned with
    converged=False.

    Args:
        init_interior: optional strictly decreasing positive vector of length
            m_slots - 1 to start the ascent from (e.g. the previous fit when
            refitting on a drifting sample); by default the ascent starts at
            the uniform quantile ladder.
    """
    w = np.sort(np.asarray(weight_sample_set, dtype=float).ravel())
    if w.size == 0:
        raise ValueError("sample set must be nonempty")
    m = int(m_slots)
    if m < 1:
        raise ValueError("m_slots must be at least 1")
    n = float(n_contenders)
    if n < 1.0:
        raise ValueError("n_contenders must be at least 1")
    if m == 1:
        return WeightMapper(np.array([np.inf, 0.0]), converged=True)

    total = w.size
    prefix = np.concatenate(([0.0], np.cumsum(w)))
    pos = w[w > 0.0]

    if init_interior is not None:
        interior = np.asarray(init_interior, dtype=float).copy()
        if interior.shape != (m - 1,):
            raise ValueError("init_interior must have length m_slots - 1")
        if np.any(np.diff(interior) >= 0.0) or interior[-1] <= 0.0:
            raise ValueError("init_interior must be strictly decreasing and positive")
    else:
        interior = _quantile_ladder(pos, m)
    if interior is None:
        # Degenerate sample set (no positive spread): the objective is flat,
        # return an arbitrary valid ladder at uniform levels.
        levels = (m - np.arange(1, m)) / m
        return WeightMapper(np.concatenate(([np.inf], levels, [0.0])), converged=True)

    candidates = np.unique(np.quantile(pos, np.linspace(0.0, 1.0, n_candidates)))
    candidates = candidates[candidates > 0.0]
    if candidates.size == 0:
        candidates = interior.copy()

    def segment_payoff(a_vals: np.ndarray, hi: float, lo: float) -> np.ndarray:
        """Objective contribution of the two bins bordering threshold a_vals."""
        ia = np.searchsorted(w, a_vals, side="left")
        ihi = total if np.isinf(hi) else int(np.searchsorted(w, hi, side="left"))
        ilo = int(np.searchsorted(w, lo, side="left"))
        upper = (prefix[ihi] - prefix[ia]) / total * (ia / total) ** (n - 1.0)
        lower = (prefix[ia] - prefix[ilo]) / total * (ilo / total) ** (n - 1.0)
        return upper + lower

    scale = max(float(np.mean(np.abs(w))), 1e-12)
    converged = False
    for _ in range(max_sweeps):
        improved = 0.0
        for j in range(m - 1):
            hi = np.inf if j == 0 else interior[j - 1]
            lo = 0.0 if j == m - 2 else interior[j + 1]
            ok = (candidates > lo) & (candidates < hi)
            if not ok.any():
                continue
            cand = candidates[ok]
            current = segment_payoff(np.asarray([interior[j]]), hi, lo)[0]
            gains = segment_payoff(cand, hi, lo)
            best = int(np.argmax(gains))
            if gains[best] > current:
                improved += gains[best] - current
                interior[j] = cand[best]
        if improved <= rel_tol * scale:
            converged = True
            break
    thresholds = np.concatenate(([np.inf], interior, [0.0]))
    return WeightMapper(thresholds, converged=converged)


# ---------------------------------------------------------------------------
# Contention resolution


def resolve_contention(
    picks: np.ndarray, m_slots: int
) -> tuple[int | None, Outcome, int | None, int]:
    """Resolve one contention round from every device's mini-slot pick.

    A device with pick > m_slots sits out. The earliest pick wins if it is
    unique; any tie at the earliest pick is a collision and the slot carries
    no data (later contenders heard the earlier signal and deferred).

    Returns:
        (winner index or None, outcome, winning mini-slot or None, contender count).
    """
    contending = picks <= m_slots
    n_cont = int(np.count_nonzero(contending))
    if n_cont == 0:
        return None, Outcome.IDLE, None, 0
    active = np.where(contending, picks, m_slots + 1)
    first = int(active.min())
    at_first = np.flatnonzero(active == first)
    if at_first.size == 1:
        return int(at_first[0]), Outcome.SUCCESS, first, n_cont
    return None, Outcome.COLLISION, None, n_cont


def schedule_cads(
    state: NetworkState,
    channel: ChannelState,
    config: PolicyConfig,
    mapper,
    power: float = 1.0,
    noise: float = 1.0,
) -> ScheduleDecision:
    """One contention round: map weights to mini-slots, earliest unique pick wins.

    The mapper must expose minislots(weights) -> integer picks in 1..M+1.
    Devices violating the instantaneous cap are forced out of contention. The
    winner's payload and interference are scaled by the caller using
    config.contention_overhead; the decision itself only names the winner.
    """
    r = rate(channel.h, channel.i_ext, power, noise)
    w = weight(state.q, r, state.z, channel.g, power)
    picks = np.asarray(mapper.minislots(w), dtype=np.int64)
    feasible = power * channel.g <= config.nu
    picks = np.where(feasible, picks, config.m_slots + 1)
    winner, outcome, slot, n_cont = resolve_contention(picks, config.m_slots)
    return ScheduleDecision(winner, outcome, slot, w, n_cont)


# ---------------------------------------------------------------------------
# Single-round random access with persistence


def transmit_probability(w):
    """Sigmoid persistence probability exp(w) / (exp(w) + 1), overflow safe."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    pos = w >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-w[pos]))
    e = np.exp(w[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def irds_step(
    prev_scheduled: int | None,
    contends: np.ndarray,
    transmit: np.ndarray,
    feasible: np.ndarray,
) -> int | None:
    """Pure decision rule for the random-access scheduler.

    contends and transmit are boolean vectors (the per-device contention and
    persistence draws). A device transmits when it is the unique contender,
    nobody else transmitted last slot, and its persistence draw allows it;
    when contention is not uniquely won, last slot's transmitter keeps the
    channel while its own persistence draw stays on. At most one device
    transmits in every case.
    """
    idx = np.flatnonzero(contends)
    if idx.size == 1:
        i = int(idx[0])
        if (prev_scheduled is None or prev_scheduled == i) and transmit[i] and feasible[i]:
            return i
        if (
            prev_scheduled is not None
            and prev_scheduled != i
            and transmit[prev_scheduled]
            and feasible[prev_scheduled]
        ):
            return prev_scheduled
        return None
    if prev_scheduled is not None and transmit[prev_scheduled] and feasible[prev_scheduled]:
        return prev_scheduled
    return None


def schedule_irds(
    state: NetworkState,
    channel: ChannelState,
    config: PolicyConfig,
    prev_decision: ScheduleDecision | None,
    rng: np.random.Generator,
    power: float = 1.0,
    noise: float = 1.0,
) -> ScheduleDecision:
    """Single-round contention with Bernoulli(1/N) attempts and sigmoid persistence.

    prev_decision carries who transmitted last slot (None at t = 0). The rng
    is consumed in a fixed order (contention draws, then persistence draws) so
    runs are reproducible.
    """
    n = state.n_links
    r = rate(channel.h, channel.i_ext, power, noise)
    w = weight(state.q, r, state.z, channel.g, power)
    contends = rng.random(n) < (1.0 / n)
    transmit = rng.random(n) < transmit_probability(w)
    feasible = power * channel.g <= config.nu
    prev = prev_decision.scheduled if prev_decision is not None else None
    winner = irds_step(prev, contends, transmit, feasible)
    n_cont = int(np.count_nonzero(feasible & (w >= 0.0)))
    if winner is not None:
        return ScheduleDecision(winner, Outcome.SUCCESS, None, w, n_cont)
    outcome = Outcome.COLLISION if int(contends.sum()) >= 2 else Outcome.IDLE
    return ScheduleDecision(None, outcome, None, w, n_cont)
