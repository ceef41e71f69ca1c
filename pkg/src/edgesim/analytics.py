"""Closed-form contention performance and empirical efficiency estimates.

Collects the analytical results the simulator is checked against: the success
probability of uniform mini-slot contention, the guaranteed fraction of the
maximum weight secured by threshold contention, and a paired estimator of the
weight fraction realized in an actual run.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "success_probability",
    "enumeration_success_probability",
    "mc_success_probability",
    "alpha_bound",
    "simulate_uniform_contention",
    "PairedWeightLog",
    "BetaEstimate",
    "beta_estimate",
]


def _check_counts(n: int, m_slots: int) -> tuple[int, int]:
    n = int(n)
    m = int(m_slots)
    if n < 1:
        raise ValueError("n must be at least 1")
    if m < 1:
        raise ValueError("m_slots must be at least 1")
    return n, m


def success_probability(n: int, m_slots: int) -> float:
    """Probability that uniform contention over M mini-slots ends in success.

    Each of n contenders independently picks one of M mini-slots uniformly;
    the round succeeds when the earliest occupied mini-slot holds exactly one
    contender. The sum runs over the winning mini-slot:

        P = sum_{k=1}^{M} (n / M) * ((M - k) / M)^(n - 1)
    """
    n, m = _check_counts(n, m_slots)
    terms = ((n / m) * ((m - k) / m) ** (n - 1) for k in range(1, m + 1))
    return float(math.fsum(terms))


def enumeration_success_probability(n: int, m_slots: int) -> float:
    """Exact success probability by enumerating all M^n pick profiles.

    Walks every outcome with rational arithmetic, so the result carries no
    floating point error. Intended for small n and M.
    """
    n, m = _check_counts(n, m_slots)
    wins = 0
    for profile in itertools.product(range(1, m + 1), repeat=n):
        first = min(profile)
        if profile.count(first) == 1:
            wins += 1
    return float(Fraction(wins, m**n))


def mc_success_probability(
    n: int, m_slots: int, trials: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimate of the contention success probability.

    Returns:
        (estimate, standard error).
    """
    n, m = _check_counts(n, m_slots)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    picks = rng.integers(1, m + 1, size=(trials, n))
    first = picks.min(axis=1)
    at_first = (picks == first[:, None]).sum(axis=1)
    p_hat = float(np.mean(at_first == 1))
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / trials)
    return p_hat, se


def alpha_bound(n: int, m_slots: int) -> float:
    """Guaranteed fraction of the expected maximum weight under threshold contention.

    With n contenders drawing i.i.d. weights and M >= n mini-slots, threshold
    contention secures at least this fraction of E[max weight] regardless of
    the weight distribution:

        alpha(n, M) = (1 - (n / M)^n) / (1 + 1 / (n - 1))^(n - 1)

    For n = 1 the bound reduces to 1 - 1/M.
    """
    n, m = _check_counts(n, m_slots)
    if m < n:
        raise ValueError("the bound requires m_slots >= n")
    if n == 1:
        return 1.0 - 1.0 / m
    return float((1.0 - (n / m) ** n) / (1.0 + 1.0 / (n - 1)) ** (n - 1))


def simulate_uniform_contention(
    n: int,
    m_slots: int,
    trials: int,
    rng: np.random.Generator,
    weights: str = "uniform",
) -> tuple[float, float]:
    """Contention rounds with uniform quantile mapping on i.i.d. weights.

    Each contender draws a weight W from the named distribution and contends
    in mini-slot clamp(M - floor(M * F(W)), 1, M) using the true CDF F. The
    round's payoff is the winner's weight, or zero on a collision or an idle
    round. Drawing W through its quantile function couples the weight and the
    mini-slot pick exactly.

    Args:
        weights: "uniform" for U(0, 1) or "exponential" for Exp(1).

    Returns:
        (mean scheduled weight, mean maximum weight) over the trials.
    """
    n, m = _check_counts(n, m_slots)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    u = rng.random((trials, n))
    if weights == "uniform":
        w = u
    elif weights == "exponential":
        w = -np.log1p(-u)
    else:
        raise ValueError("weights must be 'uniform' or 'exponential'")
    picks = np.clip(m - np.floor(m * u).astype(np.int64), 1, m)
    first = picks.min(axis=1)
    at_first = picks == first[:, None]
    unique = at_first.sum(axis=1) == 1
    scheduled = np.where(unique, (w * at_first).sum(axis=1), 0.0)
    return float(scheduled.mean()), float(w.max(axis=1).mean())


@dataclass(frozen=True, eq=False)
class PairedWeightLog:
    """Per-slot weight pair from one run: realized versus best feasible.

    Attributes:
        scheduled: weight actually secured each slot, including any contention
            overhead scaling; zero on idle and collision slots.
        max_feasible: the largest nonnegative feasible weight available that
            slot (zero when no device qualified).
    """

    scheduled: np.ndarray
    max_feasible: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scheduled, dtype=float)
        f = np.asarray(self.max_feasible, dtype=float)
        if s.shape != f.shape or s.ndim != 1 or s.size == 0:
            raise ValueError("scheduled and max_feasible must be equal-length nonempty vectors")
        object.__setattr__(self, "scheduled", s)
        object.__setattr__(self, "max_feasible", f)

    @property
    def n_slots(self) -> int:
        return self.scheduled.size


@dataclass(frozen=True)
class BetaEstimate:
    """Realized fraction of the best feasible weight, with a bootstrap interval."""

    beta: float
    ci_low: float
    ci_high: float
    n_slots: int


def beta_estimate(
    run_log: PairedWeightLog,
    n_boot: int = 500,
    confidence: float = 0.95,
    seed: int = 0,
) -> BetaEstimate:
    """Ratio-of-means estimate of the secured weight fraction.

    beta is mean(scheduled) / mean(max_feasible) over the logged slots; the
    confidence interval comes from a paired percentile bootstrap over slots.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if n_boot < 1:
        raise ValueError("n_boot must be at least 1")
    s = run_log.scheduled
    f = run_log.max_feasible
    denom = float(f.mean())
    if denom <= 0.0:
        raise ValueError("max_feasible is identically zero, the ratio is undefined")
    point = float(s.mean()) / denom
    rng = np.random.default_rng(seed)
    t = s.size
    reps = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, t, size=t)
        fm = f[idx].mean()
        reps[b] = s[idx].mean() / fm if fm > 0.0 else np.nan
    reps = reps[np.isfinite(reps)]
    if reps.size == 0:
        return BetaEstimate(point, float("nan"), float("nan"), t)
    tail = 0.5 * (1.0 - confidence)
    lo, hi = np.quantile(reps, [tail, 1.0 - tail])
    return BetaEstimate(point, float(lo), float(hi), t)
