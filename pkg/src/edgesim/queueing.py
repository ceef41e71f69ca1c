"""Real per-device queues, the shared virtual interference queue, and flow control.

Queue values are real (fractional bits). Both queue updates use truncated
subtraction, so nonnegativity holds after every slot by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .schedulers import ScheduleDecision

__all__ = [
    "NetworkState",
    "FlowParams",
    "flow_control",
    "flow_control_vector",
    "advance_queues",
    "golden_section_max",
]

#: Name of the built-in proportional-fair utility u(x) = log(1 + x).
LOG_UTILITY = "log1p"


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Backlogs at one slot: per-device queues q, virtual queue z, slot index t."""

    q: np.ndarray
    z: float
    t: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1:
            raise ValueError("q must be a 1-d vector")
        if not np.all(np.isfinite(q)) or np.any(q < 0.0):
            raise ValueError("queue backlogs must be finite and nonnegative")
        if not (np.isfinite(self.z) and self.z >= 0.0):
            raise ValueError("virtual queue must be finite and nonnegative")
        if int(self.t) < 0:
            raise ValueError("slot index must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "t", int(self.t))

    @property
    def n_links(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class FlowParams:
    """Flow controller parameters.

    Attributes:
        v: the utility weight; larger values admit more aggressively.
        a_max: per-slot admission cap.
        utility: either the string "log1p" for u(x) = log(1 + x), or any
            concave increasing callable with u(0) = 0 (maximized numerically).
    """

    v: float = 100.0
    a_max: float = 100.0
    utility: str | Callable[[float], float] = LOG_UTILITY

    def __post_init__(self):
        if not (np.isfinite(self.v) and self.v > 0.0):
            raise ValueError("v must be finite and strictly positive")
        if not (np.isfinite(self.a_max) and self.a_max > 0.0):
            raise ValueError("a_max must be finite and strictly positive")
        if isinstance(self.utility, str) and self.utility != LOG_UTILITY:
            raise ValueError(f"unknown utility name {self.utility!r}")

    def utility_value(self, x):
        """Evaluate the configured utility at x (vectorized for the built-in)."""
        if self.utility == LOG_UTILITY:
            return np.log1p(x)
        f = self.utility
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return float(f(float(arr)))
        return np.array([f(float(v)) for v in arr])


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-9) -> float:
    """Return the maximizer of a unimodal f on [lo, hi] to absolute tolerance tol."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def flow_control(q_i: float, params: FlowParams) -> float:
    """Admitted bits for one device this slot.

    Maximizes v*u(x) - q_i*x over x in [0, a_max]. For the built-in log
    utility the unique maximizer has the closed form clamp(v/q - 1, 0, a_max)
    when q > 0; when q = 0 the objective is increasing, so the cap is returned.
    Generic concave utilities are maximized by golden-section search.
    """
    if not np.isfinite(q_i) or q_i < 0.0:
        raise ValueError("queue backlog must be finite and nonnegative")
    if params.utility == LOG_UTILITY:
        if q_i == 0.0:
            return params.a_max
        return float(np.clip(params.v / q_i - 1.0, 0.0, params.a_max))
    if q_i == 0.0:
        # u is increasing, so the penalty-free objective is maximized at the cap.
        return params.a_max
    u = params.utility
    x = golden_section_max(lambda a: params.v * u(a) - q_i * a, 0.0, params.a_max)
    # The optimum can sit on the boundary; keep whichever candidate wins.
    candidates = (0.0, x, params.a_max)
    values = [params.v * u(a) - q_i * a for a in candidates]
    return float(candidates[int(np.argmax(values))])


def flow_control_vector(q: np.ndarray, params: FlowParams) -> np.ndarray:
    """Vectorized flow_control over a queue vector (closed form for log utility)."""
    if params.utility == LOG_UTILITY:
        with np.errstate(divide="ignore"):
            raw = np.where(q > 0.0, params.v / np.where(q > 0.0, q, 1.0) - 1.0, params.a_max)
        return np.clip(raw, 0.0, params.a_max)
    return np.array([flow_control(float(qi), params) for qi in q])


def apply_slot_update(
    q: np.ndarray,
    z: float,
    scheduled: int | None,
    service_bits: float,
    interference: float,
    admitted: np.ndarray,
    gamma: float,
) -> float:
    """In-place single-slot queue update; returns the new virtual queue value.

    q[i] <- max(q[i] - service, 0) + admitted[i] with service nonzero only for
    the scheduled device; z <- max(z - gamma + interference, 0). The engine
    calls this directly; advance_queues wraps it functionally.
    """
    if scheduled is not None:
        q[scheduled] = max(q[scheduled] - service_bits, 0.0)
    q += admitted
    if np.isinf(gamma):
        return 0.0
    return max(z - gamma + interference, 0.0)


def advance_queues(
    state: NetworkState,
    decision: "ScheduleDecision",
    rates: np.ndarray,
    admitted: np.ndarray,
    g: np.ndarray,
    power: float,
    gamma: float,
    service_scale: float = 1.0,
) -> NetworkState:
    """One-slot update of both queues.

    The scheduled device (if any) drains service_scale * rates[i] bits and
    adds service_scale * power * g[i] to the virtual queue arrival;
    service_scale carries any contention-phase overhead (1 for the
    centralized scheduler). Idle and collision slots drain nothing.

    Returns a new NetworkState at slot t + 1; the input state is not modified.
    """
    n = state.n_links
    rates = np.asarray(rates, dtype=float)
    admitted = np.asarray(admitted, dtype=float)
    g = np.asarray(g, dtype=float)
    if rates.shape != (n,) or admitted.shape != (n,) or g.shape != (n,):
        raise ValueError("rates, admitted and g must all have length n_links")
    q = state.q.copy()
    i = decision.scheduled
    service = 0.0 if i is None else service_scale * rates[i]
    interference = 0.0 if i is None else service_scale * power * g[i]
    z = apply_slot_update(q, state.z, i, service, interference, admitted, gamma)
    return NetworkState(q=q, z=z, t=state.t + 1)
