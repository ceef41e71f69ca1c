"""Throughput boundary computation by dual decomposition.

The achievable long-run rate region is traced one boundary point at a time:
fix target rates for all devices but one (the pivot), maximize the pivot's
rate subject to meeting the targets and the average interference budget, and
read the answer off a stationary per-state schedule parameterized by dual
multipliers. The multipliers are fit by projected subgradient ascent on a
frozen sample of channel states, so every point along a sweep sees the same
randomness and the traced boundaries nest cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import FadingSpec, rate

__all__ = [
    "DualPoint",
    "SolverOptions",
    "BoundaryPoint",
    "dual_scheduler",
    "solve_boundary_point",
    "solve_boundary_point_unconstrained",
    "trace_boundary",
]

STATUS_CONVERGED = "Converged"
STATUS_INFEASIBLE = "Infeasible"
STATUS_MAX_ITERS = "MaxIters"


@dataclass(frozen=True, eq=False)
class DualPoint:
    """Dual multipliers defining a stationary per-state schedule.

    Attributes:
        lam: per-device rate multipliers; the pivot entry is pinned to 1 so
            the schedule maximizes the pivot rate plus the weighted others.
        mu: multiplier on the average interference budget.
        pivot: index of the device whose rate is being maximized.
    """

    lam: np.ndarray
    mu: float
    pivot: int

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("lam must be a nonempty vector")
        if not (0 <= self.pivot < lam.size):
            raise ValueError("pivot out of range")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
            raise ValueError("lam must be finite and nonnegative")
        if lam[self.pivot] != 1.0:
            raise ValueError("lam at the pivot must equal 1")
        if not (np.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError("mu must be finite and nonnegative")
        object.__setattr__(self, "lam", lam)

    @property
    def n_links(self) -> int:
        return self.lam.size


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the subgradient solver.

    Attributes:
        batch: number of frozen channel states the expectations average over.
        s0: initial step size; step k uses s0 / sqrt(k).
        tol: relative slack for declaring the targets met.
        patience: consecutive passing checks required before stopping.
        max_iters: iteration budget.
        lambda_cap: any multiplier crossing this cap flags the targets as
            unsupportable.
        seed: seed for the frozen state sample; keep it fixed across sweep
            points so curves share common random numbers.
        power: transmit power of every device.
    """

    batch: int = 10_000
    s0: float = 1.0
    tol: float = 1e-2
    patience: int = 5
    max_iters: int = 1500
    lambda_cap: float = 1e3
    seed: int = 0
    power: float = 1.0

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if not self.s0 > 0.0:
            raise ValueError("s0 must be positive")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.lambda_cap > 0.0:
            raise ValueError("lambda_cap must be positive")
        if not self.power > 0.0:
            raise ValueError("power must be positive")


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    """One solved point on the rate region boundary.

    Attributes:
        rates: long-run per-device rates under the fitted schedule; the pivot
            entry is the maximized rate, the others should meet their targets.
        dual: the fitted multipliers.
        interference: average interference delivered to the shared receiver.
        status: Converged, Infeasible, or MaxIters.
        iterations: subgradient iterations consumed.
        residuals: target minus achieved rate per device (zero at the pivot);
            positive entries are shortfalls.
        interference_residual: average interference minus the budget, zero
            when the budget is disabled.
    """

    rates: np.ndarray
    dual: DualPoint
    interference: float
    status: str
    iterations: int
    residuals: np.ndarray
    interference_residual: float

    @property
    def pivot_rate(self) -> float:
        return float(self.rates[self.dual.pivot])


def _winner_permutation(n: int, pivot: int) -> np.ndarray:
    """Column order that breaks weight ties toward the pivot, then low index."""
    others = [j for j in range(n) if j != pivot]
    return np.asarray([pivot] + others, dtype=np.int64)


def dual_scheduler(
    channel,
    dual: DualPoint,
    power: float = 1.0,
    noise: float = 1.0,
    nu: float = np.inf,
) -> int | None:
    """Schedule one slot under fixed dual multipliers.

    The weight of device j is lam_j * R_j - mu * power * g_j (the pivot's lam
    is 1). Devices with negative weight or instantaneous interference above
    nu are excluded; among the rest the largest weight wins, ties preferring
    the pivot and then the lowest index. Returns None when nobody qualifies.
    """
    r = rate(channel.h, channel.i_ext, power, noise)
    w = dual.lam * r - dual.mu * power * channel.g
    eligible = (w >= 0.0) & (power * channel.g <= nu)
    if not eligible.any():
        return None
    masked = np.where(eligible, w, -np.inf)
    perm = _winner_permutation(dual.n_links, dual.pivot)
    return int(perm[np.argmax(masked[perm])])


def _frozen_batch(spec: FadingSpec, opts: SolverOptions):
    """Sample the frozen channel states the solver averages over."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=opts.seed, spawn_key=(7,)))
    b, n = opts.batch, spec.n_links
    h = rng.exponential(spec.direct_mean, size=(b, n))
    g = rng.exponential(spec.interference_mean, size=(b, n))
    if spec.n_external:
        ext = rng.exponential(spec.external_means[None, :, None], size=(b, spec.n_external, n))
        i_ext = spec.external_power * ext.sum(axis=1)
    else:
        i_ext = np.zeros((b, n))
    r = rate(h, i_ext, opts.power, spec.noise_power)
    return r, g


def _batch_estimates(
    r: np.ndarray,
    g: np.ndarray,
    lam: np.ndarray,
    mu: float,
    power: float,
    nu: float,
    perm: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Per-device service rates and mean interference under (lam, mu)."""
    batch = r.shape[0]
    w = r * lam - (mu * power) * g
    eligible = (w >= 0.0) & (power * g <= nu)
    masked = np.where(eligible, w, -np.inf)
    win_col = np.argmax(masked[:, perm], axis=1)
    winner = perm[win_col]
    rows = np.flatnonzero(masked[np.arange(batch), winner] > -np.inf)
    service = np.zeros(lam.size)
    np.add.at(service, winner[rows], r[rows, winner[rows]])
    interference = float((power * g[rows, winner[rows]]).sum()) / batch
    return service / batch, interference


def solve_boundary_point(
    spec: FadingSpec,
    targets,
    pivot: int,
    gamma: float = np.inf,
    nu: float = np.inf,
    solver_opts: SolverOptions | None = None,
    warm_start: DualPoint | None = None,
) -> BoundaryPoint:
    """Maximize the pivot's rate subject to rate targets and the budgets.

    Projected subgradient ascent on the dual of the boundary problem: each
    iteration schedules the whole frozen batch under the current multipliers,
    then moves every multiplier along its constraint violation with step
    s0 / sqrt(k). Reported rates are tail averages over a window that restarts
    whenever the iteration count hits a power of two, which discards the early
    transient without fixing a window length in advance.

    Args:
        targets: per-device rate targets; the pivot entry is ignored.
        gamma: average interference budget (infinity disables it).
        nu: instantaneous interference cap (infinity disables it).
        warm_start: multipliers to start from, e.g. the previous point of a
            boundary sweep.

    Returns:
        A BoundaryPoint whose status reports Converged when the tail-averaged
        rates met every target within tolerance, Infeasible when a multiplier
        blew past the cap, and MaxIters otherwise.
    """
    opts = solver_opts if solver_opts is not None else SolverOptions()
    r, g = _frozen_batch(spec, opts)
    return _solve_core(r, g, targets, pivot, gamma, nu, opts, warm_start)


def _solve_core(
    r: np.ndarray,
    g: np.ndarray,
    targets,
    pivot: int,
    gamma: float,
    nu: float,
    opts: SolverOptions,
    warm_start: DualPoint | None,
) -> BoundaryPoint:
    targets = np.asarray(targets, dtype=float).copy()
    n = r.shape[1]
    if targets.shape != (n,):
        raise ValueError("targets must have one entry per device")
    if not (0 <= pivot < n):
        raise ValueError("pivot out of range")
    targets[pivot] = 0.0
    if not np.all(np.isfinite(targets)) or np.any(targets < 0.0):
        raise ValueError("targets must be finite and nonnegative")
    if not gamma > 0.0:
        raise ValueError("gamma must be positive (infinity allowed)")
    if not nu > 0.0:
        raise ValueError("nu must be positive (infinity allowed)")

    perm = _winner_permutation(n, pivot)
    others = perm[1:]

    if warm_start is not None:
        if warm_start.pivot != pivot or warm_start.n_links != n:
            raise ValueError("warm start does not match this problem")
        lam = warm_start.lam.copy()
        mu = float(warm_start.mu)
    else:
        lam = np.zeros(n)
        lam[pivot] = 1.0
        mu = 0.0
    if np.isinf(gamma):
        mu = 0.0

    acc_service = np.zeros(n)
    acc_intf = 0.0
    acc_n = 0
    streak = 0
    status = STATUS_MAX_ITERS
    iterations = opts.max_iters

    for k in range(1, opts.max_iters + 1):
        service, interference = _batch_estimates(r, g, lam, mu, opts.power, nu, perm)

        if k & (k - 1) == 0:  # window restart at powers of two
            acc_service[:] = 0.0
            acc_intf = 0.0
            acc_n = 0
        acc_service += service
        acc_intf += interference
        acc_n += 1
        avg_service = acc_service / acc_n
        avg_intf = acc_intf / acc_n

        step = opts.s0 / np.sqrt(k)
        lam[others] = np.maximum(lam[others] + step * (targets[others] - service[others]), 0.0)
        if not np.isinf(gamma):
            mu = max(mu + step * (interference - gamma), 0.0)

        if np.any(lam[others] > opts.lambda_cap):
            status = STATUS_INFEASIBLE
            iterations = k
            break

        met = np.all(avg_service[others] >= targets[others] * (1.0 - opts.tol))
        if not np.isinf(gamma):
            met = met and avg_intf <= gamma * (1.0 + opts.tol)
        streak = streak + 1 if met else 0
        if streak >= opts.patience:
            status = STATUS_CONVERGED
            iterations = k
            break

    avg_service = acc_service / max(acc_n, 1)
    avg_intf = acc_intf / max(acc_n, 1)
    residuals = targets - avg_service
    residuals[pivot] = 0.0
    dual = DualPoint(lam=lam, mu=mu, pivot=pivot)
    intf_residual = 0.0 if np.isinf(gamma) else float(avg_intf - gamma)
    return BoundaryPoint(
        rates=avg_service,
        dual=dual,
        interference=float(avg_intf),
        status=status,
        iterations=iterations,
        residuals=residuals,
        interference_residual=intf_residual,
    )


def solve_boundary_point_unconstrained(
    spec: FadingSpec,
    targets,
    pivot: int,
    solver_opts: SolverOptions | None = None,
    warm_start: DualPoint | None = None,
) -> BoundaryPoint:
    """Boundary point with both interference budgets disabled."""
    return solve_boundary_point(
        spec,
        targets,
        pivot,
        gamma=np.inf,
        nu=np.inf,
        solver_opts=solver_opts,
        warm_start=warm_start,
    )


def trace_boundary(
    spec: FadingSpec,
    pivot: int,
    alpha_grid,
    gamma: float = np.inf,
    nu: float = np.inf,
    solver_opts: SolverOptions | None = None,
) -> list[BoundaryPoint]:
    """Solve a sweep of boundary points, warm starting each from the last.

    Args:
        alpha_grid: array of shape (k, n_links); row k holds the rate targets
            of the k-th point (pivot entries ignored).

    Returns:
        One BoundaryPoint per row, in order.
    """
    grid = np.atleast_2d(np.asarray(alpha_grid, dtype=float))
    if grid.shape[1] != spec.n_links:
        raise ValueError("alpha_grid rows must have one entry per device")
    opts = solver_opts if solver_opts is not None else SolverOptions()
    r, g = _frozen_batch(spec, opts)
    points: list[BoundaryPoint] = []
    warm: DualPoint | None = None
    for row in grid:
        point = _solve_core(r, g, row, pivot, gamma, nu, opts, warm_start=warm)
        points.append(point)
        warm = point.dual
    return points
