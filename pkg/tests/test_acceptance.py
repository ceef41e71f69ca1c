"""Acceptance gate: end-to-end behavioral criteria at fixed seeds and scales.

Each test prints one PASS/FAIL line with its measured quantities so a plain
pytest -s run doubles as an acceptance report.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
from scipy import stats

from edgesim.analytics import (
    alpha_bound,
    enumeration_success_probability,
    mc_success_probability,
    simulate_uniform_contention,
    success_probability,
)
from edgesim.channel import FadingSpec, sample_block
from edgesim.engine import (
    CHANNEL_BLOCK,
    RunConfig,
    _link_rngs,
    run,
    sweep,
)
from edgesim.queueing import FlowParams
from edgesim.schedulers import PolicyConfig, WeightReservoir
from edgesim.stability import (
    STATUS_CONVERGED,
    SolverOptions,
    solve_boundary_point_unconstrained,
    trace_boundary,
)


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def desk_spec(n_links=20):
    return FadingSpec(
        n_links=n_links,
        direct_mean=2.0,
        interference_mean=1.0,
        n_external=20,
        external_means=np.linspace(0.1, 0.3, 20),
    )


def desk_config(kind, seed, horizon=200_000, gamma=0.1, nu=np.inf, v=100.0, m_slots=40, tau=1e-4):
    return RunConfig(
        fading=desk_spec(),
        policy=PolicyConfig(kind=kind, m_slots=m_slots, tau=tau, nu=nu),
        flow=FlowParams(v=v, a_max=100.0),
        gamma=gamma,
        horizon=horizon,
        seed=seed,
        log_queues=1,
    )


def replay_gains(config):
    """Independent channel replay yielding the gain matrix block by block."""
    rngs = _link_rngs(config.seed, 0, config.fading.n_links)
    t = 0
    while t < config.horizon:
        _, g_blk, _ = sample_block(config.fading, rngs, CHANNEL_BLOCK)
        yield t, g_blk[: min(CHANNEL_BLOCK, config.horizon - t)]
        t += CHANNEL_BLOCK


def test_contention_success_probability_exact_and_monte_carlo():
    start = time.perf_counter()
    worst_exact = 0.0
    for n in range(1, 5):
        for m in range(1, 7):
            gap = abs(success_probability(n, m) - enumeration_success_probability(n, m))
            worst_exact = max(worst_exact, gap)
    mc_ok = True
    worst_sigma = 0.0
    rng = np.random.default_rng(101)
    for n, m in ((2, 4), (5, 10), (10, 20), (20, 40)):
        p_hat, se = mc_success_probability(n, m, 100_000, rng)
        sigma = abs(p_hat - success_probability(n, m)) / max(se, 1e-12)
        worst_sigma = max(worst_sigma, sigma)
        mc_ok &= sigma <= 4.0
    elapsed = time.perf_counter() - start
    ok = worst_exact <= 1e-12 and mc_ok and elapsed < 10.0
    report(
        "criterion 1",
        ok,
        f"enumeration gap {worst_exact:.2e} (<= 1e-12), Monte Carlo within "
        f"{worst_sigma:.2f} standard errors (<= 4), {elapsed:.1f}s (< 10s)",
    )


def test_scheduled_weight_lower_bound_grid():
    start = time.perf_counter()
    rng = np.random.default_rng(103)
    violations = 0
    checked = 0
    worst_margin = np.inf
    for weights in ("exponential", "uniform"):
        for n in (1, 2, 3, 5, 8, 12, 20):
            m_values = sorted({n, math.ceil(1.5 * n), 2 * n, 3 * n, 60})
            for m in m_values:
                if m < n or m > 60:
                    continue
                sched, best = simulate_uniform_contention(n, m, 100_000, rng, weights=weights)
                margin = sched - alpha_bound(n, m) * best
                worst_margin = min(worst_margin, margin)
                violations += margin < 0.0
                checked += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 30.0
    report(
        "criterion 2",
        ok,
        f"{checked} (n, M) pairs x 2 weight families, {violations} violations, "
        f"worst margin {worst_margin:+.4f}, {elapsed:.1f}s (< 30s)",
    )


def test_interference_guarantees_under_finite_budget():
    gamma, nu = 0.1, 1.0
    details = []
    ok = True
    for kind in ("Centralized", "CadsUniform", "Irds"):
        start = time.perf_counter()
        config = desk_config(kind, seed=21, gamma=gamma, nu=nu)
        result = run(config)
        scale = config.policy.contention_overhead
        violations = 0
        delivered = 0.0
        for t0, g_blk in replay_gains(config):
            for row in range(g_blk.shape[0]):
                winner = int(result.trace["scheduled"][t0 + row])
                if winner >= 0:
                    gain = config.power * g_blk[row, winner]
                    violations += gain > nu
                    delivered += scale * gain
        full_avg = delivered / config.horizon
        elapsed = time.perf_counter() - start
        run_ok = (
            violations == 0
            and full_avg <= 1.05 * gamma
            and result.summary.avg_interference <= 1.05 * gamma
            and elapsed < 60.0
        )
        ok &= run_ok
        details.append(f"{kind}: 0 cap hits, avg {full_avg:.4f}, {elapsed:.0f}s")
    report(
        "criterion 3",
        ok,
        "; ".join(details) + f" (every run <= {1.05 * gamma:.3f} and < 60s)",
    )


def test_centralized_tradeoff_in_design_parameter():
    base = desk_config("Centralized", seed=33, horizon=100_000)
    v_values = [5.0, 10.0, 20.0, 50.0, 100.0]
    results = sweep(base, "V", v_values)
    utilities = [r.summary.sum_utility for r in results]
    queues = [r.summary.avg_queue for r in results]
    nondecreasing = all(b >= a * 0.98 for a, b in zip(utilities, utilities[1:]))
    top_beats_bottom = utilities[-1] > utilities[0]
    queues_monotone = all(b > a for a, b in zip(queues, queues[1:]))
    growth = queues[-1] / queues[1]
    ok = nondecreasing and top_beats_bottom and queues_monotone and growth >= 3.5
    report(
        "criterion 4",
        ok,
        f"utility {utilities[0]:.4f} -> {utilities[-1]:.4f} nondecreasing within 2%, "
        f"queues {queues[0]:.0f} -> {queues[-1]:.0f} monotone, "
        f"queue(V=100)/queue(V=10) = {growth:.1f} (>= 3.5)",
    )


def test_two_pair_boundary_nesting_and_coincidence():
    start = time.perf_counter()
    opts = SolverOptions(batch=10_000, seed=0)
    ext = np.linspace(0.05, 0.2, 10)

    # Part one: the boundary grows outward with the interference budget.
    spec_a = FadingSpec(
        n_links=2, direct_mean=0.4, interference_mean=0.2, n_external=10, external_means=ext
    )
    alphas = np.linspace(0.0, 0.1158, 13)
    grid = np.column_stack([np.zeros(alphas.size), alphas])
    curves = {
        gamma: np.array(
            [p.pivot_rate for p in trace_boundary(spec_a, 0, grid, gamma=gamma, solver_opts=opts)]
        )
        for gamma in (0.05, 0.1, 0.2)
    }
    nested = np.all(curves[0.05] <= curves[0.1] + 1e-6) and np.all(
        curves[0.1] <= curves[0.2] + 1e-6
    )

    # Part two: with the second pair interfering weakly, the constrained and
    # unconstrained boundaries agree where the first pair's rate is low.
    spec_b = FadingSpec(
        n_links=2,
        direct_mean=0.4,
        interference_mean=[0.2, 0.1],
        n_external=10,
        external_means=ext,
    )
    r1max = solve_boundary_point_unconstrained(spec_b, np.zeros(2), 0, solver_opts=opts).pivot_rate
    low_targets = np.array([0.0, 0.1, 0.2, 0.3]) * r1max
    grid_b = np.column_stack([low_targets, np.zeros(low_targets.size)])
    con = trace_boundary(spec_b, 1, grid_b, gamma=0.1, solver_opts=opts)
    unc = trace_boundary(spec_b, 1, grid_b, gamma=np.inf, solver_opts=opts)
    converged = all(p.status == STATUS_CONVERGED for p in con + unc)
    gaps = np.array(
        [abs(c.pivot_rate - u.pivot_rate) / u.pivot_rate for c, u in zip(con, unc)]
    )
    coincide = converged and np.all(gaps <= 0.02)

    elapsed = time.perf_counter() - start
    ok = nested and coincide and elapsed < 300.0
    report(
        "criterion 5",
        ok,
        f"budget-nested at 13 grid points, constrained/unconstrained gap "
        f"{gaps.max():.4f} (<= 0.02) on the low-rate segment, {elapsed:.0f}s (< 300s)",
    )


def test_policy_sum_rate_ordering_at_reduced_scale():
    start = time.perf_counter()
    rates = {}
    for kind in ("Centralized", "CadsOptimal", "CadsUniform", "Irds"):
        rates[kind] = run(desk_config(kind, seed=11)).summary.sum_rate
    cen, opt, uni, irds = (
        rates["Centralized"],
        rates["CadsOptimal"],
        rates["CadsUniform"],
        rates["Irds"],
    )
    elapsed = time.perf_counter() - start
    ordered = cen > opt > uni > irds
    banded = opt >= 0.7 * cen and uni >= 0.55 * cen and irds <= 0.5 * cen
    ok = ordered and banded and elapsed < 300.0
    report(
        "criterion 6",
        ok,
        f"sum rates {cen:.4f} > {opt:.4f} > {uni:.4f} > {irds:.4f}; fractions "
        f"{opt / cen:.2f} (>= 0.70), {uni / cen:.2f} (>= 0.55), {irds / cen:.2f} (<= 0.50); "
        f"{elapsed:.0f}s (< 300s)",
    )


def test_contention_rate_rises_then_falls_in_minislot_count():
    m_values = [10, 40, 160, 640]
    base = desk_config("CadsUniform", seed=44, horizon=100_000, tau=2e-4)
    results = sweep(base, "M", m_values)
    rates = [r.summary.sum_rate for r in results]
    peak = int(np.argmax(rates))
    ok = 0 < peak < len(rates) - 1 and rates[0] < max(rates) and rates[-1] < max(rates)
    report(
        "criterion 7",
        ok,
        "sum rate over M "
        + " -> ".join(f"{r:.4f}" for r in rates)
        + f", interior peak at M={m_values[peak]}",
    )


def test_uniform_minislot_distribution_chi_square():
    size, m, events = 2048, 20, 100_000
    rng = np.random.default_rng(0)
    reservoir = WeightReservoir(n_links=1, size=size)
    for r in rng.exponential(1.0, size=size):
        reservoir.push(np.array([r]), np.array([0.0]))
    q = np.ones(1)
    counts = np.zeros(m, dtype=np.int64)
    for w in rng.exponential(1.0, size=events):
        reservoir.push(np.array([w]), np.array([0.0]))
        pick = reservoir.uniform_picks(np.array([w]), q, 0.0, 1.0, m)[0]
        counts[pick - 1] += 1
    p_value = float(stats.chisquare(counts).pvalue)
    ok = counts.sum() == events and p_value >= 0.01
    report(
        "criterion 8",
        ok,
        f"{events} contention events over {m} mini-slots, chi-square p = {p_value:.3f} (>= 0.01)",
    )


def test_byte_identical_artifacts_same_seed(tmp_path):
    doc = {
        "fading": {"n_links": 10, "direct_mean": 2.0, "interference_mean": 1.0,
                   "n_external": 20, "external_means": {"uniform": [0.1, 0.3]}},
        "flow": {"v": 100.0, "a_max": 100.0},
        "gamma": 0.1,
        "horizon": 5_000,
        "seed": 17,
    }
    ok = True
    details = []
    for kind, m_slots in (("CadsOptimal", 8), ("Irds", 1)):
        doc["policy"] = {"kind": kind, "m_slots": m_slots, "tau": 1e-3}
        cfg = tmp_path / f"{kind}.json"
        cfg.write_text(json.dumps(doc))
        outputs = []
        for label in ("a", "b"):
            out = tmp_path / f"{kind}-{label}"
            proc = subprocess.run(
                [sys.executable, "-m", "edgesim.cli", "simulate",
                 "--config", str(cfg), "--out", str(out)],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            outputs.append(out)
        same = (
            (outputs[0] / "summary.json").read_bytes() == (outputs[1] / "summary.json").read_bytes()
            and (outputs[0] / "trace.csv").read_bytes() == (outputs[1] / "trace.csv").read_bytes()
        )
        ok &= same
        details.append(f"{kind}: {'identical' if same else 'differs'}")
    report("criterion 9", ok, "; ".join(details) + " (summary.json and trace.csv byte-compared)")
