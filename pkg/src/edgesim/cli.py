"""Command line front end: simulate, sweep, boundary, check.

Configuration is a JSON file mirroring RunConfig. Mean-gain fields accept a
scalar, an explicit list, or {"uniform": [lo, hi]} which is expanded into
per-link means deterministically from the run seed. All delimited and JSON
output is written with repr-exact floats, so identical configurations produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analytics import (
    alpha_bound,
    enumeration_success_probability,
    mc_success_probability,
    simulate_uniform_contention,
    success_probability,
)
from .channel import FadingSpec, uniform_means
from .engine import RunConfig, RunResult, paired_beta, run, sweep
from .queueing import FlowParams
from .schedulers import POLICY_KINDS, PolicyConfig
from .stability import SolverOptions, solve_boundary_point, trace_boundary

__all__ = [
    "main",
    "load_config",
    "config_dict",
    "cmd_simulate",
    "cmd_sweep",
    "cmd_boundary",
    "cmd_check",
]


class ConfigError(ValueError):
    """A configuration file could not be interpreted."""


# ---------------------------------------------------------------------------
# Config parsing and serialization


def _parse_extended_float(value, field: str) -> float:
    """Accept a JSON number or the string "inf"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return float("inf")
        raise ConfigError(f"{field}: expected a number or \"inf\", got {value!r}")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f"{field}: expected a number, got {value!r}")


def _expand_means(value, count: int, seed: int, salt: int, field: str):
    """Resolve a mean-gain field: scalar, list, or {"uniform": [lo, hi]} sugar."""
    if isinstance(value, dict):
        if set(value.keys()) != {"uniform"}:
            raise ConfigError(f"{field}: the only supported sugar is {{\"uniform\": [lo, hi]}}")
        bounds = value["uniform"]
        if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
            raise ConfigError(f"{field}: uniform sugar needs exactly [lo, hi]")
        lo, hi = float(bounds[0]), float(bounds[1])
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(200, salt)))
        return [float(x) for x in uniform_means(rng, count, lo, hi)]
    if isinstance(value, (list, tuple)):
        return [float(x) for x in value]
    return float(value)


def _build_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("the top level must be a JSON object")
    known = {
        "fading",
        "policy",
        "flow",
        "gamma",
        "horizon",
        "seed",
        "warmup",
        "power",
        "log_queues",
    }
    unknown = set(doc.keys()) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    seed = int(doc.get("seed", 0))

    fad = dict(doc.get("fading", {}))
    if "n_links" not in fad:
        raise ConfigError("fading.n_links is required")
    n_links = int(fad.pop("n_links"))
    n_external = int(fad.pop("n_external", 0))
    fading_kwargs = {
        "n_links": n_links,
        "n_external": n_external,
        "direct_mean": _expand_means(fad.pop("direct_mean", 2.0), n_links, seed, 0, "fading.direct_mean"),
        "interference_mean": _expand_means(
            fad.pop("interference_mean", 1.0), n_links, seed, 1, "fading.interference_mean"
        ),
        "external_means": _expand_means(
            fad.pop("external_means", []), n_external, seed, 2, "fading.external_means"
        ),
        "external_power": float(fad.pop("external_power", 1.0)),
        "noise_power": float(fad.pop("noise_power", 1.0)),
    }
    if isinstance(fading_kwargs["external_means"], float):
        raise ConfigError("fading.external_means must be a list or uniform sugar")
    if fad:
        raise ConfigError(f"unknown fading keys: {sorted(fad)}")

    pol = dict(doc.get("policy", {}))
    policy_kwargs = {
        "kind": str(pol.pop("kind", "Centralized")),
        "m_slots": int(pol.pop("m_slots", 200)),
        "tau": float(pol.pop("tau", 1e-4)),
        "nu": _parse_extended_float(pol.pop("nu", "inf"), "policy.nu"),
        "reservoir_size": int(pol.pop("reservoir_size", 512)),
    }
    w_max = pol.pop("w_max", None)
    policy_kwargs["w_max"] = None if w_max is None else float(w_max)
    if pol:
        raise ConfigError(f"unknown policy keys: {sorted(pol)}")

    flo = dict(doc.get("flow", {}))
    flow_kwargs = {
        "v": float(flo.pop("v", 100.0)),
        "a_max": float(flo.pop("a_max", 100.0)),
        "utility": str(flo.pop("utility", "log1p")),
    }
    if flo:
        raise ConfigError(f"unknown flow keys: {sorted(flo)}")

    warmup = doc.get("warmup", None)
    try:
        return RunConfig(
            fading=FadingSpec(**fading_kwargs),
            policy=PolicyConfig(**policy_kwargs),
            flow=FlowParams(**flow_kwargs),
            gamma=_parse_extended_float(doc.get("gamma", 0.1), "gamma"),
            horizon=int(doc.get("horizon", 100_000)),
            seed=seed,
            warmup=None if warmup is None else int(warmup),
            power=float(doc.get("power", 1.0)),
            log_queues=int(doc.get("log_queues", 8)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises ConfigError with a message naming the file on any problem.
    """
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    try:
        return _build_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def _encode_float(x: float):
    if np.isinf(x):
        return "inf"
    return float(x)


def config_dict(config: RunConfig) -> dict:
    """The effective configuration with every sugar expanded, round-trippable."""
    spec = config.fading
    pol = config.policy
    return {
        "fading": {
            "n_links": spec.n_links,
            "direct_mean": [float(x) for x in spec.direct_mean],
            "interference_mean": [float(x) for x in spec.interference_mean],
            "n_external": spec.n_external,
            "external_means": [float(x) for x in spec.external_means],
            "external_power": float(spec.external_power),
            "noise_power": float(spec.noise_power),
        },
        "policy": {
            "kind": pol.kind,
            "m_slots": pol.m_slots,
            "tau": float(pol.tau),
            "nu": _encode_float(pol.nu),
            "w_max": None if pol.w_max is None else float(pol.w_max),
            "reservoir_size": pol.reservoir_size,
        },
        "flow": {
            "v": float(config.flow.v),
            "a_max": float(config.flow.a_max),
            "utility": config.flow.utility if isinstance(config.flow.utility, str) else "custom",
        },
        "gamma": _encode_float(config.gamma),
        "horizon": config.horizon,
        "seed": config.seed,
        "warmup": config.warmup,
        "power": float(config.power),
        "log_queues": config.log_queues,
    }


# ---------------------------------------------------------------------------
# Output writers


def _summary_dict(result: RunResult) -> dict:
    s = result.summary
    return {
        "avg_admitted": [float(x) for x in s.avg_admitted],
        "sum_rate": float(s.sum_rate),
        "sum_utility": float(s.sum_utility),
        "avg_queue": float(s.avg_queue),
        "avg_interference": float(s.avg_interference),
        "success_frac": float(s.success_frac),
        "collision_frac": float(s.collision_frac),
        "idle_frac": float(s.idle_frac),
        "beta": None if s.beta is None else float(s.beta),
        "final_z": float(s.final_z),
    }


def write_summary(path: Path, result: RunResult, beta_ci=None) -> None:
    doc = {"config": config_dict(result.config), "summary": _summary_dict(result)}
    if beta_ci is not None:
        doc["summary"]["beta_ci"] = [float(beta_ci[0]), float(beta_ci[1])]
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


OUTCOME_LABELS = {0: "Success", 1: "Collision", 2: "Idle"}


def write_trace(path: Path, result: RunResult) -> None:
    """Per-slot trace as CSV: t, scheduled, outcome, w_sched, z, then queues."""
    tr = result.trace
    k = tr["q"].shape[1]
    header = "t,scheduled,outcome,w_sched,z" + "".join(f",q_{i + 1}" for i in range(k))
    sched = tr["scheduled"]
    outc = tr["outcome"]
    wsc = tr["w_sched"]
    z = tr["z"]
    q = tr["q"]
    lines = [header]
    for t in range(result.config.horizon):
        qs = "".join("," + repr(float(q[t, j])) for j in range(k))
        lines.append(
            f"{t},{int(sched[t])},{OUTCOME_LABELS[int(outc[t])]},"
            f"{repr(float(wsc[t]))},{repr(float(z[t]))}{qs}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_sweep_csv(path: Path, axis: str, values, results: list[RunResult]) -> None:
    header = (
        "index,axis,value,seed,sum_rate,sum_utility,avg_queue,avg_interference,"
        "success_frac,collision_frac,idle_frac,beta,final_z"
    )
    lines = [header]
    for i, (v, res) in enumerate(zip(values, results)):
        s = res.summary
        beta = "" if s.beta is None else repr(float(s.beta))
        lines.append(
            f"{i},{axis},{v},{res.config.seed},{repr(float(s.sum_rate))},"
            f"{repr(float(s.sum_utility))},{repr(float(s.avg_queue))},"
            f"{repr(float(s.avg_interference))},{repr(float(s.success_frac))},"
            f"{repr(float(s.collision_frac))},{repr(float(s.idle_frac))},"
            f"{beta},{repr(float(s.final_z))}"
        )
    path.write_text("\n".join(lines) + "\n")


def write_boundary_csv(path: Path, alphas, points) -> None:
    n = points[0].rates.size
    header = (
        "alpha_target,"
        + ",".join(f"rate_{j + 1}" for j in range(n))
        + ",mu,"
        + ",".join(f"lambda_{j + 1}" for j in range(n))
        + ",interference,"
        + ",".join(f"residual_{j + 1}" for j in range(n))
        + ",interference_residual,status,iterations"
    )
    lines = [header]
    for a, pt in zip(alphas, points):
        rates = ",".join(repr(float(x)) for x in pt.rates)
        lams = ",".join(repr(float(x)) for x in pt.dual.lam)
        resid = ",".join(repr(float(x)) for x in pt.residuals)
        lines.append(
            f"{repr(float(a))},{rates},{repr(float(pt.dual.mu))},{lams},"
            f"{repr(float(pt.interference))},{resid},"
            f"{repr(float(pt.interference_residual))},{pt.status},{pt.iterations}"
        )
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Plot rendering (lazy matplotlib import, file output only)


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _render_run_plots(result: RunResult, outdir: Path) -> list[Path]:
    plt = _plt()
    tr = result.trace
    t = np.arange(result.config.horizon)
    written = []

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for j in range(tr["q"].shape[1]):
        ax.plot(t, tr["q"][:, j], lw=0.7, label=f"q_{j + 1}")
    ax.plot(t, tr["z"], lw=1.2, color="black", label="z")
    ax.set_xlabel("slot")
    ax.set_ylabel("backlog")
    ax.set_title("queue trajectories")
    if tr["q"].shape[1] <= 10:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    p = outdir / "queues.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(p)

    window = max(1, result.config.horizon // 200)
    kernel = np.ones(window) / window
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(np.convolve(tr["max_feasible"], kernel, mode="valid"), lw=1.0, label="max feasible")
    ax.plot(np.convolve(tr["w_sched"], kernel, mode="valid"), lw=1.0, label="scheduled")
    ax.set_xlabel("slot")
    ax.set_ylabel(f"weight ({window}-slot mean)")
    ax.set_title("scheduled weight against the best available")
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = outdir / "weights.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(p)
    return written


def _render_sweep_plot(axis: str, values, results: list[RunResult], outdir: Path) -> Path:
    plt = _plt()
    x = np.arange(len(values))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(x, [r.summary.sum_utility for r in results], marker="o")
    ax1.set_ylabel("sum utility")
    ax2.plot(x, [r.summary.avg_queue for r in results], marker="o", color="tab:red")
    ax2.set_ylabel("average total backlog")
    ax2.set_xlabel(axis)
    ax2.set_xticks(x)
    ax2.set_xticklabels([str(v) for v in values], rotation=30)
    fig.tight_layout()
    p = outdir / "sweep.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    return p


def _render_boundary_plot(pivot: int, alphas, points, outdir: Path) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 5))
    x = [pt.pivot_rate for pt in points]
    ax.plot(x, list(alphas), marker="o", lw=1.0)
    ax.set_xlabel(f"device {pivot + 1} rate")
    ax.set_ylabel("target rate of the other devices")
    ax.set_title("rate region boundary")
    fig.tight_layout()
    p = outdir / "boundary.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    return p


# ---------------------------------------------------------------------------
# Subcommands


def _outdir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "horizon", None) is not None:
        config = replace(config, horizon=args.horizon)
    if getattr(args, "gamma", None) is not None:
        config = replace(config, gamma=_parse_extended_float(args.gamma, "--gamma"))
    if getattr(args, "policy", None) is not None:
        config = replace(config, policy=replace(config.policy, kind=args.policy))
    if getattr(args, "queue_cols", None) is not None:
        config = replace(config, log_queues=args.queue_cols)
    return config


def cmd_simulate(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out = _outdir(args.out)
    result = run(config)
    beta_ci = None
    if args.beta:
        est = paired_beta(result)
        beta_ci = (est.ci_low, est.ci_high)
    write_summary(out / "summary.json", result, beta_ci=beta_ci)
    write_trace(out / "trace.csv", result)
    written = [out / "summary.json", out / "trace.csv"]
    if args.plot:
        written += _render_run_plots(result, out)
    s = result.summary
    print(
        f"simulate: {config.policy.kind} N={config.fading.n_links} T={config.horizon} "
        f"sum_rate={s.sum_rate:.4f} avg_queue={s.avg_queue:.2f} "
        f"avg_interference={s.avg_interference:.4f}"
    )
    for p in written:
        print(f"wrote {p}")
    return 0


def _parse_sweep_values(axis: str, raw: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("--values must be a nonempty comma-separated list")
    if axis in ("N", "M"):
        return [int(p) for p in parts]
    if axis == "policy":
        for p in parts:
            if p not in POLICY_KINDS:
                raise ConfigError(f"unknown policy kind {p!r}")
        return parts
    return [float(p) for p in parts]


def cmd_sweep(args) -> int:
    base = _apply_overrides(load_config(args.config), args)
    values = _parse_sweep_values(args.axis, args.values)
    out = _outdir(args.out)
    results = sweep(base, args.axis, values)
    write_sweep_csv(out / "sweep.csv", args.axis, values, results)
    written = [out / "sweep.csv"]
    if args.plot:
        written.append(_render_sweep_plot(args.axis, values, results, out))
    for v, r in zip(values, results):
        s = r.summary
        print(
            f"sweep {args.axis}={v}: sum_rate={s.sum_rate:.4f} "
            f"sum_utility={s.sum_utility:.4f} avg_queue={s.avg_queue:.2f}"
        )
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_boundary(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    spec = config.fading
    out = _outdir(args.out)
    pivot = args.pivot
    if not 0 <= pivot < spec.n_links:
        raise ConfigError(f"--pivot must lie in [0, {spec.n_links - 1}]")
    gamma = np.inf if args.unconstrained else config.gamma
    nu = np.inf if args.unconstrained else config.policy.nu
    opts = SolverOptions(seed=config.seed, power=config.power, batch=args.batch)

    alpha_max = args.alpha_max
    if alpha_max is None:
        if spec.n_links != 2:
            raise ConfigError("--alpha-max is required when the network has more than two devices")
        other = 1 - pivot
        probe = solve_boundary_point(
            spec, np.zeros(spec.n_links), other, gamma=gamma, nu=nu, solver_opts=opts
        )
        alpha_max = probe.pivot_rate
    alphas = np.linspace(0.0, alpha_max, args.points)
    grid = np.zeros((args.points, spec.n_links))
    for j in range(spec.n_links):
        if j != pivot:
            grid[:, j] = alphas
    points = trace_boundary(spec, pivot, grid, gamma=gamma, nu=nu, solver_opts=opts)
    write_boundary_csv(out / "boundary.csv", alphas, points)
    written = [out / "boundary.csv"]
    if args.plot:
        written.append(_render_boundary_plot(pivot, alphas, points, out))
    n_conv = sum(1 for p in points if p.status == "Converged")
    print(
        f"boundary: pivot={pivot} points={args.points} converged={n_conv} "
        f"gamma={'inf' if np.isinf(gamma) else gamma}"
    )
    for p in written:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# Built-in cross checks


def _check_enumeration() -> tuple[bool, str]:
    worst = 0.0
    cases = 0
    for n in range(1, 5):
        for m in range(1, 7):
            diff = abs(success_probability(n, m) - enumeration_success_probability(n, m))
            worst = max(worst, diff)
            cases += 1
    ok = worst <= 1e-12
    return ok, f"closed form vs enumeration over {cases} cases, max diff {worst:.2e}"


def _check_success_mc(trials: int, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n, m in ((2, 4), (5, 10), (10, 20), (20, 40)):
        p_hat, se = mc_success_probability(n, m, trials, rng)
        dev = abs(p_hat - success_probability(n, m)) / se
        worst = max(worst, dev)
    ok = worst <= 4.0
    return ok, f"Monte Carlo vs closed form, worst deviation {worst:.2f} standard errors"


def _check_weight_bound(trials: int, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    margin = np.inf
    for n, m in ((2, 4), (3, 6), (5, 10), (10, 20), (20, 60)):
        bound = alpha_bound(n, m)
        for dist in ("uniform", "exponential"):
            sched, peak = simulate_uniform_contention(n, m, trials, rng, weights=dist)
            margin = min(margin, sched / peak - bound)
    ok = margin >= 0.0
    return ok, f"scheduled weight over the guarantee by {margin:+.4f} at the tightest point"


CHECK_SUITES = ("enumeration", "success-mc", "weight-bound", "all")


def cmd_check(args) -> int:
    picked = CHECK_SUITES[:-1] if args.suite == "all" else (args.suite,)
    all_ok = True
    for name in picked:
        if name == "enumeration":
            ok, detail = _check_enumeration()
        elif name == "success-mc":
            ok, detail = _check_success_mc(args.trials, args.seed)
        else:
            ok, detail = _check_weight_bound(args.trials, args.seed)
        all_ok &= ok
        print(f"check {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesim",
        description="Slotted simulation of underlay edge networks with contention scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_config=True):
        if with_config:
            p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    sim = sub.add_parser("simulate", help="run one simulation and write its outputs")
    add_common(sim)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--horizon", type=int, default=None, help="override the horizon")
    sim.add_argument("--gamma", default=None, help="override the interference budget")
    sim.add_argument("--policy", choices=POLICY_KINDS, default=None, help="override the policy")
    sim.add_argument("--queue-cols", type=int, default=None, help="queue columns kept in the trace")
    sim.add_argument("--beta", action="store_true", help="add a bootstrap interval for beta")
    sim.add_argument("--plot", action="store_true", help="also render PNG figures")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="run one simulation per value of an axis")
    add_common(sw)
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--axis", required=True, choices=("V", "gamma", "N", "M", "tau", "policy"))
    sw.add_argument("--values", required=True, help="comma separated values for the axis")
    sw.add_argument("--horizon", type=int, default=None, help="override the horizon")
    sw.add_argument("--plot", action="store_true", help="also render a PNG figure")
    sw.set_defaults(func=cmd_sweep)

    bd = sub.add_parser("boundary", help="trace the achievable rate region boundary")
    add_common(bd)
    bd.add_argument("--out", required=True, help="output directory")
    bd.add_argument("--pivot", type=int, default=0, help="device whose rate is maximized")
    bd.add_argument("--points", type=int, default=17, help="grid size along the boundary")
    bd.add_argument("--alpha-max", type=float, default=None, help="largest non-pivot target rate")
    bd.add_argument("--gamma", default=None, help="override the interference budget")
    bd.add_argument("--batch", type=int, default=10_000, help="frozen sample size")
    bd.add_argument(
        "--unconstrained", action="store_true", help="disable both interference budgets"
    )
    bd.add_argument("--plot", action="store_true", help="also render a PNG figure")
    bd.set_defaults(func=cmd_boundary)

    ck = sub.add_parser("check", help="cross-check simulation against closed forms")
    ck.add_argument("--suite", choices=CHECK_SUITES, default="all")
    ck.add_argument("--trials", type=int, default=100_000)
    ck.add_argument("--seed", type=int, default=0)
    ck.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
