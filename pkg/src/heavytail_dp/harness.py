"""Experiment runner: Monte-Carlo sweeps over (algorithm, oracle, grid).

A sweep draws a fresh dataset per trial, runs the configured optimizer
with a private ledger, evaluates excess risk, and collects one record per
(grid point, trial). Everything derives from the base seed through
SeedSequence spawning, so a rerun with the same config is byte-identical:
by default the wall-time column is frozen to 0.000 (pass
``record_timing=True`` / ``--timing`` to measure real times, which breaks
byte-reproducibility).

CSV contract (frozen): header
``problem,algo,oracle,n,d,eps,delta,k,trial,excess_risk,stderr,wall_ms``,
integers bare, floats at %.12g, wall_ms at %.3f.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .losses import (
    ProblemInstance,
    SmoothWithProx,
    ProxOperator,
    evaluate_excess_risk,
    linear_instance,
    quadratic_instance,
    symmetric_pareto,
)
from .optimizers import (
    ORACLE_KINDS,
    OptimizerConfig,
    OracleSpec,
    acsa,
    clipped_sgd_sc,
    localized_sco,
    prox_clipped_sgd,
    strongly_convex_sco,
)
from .privacy import AccountantLedger, ZcdpBudget
from .mean_oracles import MomentAssumption

PROBLEMS = ("quadratic", "linear")
ALGORITHMS = ("localized", "strongly-convex", "acsa", "clipped-sgd", "prox-sgd")

CSV_HEADER = "problem,algo,oracle,n,d,eps,delta,k,trial,excess_risk,stderr,wall_ms"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    problem: str = "quadratic"
    algo: str = "localized"
    oracle: str = "central-l2"
    n_grid: list[int] = field(default_factory=lambda: [256])
    d_grid: list[int] = field(default_factory=lambda: [4])
    eps_grid: list[float] = field(default_factory=lambda: [1.0])
    k_grid: list[float] = field(default_factory=lambda: [2.0])
    delta: float = 1e-5
    trials: int = 100
    seed: int = 0
    out_csv: str | None = None
    out_plot: str | None = None
    record_timing: bool = False
    eta: float | None = None
    steps: int | None = None

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; valid: {PROBLEMS}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; valid: {ALGORITHMS}")
        if self.oracle not in ORACLE_KINDS:
            raise ConfigError(f"unknown oracle {self.oracle!r}; valid: {ORACLE_KINDS}")
        for name, grid in (
            ("n", self.n_grid),
            ("d", self.d_grid),
            ("eps", self.eps_grid),
            ("k", self.k_grid),
        ):
            if not grid:
                raise ConfigError(f"empty {name} grid")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.oracle.startswith("shuffle") and not (0 < self.delta < 0.5):
            raise ConfigError("shuffle oracles require delta in (0, 1/2)")


@dataclass(frozen=True)
class ExperimentRecord:
    problem: str
    algo: str
    oracle: str
    n: int
    d: int
    eps: float
    delta: float
    k: float
    trial: int
    excess_risk: float
    stderr: float
    wall_ms: float

    def __post_init__(self):
        if self.excess_risk < -3.0 * self.stderr - 1e-12:
            raise ValueError(
                f"significantly negative excess risk {self.excess_risk} "
                f"(stderr {self.stderr}): evaluation is inconsistent"
            )


def build_problem(problem: str, d: int, k: float, seed) -> ProblemInstance:
    """Benchmark instances with analytic optima and heavy-tailed data.

    Data is nu + symmetric Pareto(shape 5) noise, which has finite fourth
    moments (the clip recipes at k=2 need the 2k-th), with nu = 0.5*e1.
    """
    if k != 2.0:
        raise ConfigError("built-in benchmark problems are calibrated for k=2")
    noise = symmetric_pareto(shape=5.0, scale=0.25, d=d, seed=seed)
    center = np.zeros(d)
    center[0] = 0.5
    if problem == "quadratic":
        return quadratic_instance(noise, center, radius_margin=2.0)
    if problem == "linear":
        return linear_instance(noise, center, radius=1.0)
    raise ConfigError(f"unknown problem {problem!r}")


def _optimizer_config(
    instance: ProblemInstance, eps: float, config: ExperimentConfig
) -> OptimizerConfig:
    spec = OracleSpec(
        kind=config.oracle,
        delta=config.delta if config.oracle.startswith("shuffle") else None,
    )
    return OptimizerConfig(
        budget=ZcdpBudget(eps * eps / 2.0),
        moment=instance.moment,
        moment_2k=instance.moment_2k,
        domain=instance.domain,
        oracle=spec,
        eta=config.eta,
        steps=config.steps,
    )


def run_trial(
    instance: ProblemInstance,
    algo: str,
    opt_config: OptimizerConfig,
    n: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, AccountantLedger]:
    data = instance.distribution.sample(n)
    ledger = AccountantLedger()
    w0 = instance.domain.center.copy()
    loss = instance.loss
    if algo == "localized":
        w = localized_sco(data, loss, instance.domain, w0, opt_config, rng, ledger=ledger)
    elif algo == "strongly-convex":
        w = strongly_convex_sco(data, loss, instance.domain, w0, opt_config, rng, ledger=ledger)
    elif algo == "acsa":
        w = acsa(data, loss, instance.domain, w0, opt_config, rng, ledger=ledger)
    elif algo == "clipped-sgd":
        w = clipped_sgd_sc(data, loss, instance.domain, w0, opt_config, rng, ledger=ledger)
    elif algo == "prox-sgd":
        composite = SmoothWithProx(loss, ProxOperator("ball-indicator", ball=instance.domain))
        excess0, _ = evaluate_excess_risk(instance, w0)
        cfg = opt_config
        if cfg.delta0 is None:
            cfg = OptimizerConfig(**{**cfg.__dict__, "delta0": max(1.0, 1.5 * excess0)})
        w = prox_clipped_sgd(data, composite, w0, cfg, rng, ledger=ledger)
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    if not ledger.audit(opt_config.budget):
        raise RuntimeError(
            f"ledger total {ledger.total().rho} exceeds configured budget "
            f"{opt_config.budget.rho}"
        )
    return w, ledger


def run_sweep(config: ExperimentConfig) -> list[ExperimentRecord]:
    """All (grid point, trial) records, in deterministic grid-major order."""
    config.validate()
    records = []
    point_index = 0
    for k in config.k_grid:
        for n in config.n_grid:
            for d in config.d_grid:
                for eps in config.eps_grid:
                    for trial in range(config.trials):
                        seed_seq = np.random.SeedSequence(
                            entropy=[int(config.seed), point_index, trial]
                        )
                        data_seed, algo_seed, eval_seed = seed_seq.spawn(3)
                        instance = build_problem(config.problem, d, k, data_seed)
                        opt_config = _optimizer_config(instance, eps, config)
                        start = time.perf_counter()
                        w, _ = run_trial(
                            instance,
                            config.algo,
                            opt_config,
                            n,
                            np.random.default_rng(algo_seed),
                        )
                        wall_ms = (
                            (time.perf_counter() - start) * 1000.0
                            if config.record_timing
                            else 0.0
                        )
                        excess, stderr = evaluate_excess_risk(
                            instance, w, np.random.default_rng(eval_seed)
                        )
                        records.append(
                            ExperimentRecord(
                                problem=config.problem,
                                algo=config.algo,
                                oracle=config.oracle,
                                n=n,
                                d=d,
                                eps=eps,
                                delta=config.delta,
                                k=k,
                                trial=trial,
                                excess_risk=excess,
                                stderr=stderr,
                                wall_ms=wall_ms,
                            )
                        )
                    point_index += 1
    return records


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.problem},{r.algo},{r.oracle},{r.n},{r.d},{r.eps:.12g},"
                f"{r.delta:.12g},{r.k:.12g},{r.trial},{r.excess_risk:.12g},"
                f"{r.stderr:.12g},{r.wall_ms:.3f}\n"
            )


def aggregate(records, axis: str = "n") -> dict[float, tuple[float, float, int]]:
    """Mean excess risk, standard error of the mean, and count per axis value."""
    buckets: dict[float, list[float]] = {}
    for r in records:
        buckets.setdefault(getattr(r, axis), []).append(r.excess_risk)
    out = {}
    for value, xs in sorted(buckets.items()):
        arr = np.asarray(xs)
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out[value] = (float(arr.mean()), stderr, len(arr))
    return out


def fit_loglog_slope(records, axis: str = "n") -> float:
    """Least-squares slope of log(mean excess risk) against log(axis value)."""
    means = aggregate(records, axis)
    if len(means) < 3:
        raise ValueError(f"need >= 3 distinct {axis} values, got {len(means)}")
    xs, ys = [], []
    for value, (mean, _, _) in means.items():
        if value <= 0 or mean <= 0:
            raise ValueError("log-log fit needs positive axis values and mean excess risk")
        xs.append(math.log(value))
        ys.append(math.log(mean))
    slope, _ = np.polyfit(np.asarray(xs), np.asarray(ys), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Plotting: self-contained deterministic SVG


def emit_plot(records, axes: tuple[str, str], path) -> None:
    """Log-log scatter with error bars, one polyline per (d, eps) series.

    The SVG carries no external assets and is rendered with fixed decimal
    formatting, so identical inputs produce identical bytes.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    x_axis, _ = axes

    series: dict[tuple, list] = {}
    for r in records:
        series.setdefault((r.d, r.eps), []).append(r)

    width, height = 640.0, 480.0
    left, right, top, bottom = 70.0, 20.0, 20.0, 50.0

    points = {}
    all_x, all_y = [], []
    for key, rs in sorted(series.items()):
        means = aggregate(rs, x_axis)
        pts = []
        for x, (mean, stderr, _) in means.items():
            if x <= 0 or mean <= 0:
                raise ValueError("log-log plot needs positive values")
            pts.append((x, mean, stderr))
            all_x.append(math.log10(x))
            all_y.append(math.log10(mean))
            if mean - stderr > 0:
                all_y.append(math.log10(mean - stderr))
            all_y.append(math.log10(mean + stderr))
        points[key] = pts

    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(v):
        return left + (math.log10(v) - x_lo) / x_span * (width - left - right)

    def sy(v):
        return height - bottom - (math.log10(v) - y_lo) / y_span * (height - top - bottom)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<line x1="{left:.1f}" y1="{height - bottom:.1f}" x2="{width - right:.1f}" '
        f'y2="{height - bottom:.1f}" stroke="black"/>',
        f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" '
        f'y2="{height - bottom:.1f}" stroke="black"/>',
        f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12:.1f}" '
        f'text-anchor="middle" font-size="14">{x_axis} (log)</text>',
        f'<text x="16" y="{(top + height - bottom) / 2:.1f}" text-anchor="middle" '
        f'font-size="14" transform="rotate(-90 16 {(top + height - bottom) / 2:.1f})">'
        f"{axes[1]} (log)</text>",
    ]
    for idx, (key, pts) in enumerate(sorted(points.items())):
        color = palette[idx % len(palette)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y, _ in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        for x, y, err in pts:
            cx, cy = sx(x), sy(y)
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="{color}"/>')
            if err > 0 and y - err > 0:
                parts.append(
                    f'<line x1="{cx:.2f}" y1="{sy(y - err):.2f}" x2="{cx:.2f}" '
                    f'y2="{sy(y + err):.2f}" stroke="{color}" stroke-width="1"/>'
                )
        parts.append(
            f'<text x="{width - right - 4:.1f}" y="{top + 16 + 16 * idx:.1f}" '
            f'text-anchor="end" font-size="12" fill="{color}">d={key[0]} eps={key[1]:g}</text>'
        )
    parts.append("</svg>")
    svg = "\n".join(parts)
    with open(path, "w") as fh:
        fh.write(svg)
