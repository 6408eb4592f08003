"""Command-line sweep runner.

Usage:
    heavytail-dp run --config cfg.json [--algo NAME --oracle NAME --n LIST
        --d LIST --eps LIST --k K --delta D --trials T --seed S
        --out CSV --plot SVG --timing]

The config file is a single JSON document whose keys mirror the flag
names; flags override file values, which override defaults. Exit codes:
0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    emit_plot,
    run_sweep,
    write_csv,
)

_GRID_KEYS = {"n": "n_grid", "d": "d_grid", "eps": "eps_grid", "k": "k_grid"}
_SCALAR_KEYS = {
    "problem": "problem",
    "algo": "algo",
    "oracle": "oracle",
    "delta": "delta",
    "trials": "trials",
    "seed": "seed",
    "out": "out_csv",
    "plot": "out_plot",
    "eta": "eta",
    "steps": "steps",
    "timing": "record_timing",
}


def _parse_list(text, cast):
    return [cast(v) for v in str(text).split(",") if v != ""]


def _build_config(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in raw.items():
            if key in _GRID_KEYS:
                values[_GRID_KEYS[key]] = list(val) if isinstance(val, list) else [val]
            elif key in _SCALAR_KEYS:
                values[_SCALAR_KEYS[key]] = val
            else:
                raise ConfigError(f"unknown config key {key!r}")

    if args.n is not None:
        values["n_grid"] = _parse_list(args.n, int)
    if args.d is not None:
        values["d_grid"] = _parse_list(args.d, int)
    if args.eps is not None:
        values["eps_grid"] = _parse_list(args.eps, float)
    if args.k is not None:
        values["k_grid"] = _parse_list(args.k, float)
    for flag, field in (
        ("problem", "problem"),
        ("algo", "algo"),
        ("oracle", "oracle"),
        ("delta", "delta"),
        ("trials", "trials"),
        ("seed", "seed"),
        ("out", "out_csv"),
        ("plot", "out_plot"),
        ("eta", "eta"),
        ("steps", "steps"),
    ):
        val = getattr(args, flag)
        if val is not None:
            values[field] = val
    if args.timing:
        values["record_timing"] = True

    config = ExperimentConfig(**values)
    config.validate()
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="heavytail-dp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a Monte-Carlo sweep")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--problem", choices=("quadratic", "linear"))
    run.add_argument("--algo")
    run.add_argument("--oracle")
    run.add_argument("--n", help="comma-separated sample sizes")
    run.add_argument("--d", help="comma-separated dimensions")
    run.add_argument("--eps", help="comma-separated epsilon values")
    run.add_argument("--k", help="comma-separated moment orders")
    run.add_argument("--delta", type=float)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--eta", type=float)
    run.add_argument("--steps", type=int)
    run.add_argument("--out", help="CSV output path")
    run.add_argument("--plot", help="SVG output path")
    run.add_argument("--timing", action="store_true", help="record real wall times (breaks byte-reproducibility)")

    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
    except (ConfigError, OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        records = run_sweep(config)
        if config.out_csv:
            write_csv(records, config.out_csv)
        if config.out_plot:
            emit_plot(records, ("n", "excess_risk"), config.out_plot)
        if not config.out_csv and not config.out_plot:
            for value, (mean, stderr, count) in sorted(aggregate(records).items()):
                print(f"n={value:g} mean_excess={mean:.6g} stderr={stderr:.3g} trials={count}")
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
