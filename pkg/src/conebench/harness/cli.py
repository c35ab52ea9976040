"""Command-line entry point.

Subcommands: ``generate`` (materialize the simulation datasets),
``benchmark`` (run the estimator comparison), ``sweep`` (hyperparameter
grid), ``inspect`` (dataset statistics). All numeric knobs come from the
config file; ``CONEBENCH_SEED`` overrides the generator base seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import BenchConfig, ConfigError, load_config
from .report import (write_rows_csv, write_summary_json, write_sweep_csv,
                     write_sweep_summary_json)
from .runner import DEFAULT_GRID, derive_seed, parameter_sweep, run_benchmark
from .storage import load_dataset, save_dataset

SEED_ENV_VAR = "CONEBENCH_SEED"


def _load_config_with_env(path) -> BenchConfig:
    cfg = load_config(path)
    override = os.environ.get(SEED_ENV_VAR)
    if override is not None:
        try:
            seed = int(override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {override!r}")
        cfg = dataclasses.replace(
            cfg, gen=dataclasses.replace(cfg.gen, seed=seed))
    return cfg


def _prepare_out_dir(path_str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = _load_config_with_env(args.config)
    out = _prepare_out_dir(args.out)
    for k in range(cfg.n_sims):
        gen_k = dataclasses.replace(cfg.gen, seed=derive_seed(cfg.gen.seed, k))
        from ..datagen import make_dataset
        path = out / f"dataset_{k:03d}.cbd"
        save_dataset(make_dataset(gen_k), path)
        print(f"wrote {path}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config_with_env(args.config)
    out = _prepare_out_dir(args.out)
    report = run_benchmark(cfg)
    csv_path = out / "results.csv"
    write_rows_csv(report, csv_path)
    write_summary_json(report, out / "summary.json")
    if not args.no_figures:
        from .figures import render_benchmark_figure
        render_benchmark_figure(report, out / "rmse_mae.png")
    print(f"wrote {csv_path}")
    for name in report.estimator_order:
        entry = report.summary[name]
        if entry["rmse"] is None:
            print(f"{name}: no successful cells ({entry['n_failed']} failed)")
        else:
            print(f"{name}: rmse={entry['rmse']:.6f} mae={entry['mae']:.6f} "
                  f"n={entry['n_ok']}")
    return 0


def _parse_grid(text):
    try:
        values = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad grid {text!r}: expected comma-separated floats")
    if not values:
        raise ConfigError("grid must contain at least one value")
    return values


def cmd_sweep(args) -> int:
    cfg = _load_config_with_env(args.config)
    out = _prepare_out_dir(args.out)
    gamma_grid = _parse_grid(args.gamma_grid)
    zeta_grid = _parse_grid(args.zeta_grid)
    result = parameter_sweep(cfg, gamma_grid, zeta_grid)
    write_sweep_csv(result, out / "sweep.csv")
    write_sweep_summary_json(result, out / "sweep_summary.json")
    if not args.no_figures:
        from .figures import render_sweep_figures
        render_sweep_figures(result, out)
    ratio = result.rmse_ratio
    print(f"wrote {out / 'sweep.csv'}")
    print(f"rmse max/min ratio: {ratio:.4f}" if ratio else
          "rmse max/min ratio: undefined (no successful cells)")
    return 0


def cmd_inspect(args) -> int:
    ds = load_dataset(args.dataset)
    gt = ds.ground_truth
    stats = {
        "instances": int(ds.n),
        "edges": int(ds.graph.n_edges),
        "features": int(ds.features.shape[1]),
        "mean_degree": round(2.0 * ds.graph.n_edges / ds.n, 4),
        "treated_instances": int(ds.treatments.sum()),
        "instances_treated_outcome_higher": int((gt.y1 > gt.y0).sum()),
    }
    for key, value in stats.items():
        print(f"{key} = {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conebench",
        description="Counterfactual policy evaluation benchmarks on "
                    "networked observational data")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write the simulation datasets")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=cmd_generate)

    bench = sub.add_parser("benchmark", help="run the estimator comparison")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", required=True)
    bench.add_argument("--no-figures", action="store_true")
    bench.set_defaults(fn=cmd_benchmark)

    sweep = sub.add_parser("sweep", help="gamma/zeta grid benchmark")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    default_grid = ",".join(f"{g:g}" for g in DEFAULT_GRID)
    sweep.add_argument("--gamma-grid", default=default_grid)
    sweep.add_argument("--zeta-grid", default=default_grid)
    sweep.add_argument("--no-figures", action="store_true")
    sweep.set_defaults(fn=cmd_sweep)

    insp = sub.add_parser("inspect", help="print dataset statistics")
    insp.add_argument("--dataset", required=True)
    insp.set_defaults(fn=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
