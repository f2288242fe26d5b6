"""Command-line front end.

``wgf run <experiment>`` executes one experiment and writes its CSV
artifacts; ``wgf sweep-n`` runs the error-versus-neuron-count study;
``wgf oracle fpk`` runs the reference finite-difference solver on its
own.  Exit codes: 0 success, 2 configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from wgf.errors import ConfigError, NumericError
from wgf.harness import (
    DENSITY_HEADER,
    Experiment,
    apply_overrides,
    default_config,
    load_config_file,
    run_experiment,
    write_csv,
)


def _experiment(name: str) -> Experiment:
    try:
        return Experiment(name)
    except ValueError:
        raise ConfigError(
            f"unknown experiment {name!r}; choose from "
            + ", ".join(e.value for e in Experiment)
        )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--n", type=int, dest="n_neurons", help="forward neuron count")
    p.add_argument("--subset", choices=["a", "b", "both"], help="updated coordinates")
    p.add_argument("--dt", type=float, help="step size")
    p.add_argument("--steps", type=int, help="step count")
    p.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--particles", type=int, help="Monte Carlo particle count")
    p.add_argument("--b", type=float, dest="bias_range", help="initial bias half-range")
    p.add_argument("--chi", type=float, help="interaction coupling")
    p.add_argument("--pinv-tol", type=float, dest="pinv_rel_tol",
                   help="relative pseudoinverse truncation")
    p.add_argument("--metric", dest="metric_mode",
                   choices=["empirical", "analytic_gaussian"], help="metric mode")
    p.add_argument("--desk-scale", action="store_true", default=None,
                   help="divide particle counts by 100")
    p.add_argument("--out", dest="output_dir", help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wgf",
        description="Projected Wasserstein gradient flows on ReLU transport maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("experiment")
    _add_common_flags(run_p)

    sweep_p = sub.add_parser("sweep-n", help="error-vs-neuron-count sweep")
    sweep_p.add_argument("experiment", help="base experiment for the sweep")
    sweep_p.add_argument("--n-list", default="4,8,16,32,64",
                         help="comma-separated neuron counts")
    sweep_p.add_argument("--subsets", default="a,both",
                         help="comma-separated subsets (a,b,both)")
    _add_common_flags(sweep_p)

    oracle_p = sub.add_parser("oracle", help="standalone reference solvers")
    oracle_sub = oracle_p.add_subparsers(dest="oracle_command", required=True)
    fpk = oracle_sub.add_parser("fpk", help="finite-difference drift-diffusion solve")
    fpk.add_argument("--potential", choices=["quadratic", "quartic", "sextic"],
                     default="quadratic")
    fpk.add_argument("--gamma", type=float, default=0.5, help="diffusion coefficient")
    fpk.add_argument("--mu0", type=float, default=0.0, help="quadratic potential center")
    fpk.add_argument("--x-min", type=float, default=-9.0)
    fpk.add_argument("--x-max", type=float, default=9.0)
    fpk.add_argument("--dx", type=float, default=5e-3)
    fpk.add_argument("--dt", type=float, default=1e-4)
    fpk.add_argument("--steps", type=int, default=10_000)
    fpk.add_argument("--snapshots", type=int, default=11)
    fpk.add_argument("--out", dest="output_dir", default="out")
    return parser


_OVERRIDE_KEYS = (
    "n_neurons", "subset", "dt", "steps", "seed", "particles", "bias_range",
    "chi", "pinv_rel_tol", "metric_mode", "desk_scale", "output_dir",
)


def _config_from_args(args) -> "ExperimentConfig":
    exp = _experiment(args.experiment)
    config = default_config(exp)
    if args.config:
        config = apply_overrides(config, load_config_file(args.config))
    cli_overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    return apply_overrides(config, cli_overrides)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    for name, path in sorted(result.paths.items()):
        print(f"{name}: {path}")
    print(f"done in {result.wall_time:.1f}s")
    return 0


def _cmd_sweep(args) -> int:
    base = _experiment(args.experiment)
    args.experiment = Experiment.SWEEP_N.value
    config = _config_from_args(args)
    try:
        n_list = tuple(int(tok) for tok in args.n_list.split(","))
    except ValueError:
        raise ConfigError(f"bad --n-list {args.n_list!r}")
    subset_map = {"a": "A_ONLY", "b": "B_ONLY", "both": "BOTH"}
    from wgf.metric import ParamSubset

    subsets = []
    for tok in args.subsets.split(","):
        if tok not in subset_map:
            raise ConfigError(f"bad subset token {tok!r}")
        subsets.append(ParamSubset[subset_map[tok]])
    from dataclasses import replace

    config = replace(
        config, sweep_base=base, sweep_n_list=n_list, sweep_subsets=tuple(subsets)
    )
    result = run_experiment(config)
    print(f"errors: {result.paths['errors']}")
    print(f"done in {result.wall_time:.1f}s")
    return 0


def _cmd_oracle_fpk(args) -> int:
    from wgf.network import standard_gaussian
    from wgf.oracles import fd_fokker_planck

    potentials = {
        "quadratic": lambda x: x - args.mu0,
        "quartic": lambda x: (x - 1.0) ** 3 - (x - 1.0),
        "sextic": lambda x: (x - 4.0) ** 5,
    }
    n = int(round((args.x_max - args.x_min) / args.dx)) + 1
    x = np.linspace(args.x_min, args.x_max, n)
    grid = fd_fokker_planck(
        potentials[args.potential], args.gamma, args.x_min, args.x_max, n,
        args.dt, args.steps, standard_gaussian().pdf(x),
        snapshot_every=max(args.steps // max(args.snapshots - 1, 1), 1),
    )
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, "density.csv")
    rows = [
        (t, xi, vi)
        for i, t in enumerate(grid.times)
        for xi, vi in zip(grid.x, grid.values[i])
    ]
    write_csv(path, DENSITY_HEADER, rows)
    print(f"density: {path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep-n":
            return _cmd_sweep(args)
        if args.command == "oracle":
            return _cmd_oracle_fpk(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
