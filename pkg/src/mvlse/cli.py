"""Command-line interface.

    mvlse simulate   --config cfg.json --out out/
    mvlse estimate   --config cfg.json --trajectory out/trajectory.csv
    mvlse experiment consistency|asymptotics|rate --config cfg.json --out out/
    mvlse probe      --config cfg.json

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(singular diffusion or information, non-finite state), 4 an estimate did
not converge.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import kernels
from .config import build_model, validate_config
from .errors import (
    ConfigError,
    DegenerateNormalEquations,
    NonFinite,
    SingularDiffusion,
    SingularInformation,
)
from .experiments import resolve_pilot, format_csv, run_asymptotics, run_consistency, run_rate_check, write_report
from .model import lipschitz_probe
from .estimator import estimate
from .rng import derive_seed
from .segment_path import Grid, TrajectoryRecord
from .simulator import SimConfig, simulate_observation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4

DEFAULT_CONFIG = {
    "theta0": [1.0, 0.5],
    "epsilon_list": [0.05],
    "n_scale": 10,
}

NUMERIC_ERRORS = (SingularDiffusion, SingularInformation, DegenerateNormalEquations, NonFinite)


def load_config(path, overrides=None):
    """Read and validate a config file; ``None`` gives the built-in default."""
    if path is None:
        raw = dict(DEFAULT_CONFIG)
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if overrides and isinstance(raw, dict):
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    return validate_config(raw)


def trajectory_rows(traj: TrajectoryRecord):
    g = traj.grid
    cols = ["step", "t"] + [f"x_{i + 1}" for i in range(traj.dim)]
    rows = []
    for j, x in enumerate(traj.path):
        k = j - g.memory_steps
        rows.append([k, float(g.time(k))] + [float(v) for v in x])
    return cols, rows


def read_trajectory(path) -> TrajectoryRecord:
    """Inverse of the ``simulate`` output: knots from step ``-M`` to ``n``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [r for r in reader if r]
    if header[:2] != ["step", "t"] or len(header) < 3:
        raise ConfigError(f"{path}: expected columns step,t,x_1,...")
    steps = np.array([int(r[0]) for r in body])
    times = np.array([float(r[1]) for r in body])
    x = np.array([[float(v) for v in r[2:]] for r in body])
    M, n = -int(steps[0]), int(steps[-1])
    if M < 1 or n < 1 or not np.array_equal(steps, np.arange(-M, n + 1)):
        raise ConfigError(f"{path}: steps must run consecutively from -M to n with M, n >= 1")
    grid = Grid(float(times[-1]) / n, n, M)
    return TrajectoryRecord.from_path(x, grid)


def _overrides(args):
    out = {}
    if getattr(args, "seed", None) is not None:
        out["rng_seed"] = args.seed
    if getattr(args, "measure_mode", None) is not None:
        out["measure_mode"] = args.measure_mode
    if getattr(args, "out", None) is not None:
        out["output_dir"] = args.out
    return out


def cmd_simulate(args):
    cfg = load_config(args.config, _overrides(args))
    spec = build_model(cfg)
    eps = args.epsilon if args.epsilon is not None else min(cfg.epsilon_list)
    n = args.n if args.n is not None else cfg.n_for(eps) if cfg.n_list is None else cfg.n_list[0]
    grid = cfg.grid_for(n)
    sim = SimConfig(eps, grid, cfg.n_particles, derive_seed(cfg.rng_seed, 0), cfg.fine_factor)
    traj = simulate_observation(spec, sim, np.asarray(cfg.theta0, dtype=float))
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "trajectory.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(*trajectory_rows(traj)))
    print(f"wrote {path} (epsilon={eps}, n={n}, M={grid.memory_steps}, delta={grid.delta})")
    return EXIT_OK


def cmd_estimate(args):
    cfg = load_config(args.config, _overrides(args))
    spec = build_model(cfg)
    traj = read_trajectory(args.trajectory)
    eps = args.epsilon if args.epsilon is not None else min(cfg.epsilon_list)
    res = estimate(
        traj,
        spec,
        eps,
        cfg.measure_mode,
        resolve_pilot(cfg, spec),
        cfg.refine_passes,
        cfg.n_particles,
        derive_seed(cfg.rng_seed, 1),
        cfg.method,
    )
    out = {
        "theta_hat": res.theta_hat.tolist(),
        "contrast": res.contrast_value,
        "method": res.method,
        "iterations": res.iterations,
        "converged": res.converged,
        "in_box": res.in_box,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _summarise(report):
    s = report.summary
    if report.kind == "consistency":
        for (eps, n), med in zip(s["cells"], s["median_abs_error"]):
            print(f"epsilon={eps:<8g} n={n:<6d} median |theta_hat - theta0| = {med:.4g}")
    elif report.kind == "asymptotics":
        print(f"epsilon={s['epsilon']:g} n={s['n']} KS 1% critical value {s['ks_critical']:.4f}")
        for j, (ks, re) in enumerate(zip(s["ks"], s["var_rel_error"])):
            print(f"  coordinate {j + 1}: KS = {ks:.4f}, variance relative error = {re:.3f}")
    elif report.kind == "rate":
        if "epsilon_slope" in s:
            print(f"epsilon slope = {s['epsilon_slope']:.3f}")
        print(f"step sweep errors = {', '.join(f'{v:.4g}' for v in s['delta_mse'])}; "
              f"monotone = {s['delta_monotone']}")


def cmd_experiment(args):
    cfg = load_config(args.config, _overrides(args))
    runner = {"consistency": run_consistency, "asymptotics": run_asymptotics, "rate": run_rate_check}[args.kind]
    report = runner(cfg, threads=args.threads)
    paths = write_report(report, cfg.output_dir, cfg)
    _summarise(report)
    for p in paths:
        print(f"wrote {p}")
    if args.kind == "consistency":
        conv = [r["converged"] for r in report.rows("consistency")]
        if not all(conv):
            print(f"{conv.count(False)} replication(s) did not converge", file=sys.stderr)
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_probe(args):
    cfg = load_config(args.config, _overrides(args))
    spec = build_model(cfg)
    rep = lipschitz_probe(spec, args.samples, cfg.rng_seed)
    for k, v in rep.as_dict().items():
        print(f"{k:<12s} {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvlse", description="Least-squares estimation for small-noise path-dependent McKean-Vlasov delay SDEs.")
    parser.add_argument("--version", action="store_true", help="print the kernel backend and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, out=True):
        p.add_argument("--config", help="JSON experiment config (default: built-in example)")
        p.add_argument("--seed", type=int, help="master seed (overrides rng_seed)")
        p.add_argument("--measure-mode", choices=["ensemble", "dirac"], help="measure path used by the contrast")
        if out:
            p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("simulate", help="write one observed trajectory as CSV")
    common(p)
    p.add_argument("--epsilon", type=float, help="noise level (default: smallest in epsilon_list)")
    p.add_argument("--n", type=int, help="number of observation steps")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate theta from a trajectory CSV")
    common(p, out=False)
    p.add_argument("--trajectory", required=True, help="CSV written by 'simulate'")
    p.add_argument("--epsilon", type=float, help="noise level (default: smallest in epsilon_list)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run a full experiment and write CSV tables")
    p.add_argument("kind", choices=["consistency", "asymptotics", "rate"])
    common(p)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("probe", help="empirical Lipschitz constants of the model")
    common(p, out=False)
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(f"mvlse kernels: {kernels.BACKEND}")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
