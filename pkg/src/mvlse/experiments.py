"""Experiment drivers: consistency sweep, limit-law comparison, rate checks.

Each replication draws its randomness from a seed derived from the master
seed and the cell's (epsilon, n) values plus the replication index, so
cells can be run in any order, in parallel, or on their own.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from scipy.stats import ks_2samp

from . import kernels
from .asymptotics import limit_covariance, limit_path, sample_limit_law
from .config import Cell, ExperimentConfig, build_model, validate_config
from .estimator import estimate
from .model import ModelSpec
from .rng import brownian_increments, derive_seed, float_key
from .segment_path import Grid
from .simulator import SimConfig, run_em, simulate_observation, solve_limit_ode

__all__ = [
    "ExperimentReport",
    "cell_seed",
    "run_consistency",
    "run_asymptotics",
    "run_rate_check",
    "write_report",
    "format_csv",
    "KS_C_1PCT",
]

KS_C_1PCT = 1.63
CONSISTENCY_COLUMNS = ["epsilon", "n", "replication"]


@dataclass
class ExperimentReport:
    """Named tables of rows plus free-form summary values.

    ``tables`` maps a file stem to ``(columns, rows)``.
    """

    kind: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def rows(self, name):
        cols, rows = self.tables[name]
        return [dict(zip(cols, r)) for r in rows]


def cell_seed(master: int, epsilon: float, n: int, replication: int) -> int:
    return derive_seed(master, float_key(epsilon), int(n), int(replication))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(columns, rows) -> str:
    """RFC 4180 CSV with round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_report(report: ExperimentReport, out_dir, cfg: ExperimentConfig | None = None) -> list:
    """Write every table as ``<name>.csv`` plus a ``<kind>_metadata.json`` sidecar."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, (cols, rows) in report.tables.items():
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(cols, rows))
        paths.append(path)
    meta = {
        "kind": report.kind,
        "created": datetime.now(timezone.utc).isoformat(),
        "backend": kernels.BACKEND,
        "summary": report.summary,
        "config": cfg.to_dict() if cfg is not None else None,
    }
    with open(os.path.join(out_dir, f"{report.kind}_metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=_fmt)
    return paths


# --- task execution -------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _model_from_json(cfg_json: str) -> ModelSpec:
    return build_model(validate_config(cfg_json))


def resolve_pilot(cfg: ExperimentConfig, spec: ModelSpec):
    if cfg.pilot == "center":
        return spec.theta_box.center
    if cfg.pilot == "theta0":
        return np.asarray(cfg.theta0, dtype=float)
    return np.asarray(cfg.pilot, dtype=float)


def _estimate_once(cfg: ExperimentConfig, spec: ModelSpec, eps: float, n: int, rep: int):
    grid = cfg.grid_for(n)
    seed = cell_seed(cfg.rng_seed, eps, n, rep)
    theta0 = np.asarray(cfg.theta0, dtype=float)
    obs = simulate_observation(
        spec, SimConfig(eps, grid, cfg.n_particles, derive_seed(seed, 0), cfg.fine_factor), theta0
    )
    return estimate(
        obs,
        spec,
        eps,
        cfg.measure_mode,
        resolve_pilot(cfg, spec),
        cfg.refine_passes,
        cfg.n_particles,
        derive_seed(seed, 1),
        cfg.method,
    )


def _estimate_task(args):
    cfg_json, eps, n, rep = args
    cfg = validate_config(cfg_json)
    res = _estimate_once(cfg, _model_from_json(cfg_json), eps, n, rep)
    return res.theta_hat.tolist(), res.method, bool(res.converged), bool(res.in_box)


def _run_estimates(cfg, spec, jobs, threads):
    """``jobs`` is a list of ``(eps, n, rep)``; results come back in order."""
    threads = max(1, int(threads or 1))
    if spec is not None or threads == 1:
        spec = spec if spec is not None else build_model(cfg)
        out = []
        for eps, n, rep in jobs:
            res = _estimate_once(cfg, spec, eps, n, rep)
            out.append((res.theta_hat.tolist(), res.method, bool(res.converged), bool(res.in_box)))
        return out
    cfg_json = cfg.to_json()
    tasks = [(cfg_json, eps, n, rep) for eps, n, rep in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_estimate_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


# --- consistency ---------------------------------------------------------------------


def run_consistency(cfg: ExperimentConfig, spec: ModelSpec | None = None, threads: int = 1) -> ExperimentReport:
    """Estimate ``theta`` on ``n_replications`` synthetic paths per cell.

    Tables: ``consistency`` (one row per replication) and
    ``consistency_summary`` (bias, RMSE and median sup-error per cell).
    """
    theta0 = np.asarray(cfg.theta0, dtype=float)
    p = theta0.size
    cells = cfg.cells()
    jobs = [(c.epsilon, c.n, r) for c in cells for r in range(cfg.n_replications)]
    results = _run_estimates(cfg, spec, jobs, threads)

    cols = ["epsilon", "n", "replication"] + [f"theta_hat_{j + 1}" for j in range(p)] + [
        "abs_error",
        "method",
        "converged",
        "in_box",
    ]
    rows = []
    for (eps, n, rep), (th, method, conv, inside) in zip(jobs, results):
        err = float(np.max(np.abs(np.asarray(th) - theta0)))
        rows.append([eps, n, rep] + list(th) + [err, method, conv, inside])

    scols = ["epsilon", "n", "replications"] + [f"bias_{j + 1}" for j in range(p)] + [
        f"rmse_{j + 1}" for j in range(p)
    ] + ["median_abs_error"]
    srows = []
    medians = []
    R = cfg.n_replications
    for i, c in enumerate(cells):
        block = rows[i * R : (i + 1) * R]
        th = np.array([r[3 : 3 + p] for r in block], dtype=float)
        errs = np.array([r[3 + p] for r in block])
        bias = th.mean(axis=0) - theta0
        rmse = np.sqrt(np.mean((th - theta0) ** 2, axis=0))
        med = float(np.median(errs))
        medians.append(med)
        srows.append([c.epsilon, c.n, R] + bias.tolist() + rmse.tolist() + [med])
    return ExperimentReport(
        "consistency",
        {"consistency": (cols, rows), "consistency_summary": (scols, srows)},
        {"median_abs_error": medians, "cells": [(c.epsilon, c.n) for c in cells]},
    )


# --- asymptotic distribution -----------------------------------------------------------


def run_asymptotics(cfg: ExperimentConfig, spec: ModelSpec | None = None, threads: int = 1) -> ExperimentReport:
    """Compare ``(theta_hat - theta0)/eps`` at the smallest epsilon with draws
    from the limit law.

    Tables: ``asymptotics_empirical``, ``asymptotics_limit`` (the two
    samples), ``asymptotics_stats`` (per-coordinate KS statistic and
    variances) and ``asymptotics_covariance`` (all entries).
    """
    if spec is None:
        spec = build_model(cfg)
    if spec.p > 3:
        raise ValueError("the distribution comparison supports p <= 3")
    theta0 = np.asarray(cfg.theta0, dtype=float)
    p = spec.p
    cell = min(cfg.cells(), key=lambda c: (c.epsilon, -c.n))
    eps, n = cell.epsilon, cell.n
    grid = cfg.grid_for(n)

    limit = limit_path(spec, grid, theta0, cfg.fine_factor)
    cov_q = limit_covariance(spec, limit, theta0)
    ref = sample_limit_law(spec, limit, theta0, cfg.limit_samples, derive_seed(cfg.rng_seed, float_key(eps), n, 2**32))

    jobs = [(eps, n, r) for r in range(cfg.n_replications)]
    results = _run_estimates(cfg, None if cfg.model.get("name") != "custom" else spec, jobs, threads)
    z = (np.array([th for th, *_ in results]) - theta0) / eps

    ecols = ["replication", "epsilon", "n"] + [f"z_{j + 1}" for j in range(p)]
    erows = [[r, eps, n] + z[r].tolist() for r in range(len(z))]
    lcols = ["sample"] + [f"z_{j + 1}" for j in range(p)]
    lrows = [[i] + ref[i].tolist() for i in range(len(ref))]

    n1, n2 = len(z), len(ref)
    crit = KS_C_1PCT * math.sqrt(1.0 / n1 + 1.0 / n2)
    cov_e = np.atleast_2d(np.cov(z, rowvar=False, ddof=1)) if n1 > 1 else np.zeros((p, p))
    cov_s = np.atleast_2d(np.cov(ref, rowvar=False, ddof=1)) if n2 > 1 else np.zeros((p, p))
    scols = [
        "coordinate",
        "ks_statistic",
        "ks_critical_1pct",
        "ks_pass",
        "empirical_mean",
        "empirical_var",
        "limit_sample_var",
        "quadrature_var",
        "var_rel_error",
    ]
    srows = []
    ks_vals, rel = [], []
    for j in range(p):
        ks = float(ks_2samp(z[:, j], ref[:, j]).statistic)
        qv = float(cov_q[j, j])
        re = abs(cov_e[j, j] - qv) / qv if qv > 0 else float(abs(cov_e[j, j]))
        ks_vals.append(ks)
        rel.append(re)
        srows.append([j + 1, ks, crit, ks < crit, float(z[:, j].mean()), float(cov_e[j, j]), float(cov_s[j, j]), qv, re])
    ccols = ["i", "j", "empirical", "limit_sample", "quadrature"]
    crows = [[i + 1, j + 1, float(cov_e[i, j]), float(cov_s[i, j]), float(cov_q[i, j])] for i in range(p) for j in range(p)]
    return ExperimentReport(
        "asymptotics",
        {
            "asymptotics_empirical": (ecols, erows),
            "asymptotics_limit": (lcols, lrows),
            "asymptotics_stats": (scols, srows),
            "asymptotics_covariance": (ccols, crows),
        },
        {"epsilon": eps, "n": n, "ks": ks_vals, "ks_critical": crit, "var_rel_error": rel},
    )


# --- rate checks -----------------------------------------------------------------------


def _window_sup_sq(path_a, path_b, start):
    """Squared sup-norm distance of two knot arrays from index ``start`` on."""
    diff = path_a[start:] - path_b[start:]
    return float(np.max(np.sum(diff * diff, axis=-1)))


def _slope(x, y):
    A = np.vstack([np.log(x), np.ones(len(x))]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    return float(coef[0]), float(coef[1])


def run_rate_check(cfg: ExperimentConfig, spec: ModelSpec | None = None, threads: int = 1) -> ExperimentReport:
    """Mean-square error rates.

    * epsilon sweep: ``E |X^eps_T - X^0_T|_inf^2`` on the grid with
      ``rate_n`` steps refined by ``fine_factor``, for each epsilon in
      ``epsilon_list``;
    * step sweep: ``E |Yhat_T - X^0_T|_inf^2`` at ``rate_delta_epsilon`` for
      each step count in ``rate_delta_n_list``. All levels of a replication
      share one Brownian path (coarse increments are sums of the finest
      ones); ``X^0`` is a reference solution refined by
      ``rate_reference_factor``.
    """
    if spec is None:
        spec = build_model(cfg)
    theta0 = np.asarray(cfg.theta0, dtype=float)
    R, N, F = cfg.n_replications, cfg.n_particles, cfg.fine_factor

    # epsilon sweep
    grid = cfg.grid_for(cfg.rate_n)
    fine = grid.refine(F)
    x0 = solve_limit_ode(spec, grid, theta0, F, fine=True).path
    start = fine.n_steps  # window [T - r0, T] begins at knot index n (time T - r0)
    ecols = ["epsilon", "n", "replications", "mean_sq_error", "std_error"]
    erows = []
    for eps in cfg.epsilon_list:
        errs = []
        for rep in range(R):
            seed = cell_seed(cfg.rng_seed, eps, cfg.rate_n, rep)
            _, ens = simulate_observation(
                spec, SimConfig(eps, grid, N, derive_seed(seed, 0), F), theta0, return_ensemble=True
            )
            errs.append(_window_sup_sq(ens.paths[0], x0, start))
        errs = np.array(errs)
        se = float(errs.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        erows.append([float(eps), cfg.rate_n, R, float(errs.mean()), se])

    # step sweep
    ns = sorted(cfg.rate_delta_n_list)
    n_fine = ns[-1]
    eps_d = cfg.rate_delta_epsilon
    ref_grid = cfg.grid_for(n_fine)
    ref = solve_limit_ode(spec, ref_grid, theta0, cfg.rate_reference_factor, fine=True)
    ref_path = ref.path
    ref_times = ref.grid.time(np.arange(ref_path.shape[0]) - ref.grid.memory_steps)
    T, r0 = cfg.T, cfg.r0
    in_window = ref_times >= T - r0 - 1e-12
    dcols = ["epsilon", "n", "delta", "replications", "mean_sq_error", "std_error"]
    per_level = {n: [] for n in ns}
    for rep in range(R):
        seed = cell_seed(cfg.rng_seed, eps_d, n_fine, rep)
        dB_fine = brownian_increments(derive_seed(seed, 0), N, n_fine, spec.m, ref_grid.delta)
        for n in ns:
            g = cfg.grid_for(n)
            agg = n_fine // n
            dB = dB_fine.reshape(N, n, agg, spec.m).sum(axis=2)
            path = run_em(spec, g, eps_d, theta0, dB)[0]
            times = g.time(np.arange(path.shape[0]) - g.memory_steps)
            interp = np.stack([np.interp(ref_times[in_window], times, path[:, i]) for i in range(spec.d)], axis=-1)
            diff = interp - ref_path[in_window]
            per_level[n].append(float(np.max(np.sum(diff * diff, axis=-1))))
    drows = []
    for n in ns:
        e = np.array(per_level[n])
        se = float(e.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        drows.append([eps_d, n, cfg.grid_for(n).delta, R, float(e.mean()), se])

    summary = {}
    fcols = ["sweep", "slope", "intercept", "monotone_nonincreasing"]
    frows = []
    emse = [r[3] for r in erows]
    if len(erows) >= 2 and all(v > 0 for v in emse):
        s, c = _slope([r[0] for r in erows], emse)
        by_eps = [v for _, v in sorted(zip([r[0] for r in erows], emse), reverse=True)]
        frows.append(["epsilon", s, c, bool(all(b <= a for a, b in zip(by_eps, by_eps[1:])))])
        summary["epsilon_slope"] = s
    dmse = [r[4] for r in drows]  # ordered by increasing n, i.e. decreasing delta
    mono = bool(all(dmse[i + 1] <= dmse[i] for i in range(len(dmse) - 1)))
    if len(drows) >= 2 and all(v > 0 for v in dmse):
        s, c = _slope([r[2] for r in drows], dmse)
    else:
        s, c = float("nan"), float("nan")
    frows.append(["delta", s, c, mono])
    summary["delta_monotone"] = mono
    summary["epsilon_mse"] = emse
    summary["delta_mse"] = dmse
    return ExperimentReport(
        "rate",
        {"rate_epsilon": (ecols, erows), "rate_delta": (dcols, drows), "rate_fit": (fcols, frows)},
        summary,
    )
