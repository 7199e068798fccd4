"""Interacting-particle Euler-Maruyama simulation and the limiting ODE.

The unknown law of the segment process is replaced by the empirical
measure of ``N`` particles advanced in lockstep:

    Y^i(t_k) = Y^i(t_{k-1}) + b(Yhat^i, mu_{k-1}, theta) delta
               + eps sigma(Yhat^i, mu_{k-1}) dB^i_k,

with ``mu_{k-1}`` the empirical measure of all particle segments at step
``k-1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NonFinite
from .measure import EmpiricalMeasure
from .model import ModelSpec, diffusion_batch, drift_batch, initial_segment
from .rng import brownian_increments
from .segment_path import Grid, Segment, TrajectoryRecord

__all__ = [
    "SimConfig",
    "ParticleEnsemble",
    "run_em",
    "simulate_particles",
    "simulate_observation",
    "solve_limit_ode",
]


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``epsilon = 0`` is accepted (it gives the limiting ODE); experiment
    configs require ``0 < epsilon < 1``.
    """

    epsilon: float
    grid: Grid
    n_particles: int = 256
    rng_seed: int = 0
    fine_factor: int = 8

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.fine_factor < 1:
            raise ValueError("fine_factor must be >= 1")


class ParticleEnsemble:
    """``N`` particle paths sharing one grid and initial datum.

    ``paths`` has shape ``(N, M+n+1, d)``; index ``j`` is time ``(j-M)*delta``.
    """

    def __init__(self, paths, grid: Grid):
        paths = np.asarray(paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        if paths.shape[1] != grid.memory_steps + grid.n_steps + 1:
            raise ValueError("paths do not match the grid")
        paths.setflags(write=False)
        self.paths = paths
        self.grid = grid

    @property
    def n_particles(self) -> int:
        return self.paths.shape[0]

    @property
    def current_step(self) -> int:
        return self.grid.n_steps

    def trajectory(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord.from_path(self.paths[i], self.grid)

    def states_at(self, k: int) -> np.ndarray:
        """All particle segments at step ``k``: ``(N, M+1, d)`` view."""
        M = self.grid.memory_steps
        return self.paths[:, k : k + M + 1]

    def measure_at(self, k: int) -> EmpiricalMeasure:
        if not 0 <= k <= self.grid.n_steps:
            raise IndexError(f"step {k} outside 0..{self.grid.n_steps}")
        return EmpiricalMeasure(self.states_at(k), self.grid.delta)


def run_em(spec: ModelSpec, grid: Grid, epsilon: float, theta, dB, history: Segment | None = None) -> np.ndarray:
    """Advance ``len(dB)`` particles over ``grid`` with the given increments.

    ``dB`` has shape ``(N, n, m)``. Returns knot values ``(N, M+n+1, d)``.
    """
    theta = np.asarray(theta, dtype=float)
    dB = np.asarray(dB, dtype=float)
    N, n, m = dB.shape
    if n != grid.n_steps or m != spec.m:
        raise ValueError(f"increments have shape {dB.shape}, expected (N, {grid.n_steps}, {spec.m})")
    hist = (history if history is not None else initial_segment(spec, grid)).values
    M, d, delta = grid.memory_steps, spec.d, grid.delta

    if spec.kernel == "example" and spec.b0 is not None and d == 1 and m == 1:
        paths = kernels.em_example(
            hist[:, 0], float(theta[0]), float(theta[1]), float(epsilon), delta, dB[:, :, 0], spec.b0.code
        )[:, :, None]
    else:
        paths = np.empty((N, M + 1 + n, d))
        paths[:, : M + 1] = hist
        for k in range(n):
            states = paths[:, k : k + M + 1]
            step = drift_batch(spec, states, states, delta, theta) * delta
            if epsilon != 0.0:
                sig = diffusion_batch(spec, states, states, delta)
                step = step + epsilon * np.einsum("nij,nj->ni", sig, dB[:, k])
            paths[:, k + M + 1] = paths[:, k + M] + step
            if not np.all(np.isfinite(paths[:, k + M + 1])):
                raise NonFinite(f"state became non-finite at step {k + 1}")
    if not np.all(np.isfinite(paths)):
        raise NonFinite("simulated state became non-finite")
    return paths


def simulate_particles(spec: ModelSpec, cfg: SimConfig, theta) -> ParticleEnsemble:
    """Interacting particle system on ``cfg.grid``; deterministic in the seed."""
    g = cfg.grid
    dB = brownian_increments(cfg.rng_seed, cfg.n_particles, g.n_steps, spec.m, g.delta)
    return ParticleEnsemble(run_em(spec, g, cfg.epsilon, theta, dB), g)


def simulate_observation(spec: ModelSpec, cfg: SimConfig, theta0, return_ensemble: bool = False):
    """Synthetic data: particle 0 of an ensemble run on the grid refined by
    ``cfg.fine_factor``, subsampled to the coarse grid.
    """
    F = cfg.fine_factor
    fine = cfg.grid.refine(F)
    dB = brownian_increments(cfg.rng_seed, cfg.n_particles, fine.n_steps, spec.m, fine.delta)
    ens = ParticleEnsemble(run_em(spec, fine, cfg.epsilon, theta0, dB), fine)
    obs = ens.trajectory(0).subsample(F)
    if return_ensemble:
        return obs, ens
    return obs


def solve_limit_ode(spec: ModelSpec, grid: Grid, theta0, fine_factor: int = 1, fine: bool = False) -> TrajectoryRecord:
    """Explicit Euler for ``dX = b(X_t, delta_{X_t}, theta0) dt``, ``X_0 = xi``.

    Runs on the grid refined by ``fine_factor``; returns the coarse-grid
    record unless ``fine`` is set.
    """
    fg = grid.refine(fine_factor)
    dB = np.zeros((1, fg.n_steps, spec.m))
    rec = TrajectoryRecord.from_path(run_em(spec, fg, 0.0, theta0, dB)[0], fg)
    return rec if fine else rec.subsample(fine_factor)
