"""Least-squares contrast and drift-parameter estimators.

For observations ``Y(t_0..t_n)`` the contrast is

    Psi(theta) = eps^-2 delta^-1 sum_k P_k(theta)^T W_{k-1} P_k(theta),
    P_k(theta) = Y(t_k) - Y(t_{k-1}) - b(Yhat_{t_{k-1}}, mu_{k-1}, theta) delta,

with ``W_{k-1} = (sigma sigma^T)^{-1}`` at step ``k-1``. The measures
``mu_{k-1}`` stand in for the law of the segment process; see
:func:`estimation_measures` for the two ways of building them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateNormalEquations
from .measure import EmpiricalMeasure
from .model import ModelSpec, diffusion_batch, drift_batch, grad_batch, inverse_gram
from .optimize import nelder_mead
from .segment_path import TrajectoryRecord
from .simulator import SimConfig, simulate_particles

__all__ = [
    "MeasurePath",
    "ContrastContext",
    "EstimationResult",
    "estimation_measures",
    "build_context",
    "residual",
    "contrast",
    "contrast_many",
    "phi",
    "normal_system",
    "normal_equations_lse",
    "example_sums",
    "example_lse",
    "box_quadratic_min",
    "estimate_closed_form",
    "estimate_numeric",
    "grid_oracle",
    "estimate",
]

MEASURE_MODES = ("ensemble", "dirac")


class MeasurePath(Sequence):
    """Measures ``mu_0, ..., mu_{n-1}`` used at steps ``k = 1..n``.

    Backed by an ``(N, M+n+1, d)`` array of paths; item ``j`` is the
    empirical measure of the ``N`` segments at step ``j``. With a single
    path this is the Dirac at that path's segment.
    """

    def __init__(self, paths, grid, mode: str):
        paths = np.asarray(paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[None]
        self.paths = paths
        self.grid = grid
        self.mode = mode

    def __len__(self):
        return self.grid.n_steps

    def atoms(self, j: int) -> np.ndarray:
        if not 0 <= j < len(self):
            raise IndexError(j)
        M = self.grid.memory_steps
        return self.paths[:, j : j + M + 1]

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[i] for i in range(*j.indices(len(self)))]
        return EmpiricalMeasure(self.atoms(j), self.grid.delta)


def estimation_measures(
    spec: ModelSpec,
    observed: TrajectoryRecord,
    epsilon: float,
    mode: str = "ensemble",
    pilot=None,
    n_particles: int = 256,
    seed: int = 0,
) -> MeasurePath:
    """Measure path for the contrast.

    ``"dirac"`` uses the point mass at the observed segment (exact in the
    small-noise limit). ``"ensemble"`` simulates ``n_particles`` particles
    from the model's initial datum at ``pilot`` (default: centre of the
    parameter box) on the observation grid.
    """
    if mode == "dirac":
        return MeasurePath(observed.path[None], observed.grid, "dirac")
    if mode != "ensemble":
        raise ValueError(f"unknown measure mode {mode!r}")
    if pilot is None:
        pilot = spec.theta_box.center
    cfg = SimConfig(epsilon, observed.grid, n_particles, seed, 1)
    ens = simulate_particles(spec, cfg, pilot)
    return MeasurePath(ens.paths, observed.grid, "ensemble")


@dataclass(frozen=True, eq=False)
class ContrastContext:
    """Everything the contrast needs, precomputed once.

    ``weights[k-1]`` is ``(sigma sigma^T)^{-1}`` at step ``k-1``. For
    affine drifts ``offsets`` and ``designs`` hold ``b(., ., 0)`` and the
    (theta-free) gradient so that the contrast is evaluated without
    calling the drift.
    """

    observed: TrajectoryRecord
    measures: MeasurePath
    spec: ModelSpec
    epsilon: float
    weights: np.ndarray
    increments: np.ndarray
    offsets: Optional[np.ndarray] = None
    designs: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.observed.grid.n_steps

    @property
    def delta(self) -> float:
        return self.observed.grid.delta

    def state(self, j: int) -> np.ndarray:
        """Observed segment at step ``j`` as ``(M+1, d)`` knots."""
        M = self.observed.grid.memory_steps
        return self.observed.path[j : j + M + 1]


def build_context(
    observed: TrajectoryRecord,
    spec: ModelSpec,
    epsilon: float,
    measures: Optional[MeasurePath] = None,
) -> ContrastContext:
    """Precompute weights (and affine pieces) along the observed path.

    Raises :class:`~mvlse.errors.SingularDiffusion` if ``sigma sigma^T`` is
    singular at any step.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive for the contrast")
    if observed.dim != spec.d:
        raise ValueError("observation dimension differs from the model's d")
    grid = observed.grid
    if measures is None:
        measures = MeasurePath(observed.path[None], grid, "dirac")
    if len(measures) != grid.n_steps or measures.grid.memory_steps != grid.memory_steps:
        raise ValueError("measure path does not match the observation grid")
    n, delta = grid.n_steps, grid.delta
    weights = np.empty((n, spec.d, spec.d))
    offsets = designs = None
    if spec.affine:
        offsets = np.empty((n, spec.d))
        designs = np.empty((n, spec.d, spec.p))
        zero = np.zeros(spec.p)
    M = grid.memory_steps
    for j in range(n):
        state = observed.path[None, j : j + M + 1]
        atoms = measures.atoms(j)
        weights[j] = inverse_gram(diffusion_batch(spec, state, atoms, delta)[0])
        if spec.affine:
            offsets[j] = drift_batch(spec, state, atoms, delta, zero)[0]
            designs[j] = grad_batch(spec, state, atoms, delta, spec.theta_box.center)[0]
    for a in (weights, offsets, designs):
        if a is not None:
            a.setflags(write=False)
    inc = observed.increments()
    return ContrastContext(observed, measures, spec, float(epsilon), weights, inc, offsets, designs)


def residual(ctx: ContrastContext, k: int, theta) -> np.ndarray:
    """``P_k(theta)`` for ``1 <= k <= n``, from the drift callback."""
    if not 1 <= k <= ctx.n:
        raise IndexError(f"residual index {k} outside 1..{ctx.n}")
    b = drift_batch(ctx.spec, ctx.state(k - 1)[None], ctx.measures.atoms(k - 1), ctx.delta, theta)[0]
    return ctx.increments[k - 1] - b * ctx.delta


def _residuals(ctx: ContrastContext, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if ctx.designs is not None:
        return ctx.increments - (ctx.offsets + ctx.designs @ theta) * ctx.delta
    return np.array([residual(ctx, k, theta) for k in range(1, ctx.n + 1)])


def contrast(ctx: ContrastContext, theta) -> float:
    """``Psi(theta) >= 0``."""
    P = _residuals(ctx, theta)
    q = np.einsum("ki,kij,kj->", P, ctx.weights, P)
    return float(q / (ctx.epsilon**2 * ctx.delta))


def contrast_many(ctx: ContrastContext, thetas) -> np.ndarray:
    """Contrast at each row of ``thetas`` (shape ``(K, p)``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if ctx.designs is None:
        return np.array([contrast(ctx, t) for t in thetas])
    out = np.empty(len(thetas))
    scale = ctx.epsilon**2 * ctx.delta
    for start in range(0, len(thetas), 2048):
        block = thetas[start : start + 2048]
        P = ctx.increments[None] - (ctx.offsets[None] + np.einsum("kdp,tp->tkd", ctx.designs, block)) * ctx.delta
        out[start : start + len(block)] = np.einsum("tki,kij,tkj->t", P, ctx.weights, P) / scale
    return out


def phi(ctx: ContrastContext, theta, theta0) -> float:
    """``eps^2 (Psi(theta) - Psi(theta0))``."""
    return ctx.epsilon**2 * (contrast(ctx, theta) - contrast(ctx, theta0))


@dataclass(frozen=True)
class EstimationResult:
    """Outcome of one estimation.

    ``in_box`` tells whether the unconstrained stationary point of the
    contrast lies in the closed parameter box; ``stationary`` holds that
    point for the closed-form route (``None`` otherwise).
    """

    theta_hat: np.ndarray
    contrast_value: float
    method: str
    iterations: int = 0
    converged: bool = True
    in_box: bool = True
    stationary: Optional[np.ndarray] = None


def normal_system(ctx: ContrastContext):
    """``(A, r)`` with ``A theta = r`` the normal equations of an affine drift
    ``b = b_c + G theta``: ``A = delta sum G^T W G``, ``r = sum G^T W (dY - b_c delta)``.
    """
    if ctx.designs is None:
        raise ValueError("closed form needs a drift flagged affine in theta")
    G, W = ctx.designs, ctx.weights
    A = ctx.delta * np.einsum("kdp,kde,keq->pq", G, W, G)
    rhs = np.einsum("kdp,kde,ke->p", G, W, ctx.increments - ctx.offsets * ctx.delta)
    return 0.5 * (A + A.T), rhs


def _check_system(A):
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
        raise DegenerateNormalEquations("normal equations are singular: parameters not identifiable from these data")


def normal_equations_lse(ctx: ContrastContext) -> np.ndarray:
    """Stationary point of the contrast for an affine drift (over ``R^p``)."""
    A, rhs = normal_system(ctx)
    _check_system(A)
    return np.linalg.solve(A, rhs)


def example_sums(ctx: ContrastContext) -> np.ndarray:
    """``A1..A5`` of the scalar example, computed from the observations.

    With ``w_k = (1 + |Y(t_{k-1})|)^-2``, ``g_k`` the mean-field term
    ``int b0(Yhat_{t_{k-1}}, z) mu_{k-1}(dz)`` and ``dY_k`` the increments::

        A1 = sum w,  A2 = sum w dY,  A3 = sum w dY g,  A4 = sum w g,  A5 = sum w g^2
    """
    b0 = ctx.spec.b0
    if ctx.spec.name != "example" or b0 is None:
        raise ValueError("example_lse applies only to the built-in example model")
    y = ctx.observed.observations[:, 0]
    dy = np.diff(y)
    w = 1.0 / (1.0 + np.abs(y[:-1])) ** 2
    M = ctx.observed.grid.memory_steps
    path = ctx.observed.path[:, 0]
    own = b0.own(np.stack([path[j : j + M + 1] for j in range(ctx.n)]))
    g = np.array([own[j] + np.mean(b0.other(ctx.measures.atoms(j)[:, :, 0])) for j in range(ctx.n)])
    return np.array([w.sum(), (w * dy).sum(), (w * dy * g).sum(), (w * g).sum(), (w * g * g).sum()])


def example_lse(ctx: ContrastContext) -> np.ndarray:
    """Explicit two-parameter stationary point for the scalar example::

        theta1 = (A2 A5 - A3 A4) / (delta (A1 A5 - A4^2))
        theta2 = (A1 A3 - A2 A4) / (delta (A1 A5 - A4^2))
    """
    A1, A2, A3, A4, A5 = example_sums(ctx)
    det = A1 * A5 - A4**2
    if not np.isfinite(det) or abs(det) <= 1e-12 * max(A1 * A5, 1e-300):
        raise DegenerateNormalEquations("A1*A5 - A4^2 vanishes: parameters not identifiable from these data")
    delta = ctx.delta
    return np.array([(A2 * A5 - A3 * A4) / (delta * det), (A1 * A3 - A2 * A4) / (delta * det)])


def box_quadratic_min(A, rhs, lower, upper, tol: float = 1e-12) -> np.ndarray:
    """Exact minimiser of ``theta^T A theta - 2 r^T theta`` over a box.

    ``A`` must be positive definite. Every face of the box is visited (each
    coordinate free, at its lower or at its upper bound); the minimiser is
    the best feasible stationary point among the faces. Cost is ``3^p``
    small solves, fine for the parameter counts used here.
    """
    A = np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    p = rhs.size
    if p > 10:
        raise ValueError("face enumeration is limited to p <= 10")
    width = upper - lower
    best, best_val = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=p):
        pat = np.array(pattern)
        theta = np.where(pat == 1, lower, upper)
        free = pat == 0
        if free.any():
            Aff = A[np.ix_(free, free)]
            r = rhs[free] - A[np.ix_(free, ~free)] @ theta[~free]
            try:
                theta[free] = np.linalg.solve(Aff, r)
            except np.linalg.LinAlgError:
                continue
            if np.any(theta < lower - tol * width) or np.any(theta > upper + tol * width):
                continue
            theta = np.clip(theta, lower, upper)
        val = float(theta @ A @ theta - 2.0 * rhs @ theta)
        if val < best_val:
            best, best_val = theta, val
    return best


def estimate_closed_form(ctx: ContrastContext) -> EstimationResult:
    """Exact minimiser of the contrast over the closed box, affine drifts only.

    The stationary point (explicit A-sum formula for the example model,
    normal equations otherwise) is returned when it lies in the box;
    otherwise the exact box-constrained minimiser of the quadratic
    contrast. ``in_box`` records which case occurred.
    """
    box = ctx.spec.theta_box
    if ctx.spec.name == "example" and ctx.spec.b0 is not None:
        stat = example_lse(ctx)
        A1, A2, A3, A4, A5 = example_sums(ctx)
        A = ctx.delta * np.array([[A1, A4], [A4, A5]])
        rhs = np.array([A2, A3])
    else:
        A, rhs = normal_system(ctx)
        _check_system(A)
        stat = np.linalg.solve(A, rhs)
    inside = box.contains(stat, strict=False)
    theta = stat if inside else box_quadratic_min(A, rhs, box.lower, box.upper)
    return EstimationResult(theta, contrast(ctx, theta), "closed_form", 0, True, bool(inside), stat)


def estimate_numeric(ctx: ContrastContext, start=None, max_evals: int = 10_000) -> EstimationResult:
    """Nelder-Mead over the parameter box (projected proposals)."""
    box = ctx.spec.theta_box
    if start is None:
        start = box.center
    res = nelder_mead(lambda t: contrast(ctx, t), start, box.lower, box.upper, max_evals=max_evals)
    return EstimationResult(res.x, res.fun, "nelder_mead", res.iterations, res.converged, True)


def grid_oracle(ctx: ContrastContext, resolution: int) -> np.ndarray:
    """Brute-force argmin over ``resolution`` points per axis of the closed box.

    Points are scanned in lexicographic order and the first minimum wins.
    """
    box = ctx.spec.theta_box
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if box.p > 3:
        raise ValueError("grid search is limited to p <= 3")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(box.lower, box.upper)]
    pts = np.array(list(itertools.product(*axes)))
    vals = contrast_many(ctx, pts)
    return pts[int(np.argmin(vals))]


def estimate(
    observed: TrajectoryRecord,
    spec: ModelSpec,
    epsilon: float,
    mode: str = "ensemble",
    pilot=None,
    refine_passes: int = 1,
    n_particles: int = 256,
    seed: int = 0,
    method: str = "auto",
) -> EstimationResult:
    """End-to-end LSE from one observed path.

    In ensemble mode the measures are simulated at ``pilot`` and then
    rebuilt ``refine_passes`` times at the current estimate (projected into
    the box). ``method`` is ``"closed_form"``, ``"nelder_mead"`` or
    ``"auto"`` (closed form when the drift is affine).
    """
    from .rng import derive_seed

    if method == "auto":
        method = "closed_form" if spec.affine else "nelder_mead"
    if pilot is None:
        pilot = spec.theta_box.center
    passes = refine_passes if mode == "ensemble" else 0
    current = np.asarray(pilot, dtype=float)
    result = None
    for i in range(passes + 1):
        mp = estimation_measures(spec, observed, epsilon, mode, current, n_particles, derive_seed(seed, i))
        ctx = build_context(observed, spec, epsilon, mp)
        if method == "closed_form":
            result = estimate_closed_form(ctx)
        elif method == "nelder_mead":
            result = estimate_numeric(ctx, spec.theta_box.project(current))
        else:
            raise ValueError(f"unknown estimation method {method!r}")
        current = spec.theta_box.project(result.theta_hat)
    return result
