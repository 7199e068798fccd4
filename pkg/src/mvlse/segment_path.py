"""Uniform time grids, path segments and observed trajectories.

A segment is the restriction of a path to the memory window ``[-r0, 0]``.
It is stored by its knot values on the grid ``-r0 + i*delta``; between
knots the path is understood to be affine, so the knots are a lossless
representation and sup-norms over knots are exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "Segment",
    "TrajectoryRecord",
    "segment_at",
    "sup_norm",
    "segment_sup_bound_check",
]


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if a.ndim == ndim - 1:
        a = a[..., None]
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform grid with step ``delta``, ``n_steps`` horizon steps and
    ``memory_steps`` steps of memory.

    Only the step and the two counts are stored; ``T`` and ``r0`` are
    always derived from them.
    """

    delta: float
    n_steps: int
    memory_steps: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")
        if int(self.memory_steps) != self.memory_steps or self.memory_steps < 1:
            raise ValueError("memory_steps must be an integer >= 1")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "memory_steps", int(self.memory_steps))

    @classmethod
    def from_horizon(cls, T: float, r0: float, n_steps: int) -> "Grid":
        """Grid with ``n_steps`` steps over ``[0, T]``; ``r0`` must be a
        whole number of steps."""
        delta = T / n_steps
        m = r0 / delta
        if abs(m - round(m)) > 1e-9 * max(1.0, m):
            raise ValueError(
                f"r0={r0} is not a whole number of steps of size T/n={delta}"
            )
        return cls(delta, n_steps, int(round(m)))

    @property
    def T(self) -> float:
        return self.n_steps * self.delta

    @property
    def r0(self) -> float:
        return self.memory_steps * self.delta

    def time(self, k):
        """Time of step index ``k`` (may be negative, down to ``-M``)."""
        return np.asarray(k) * self.delta

    def refine(self, factor: int) -> "Grid":
        """The grid with step ``delta / factor`` over the same horizon."""
        factor = int(factor)
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        return Grid(self.delta / factor, self.n_steps * factor, self.memory_steps * factor)


class Segment:
    """Knot values of a path on ``[-r0, 0]``.

    ``values[i]`` is the path at ``-r0 + i*delta``; shape ``(M+1, d)``.
    A 1-d input is read as a scalar path (``d = 1``).
    """

    __slots__ = ("values", "delta")

    def __init__(self, values, delta: float):
        values = _frozen(values, 2)
        if values.shape[0] < 2:
            raise ValueError("a segment needs at least two knots")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta", float(delta))

    def __setattr__(self, name, value):
        raise AttributeError("Segment is immutable")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def memory_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def start(self) -> np.ndarray:
        """Value at ``-r0``."""
        return self.values[0]

    @property
    def end(self) -> np.ndarray:
        """Value at ``0``."""
        return self.values[-1]

    def __call__(self, s):
        """Evaluate the piecewise-linear interpolant at ``s`` in ``[-r0, 0]``."""
        knots = (np.arange(self.values.shape[0]) - self.memory_steps) * self.delta
        s = np.asarray(s, dtype=float)
        out = np.stack([np.interp(s, knots, self.values[:, j]) for j in range(self.dim)], axis=-1)
        return out

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return self.delta == other.delta and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.delta, self.values.tobytes()))

    def __repr__(self):
        return f"Segment(M={self.memory_steps}, d={self.dim}, delta={self.delta})"

    @classmethod
    def from_function(cls, f, grid: Grid) -> "Segment":
        """Sample ``f`` (vectorised over time) on the memory window of ``grid``."""
        s = grid.time(np.arange(-grid.memory_steps, 1))
        return cls(f(s), grid.delta)


class TrajectoryRecord:
    """A path observed on ``t_k = k*delta``, ``k = 0..n``, together with its
    history on ``[-r0, 0]``.
    """

    __slots__ = ("history", "observations", "grid", "_path")

    def __init__(self, history: Segment, observations, grid: Grid):
        obs = _frozen(observations, 2)
        if history.memory_steps != grid.memory_steps or history.delta != grid.delta:
            raise ValueError("history does not live on the record's grid")
        if obs.shape[0] != grid.n_steps + 1:
            raise ValueError(
                f"expected {grid.n_steps + 1} observations, got {obs.shape[0]}"
            )
        if obs.shape[1] != history.dim:
            raise ValueError("observation dimension differs from history dimension")
        if not np.array_equal(obs[0], history.end):
            raise ValueError("observations[0] must equal the history's value at 0")
        path = np.concatenate([history.values[:-1], obs])
        path.setflags(write=False)
        object.__setattr__(self, "history", history)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "_path", path)

    def __setattr__(self, name, value):
        raise AttributeError("TrajectoryRecord is immutable")

    @classmethod
    def from_path(cls, path, grid: Grid) -> "TrajectoryRecord":
        """Build from the full knot array covering ``[-r0, T]``."""
        path = np.asarray(path, dtype=float)
        if path.ndim == 1:
            path = path[:, None]
        M = grid.memory_steps
        return cls(Segment(path[: M + 1], grid.delta), path[M:], grid)

    @property
    def path(self) -> np.ndarray:
        """All knots from ``-r0`` to ``T``; index ``j`` is time ``(j - M)*delta``."""
        return self._path

    @property
    def dim(self) -> int:
        return self.observations.shape[1]

    def increments(self) -> np.ndarray:
        """``Y(t_k) - Y(t_{k-1})`` for ``k = 1..n``; shape ``(n, d)``."""
        return np.diff(self.observations, axis=0)

    def subsample(self, factor: int) -> "TrajectoryRecord":
        """Keep every ``factor``-th knot (coarsen the grid)."""
        g = self.grid
        if g.n_steps % factor or g.memory_steps % factor:
            raise ValueError("grid counts are not divisible by the subsampling factor")
        coarse = Grid(g.delta * factor, g.n_steps // factor, g.memory_steps // factor)
        return TrajectoryRecord.from_path(self._path[::factor], coarse)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self._path, other._path)

    def __repr__(self):
        g = self.grid
        return f"TrajectoryRecord(n={g.n_steps}, M={g.memory_steps}, delta={g.delta}, d={self.dim})"


def segment_at(traj: TrajectoryRecord, k: int) -> Segment:
    """The window segment at ``t_k``: knots ``Y((k-M)delta), ..., Y(k delta)``.

    Knots coincide with observation times, so the piecewise-linear
    interpolation of the observations is represented exactly.
    """
    n = traj.grid.n_steps
    if not 0 <= k <= n:
        raise IndexError(f"step index {k} outside 0..{n}")
    if k == 0:
        return traj.history
    M = traj.grid.memory_steps
    return Segment(traj.path[k : k + M + 1], traj.grid.delta)


def sup_norm(seg: Segment) -> float:
    """Largest Euclidean norm over the knots."""
    return float(np.max(np.linalg.norm(seg.values, axis=1)))


def segment_sup_bound_check(traj: TrajectoryRecord, k: int) -> bool:
    """Whether ``|segment_at(traj, k)|_inf <= 2 * sup_{-r0 <= s <= t_k} |Y(s)|``."""
    seg = segment_at(traj, k)
    M = traj.grid.memory_steps
    running = float(np.max(np.linalg.norm(traj.path[: M + k + 1], axis=1)))
    return sup_norm(seg) <= 2.0 * running
