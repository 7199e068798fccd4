"""Equal-weight empirical measures on segment space."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .segment_path import Segment

__all__ = ["EmpiricalMeasure", "integrate", "wasserstein2", "second_moment", "dirac"]


class EmpiricalMeasure:
    """Uniform measure over ``N`` segments sharing one grid.

    ``atoms`` has shape ``(N, M+1, d)``. It may be a read-only view into a
    larger array of particle paths, so building a measure at every time
    step costs nothing.
    """

    __slots__ = ("atoms", "delta")

    def __init__(self, atoms, delta: float):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 2:
            atoms = atoms[:, :, None]
        if atoms.ndim != 3 or atoms.shape[0] < 1:
            raise ValueError("atoms must have shape (N, M+1, d) with N >= 1")
        if atoms.flags.writeable:
            atoms = atoms.copy()
            atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "delta", float(delta))

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalMeasure is immutable")

    @classmethod
    def from_segments(cls, segments: Iterable[Segment]) -> "EmpiricalMeasure":
        segments = list(segments)
        if not segments:
            raise ValueError("need at least one segment")
        delta = segments[0].delta
        shape = segments[0].values.shape
        for s in segments:
            if s.delta != delta or s.values.shape != shape:
                raise ValueError("all atoms must share one grid and dimension")
        return cls(np.stack([s.values for s in segments]), delta)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def memory_steps(self) -> int:
        return self.atoms.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.atoms.shape[2]

    def segments(self):
        for a in self.atoms:
            yield Segment(a, self.delta)

    def same_grid(self, other: "EmpiricalMeasure") -> bool:
        return self.delta == other.delta and self.atoms.shape[1:] == other.atoms.shape[1:]

    def __repr__(self):
        return f"EmpiricalMeasure(N={self.n_atoms}, M={self.memory_steps}, d={self.dim})"


def dirac(seg: Segment) -> EmpiricalMeasure:
    """Point mass at ``seg``."""
    return EmpiricalMeasure(seg.values[None], seg.delta)


def integrate(mu: EmpiricalMeasure, f: Callable[[Segment], object]):
    """``(1/N) sum_i f(atom_i)``, summed in atom order."""
    vals = np.array([np.asarray(f(s), dtype=float) for s in mu.segments()])
    total = vals[0].copy()
    for v in vals[1:]:
        total = total + v
    out = total / mu.n_atoms
    return float(out) if np.ndim(out) == 0 else out


def _sup_dist_sq(a, b):
    # a: (N, M+1, d), b: (N, M+1, d) -> (N, N) matrix of squared sup-norm distances
    diff = a[:, None, :, :] - b[None, :, :, :]
    return np.max(np.sum(diff * diff, axis=-1), axis=-1)


def wasserstein2(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W2 distance (sup-norm ground cost) between same-size measures.

    For two uniform measures with equal atom counts the optimal coupling is
    a permutation, so this solves the assignment problem on the squared
    distance matrix.
    """
    if mu.n_atoms != nu.n_atoms:
        raise ValueError("W2 is only implemented for equal atom counts")
    if not mu.same_grid(nu):
        raise ValueError("measures live on different grids")
    cost = _sup_dist_sq(mu.atoms, nu.atoms)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].sum() / mu.n_atoms))


def second_moment(mu: EmpiricalMeasure) -> float:
    """``(1/N) sum_i |atom_i|_inf^2``."""
    sq = np.max(np.sum(mu.atoms * mu.atoms, axis=-1), axis=-1)
    return float(sq.sum() / mu.n_atoms)
