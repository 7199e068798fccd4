"""Box-projected Nelder-Mead."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NelderMeadResult", "nelder_mead"]


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_evals: int
    iterations: int
    converged: bool


def nelder_mead(
    f,
    x0,
    lower,
    upper,
    step=None,
    xatol: float = 1e-8,
    fatol: float = 1e-10,
    max_evals: int = 10_000,
) -> NelderMeadResult:
    """Minimise ``f`` over the closed box ``[lower, upper]``.

    Every trial point is projected onto the box before evaluation. Stops
    when the simplex diameter (max-norm distance of any vertex from the
    best one) is below ``xatol`` and the spread of function values is below
    ``fatol``, or after ``max_evals`` evaluations; only the last case is
    reported as not converged.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    p = x0.size
    if step is None:
        step = 0.05 * (upper - lower)
    step = np.broadcast_to(np.asarray(step, dtype=float), (p,))

    n_evals = 0

    def evaluate(x):
        nonlocal n_evals
        n_evals += 1
        return float(f(x))

    simplex = [x0]
    for j in range(p):
        v = x0.copy()
        v[j] = v[j] + step[j] if v[j] + step[j] <= upper[j] else v[j] - step[j]
        simplex.append(np.clip(v, lower, upper))
    simplex = np.array(simplex)
    fvals = np.array([evaluate(v) for v in simplex])

    iterations = 0
    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = fvals[-1] - fvals[0]
        if diameter < xatol and spread < fatol:
            converged = True
            break
        if n_evals >= max_evals:
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = np.clip(centroid + (centroid - worst), lower, upper)
        fr = evaluate(xr)
        if fr < fvals[0]:
            xe = np.clip(centroid + 2.0 * (centroid - worst), lower, upper)
            fe = evaluate(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = np.clip(centroid + 0.5 * (xr - centroid), lower, upper)
            fc = evaluate(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = np.clip(centroid + 0.5 * (worst - centroid), lower, upper)
            fc = evaluate(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        # shrink towards the best vertex
        simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
        fvals[1:] = [evaluate(v) for v in simplex[1:]]

    return NelderMeadResult(simplex[0].copy(), float(fvals[0]), n_evals, iterations, converged)
