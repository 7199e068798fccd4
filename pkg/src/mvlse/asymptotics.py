"""Small-noise limit objects along the deterministic limit path.

All integrals run over the fine grid of the limit ODE with the composite
trapezoid rule; wherever a law appears it is the point mass at the
current limit segment. The matrix conventions are: the drift gradient is
``d x p``, its transpose ``p x d``, and the second derivative is ``p x
(p*d)`` made of ``p`` blocks ``A_k`` of size ``p x d``. For such ``A`` and
``B`` in ``R^d``, ``A o B`` is the ``p x p`` matrix with columns
``A_k B``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformation
from .measure import EmpiricalMeasure
from .model import (
    ModelSpec,
    diffusion_batch,
    drift_batch,
    eval_diffusion,
    grad_batch,
    grad_theta_drift,
    hess_theta_drift,
    inverse_gram,
)
from .rng import stream
from .segment_path import Grid, Segment, TrajectoryRecord
from .simulator import solve_limit_ode

__all__ = [
    "LimitPath",
    "AsymptoticReport",
    "limit_path",
    "lambda_mismatch",
    "circ",
    "capital_xi",
    "information_matrix",
    "k_matrix",
    "k0_matrix",
    "upsilon",
    "noise_matrix",
    "limit_covariance",
    "asymptotic_report",
    "sample_limit_law",
]


class LimitPath:
    """The limit ODE solution on a fine grid plus per-node caches."""

    def __init__(self, spec: ModelSpec, ode: TrajectoryRecord, theta0):
        self.spec = spec
        self.ode = ode
        self.theta0 = np.asarray(theta0, dtype=float)
        g = ode.grid
        M = g.memory_steps
        # (n+1, M+1, d) segments at every node, as views
        self.segments = np.lib.stride_tricks.sliding_window_view(ode.path, (M + 1, spec.d))[:, 0]
        self.sigmas = np.array([diffusion_batch(spec, s[None], s[None], g.delta)[0] for s in self.segments])
        self.weights = np.array([inverse_gram(s) for s in self.sigmas])
        self._grads = {}

    @property
    def grid(self) -> Grid:
        return self.ode.grid

    @property
    def n_nodes(self) -> int:
        return self.segments.shape[0]

    def segment(self, j: int) -> Segment:
        return Segment(self.segments[j], self.grid.delta)

    def measure(self, j: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.segments[j][None], self.grid.delta)

    def drifts(self, theta) -> np.ndarray:
        """``(n+1, d)`` drift along the path at ``theta``."""
        dl = self.grid.delta
        return np.array([drift_batch(self.spec, s[None], s[None], dl, theta)[0] for s in self.segments])

    def grads(self, theta) -> np.ndarray:
        """``(n+1, d, p)`` drift gradients along the path."""
        key = tuple(np.asarray(theta, dtype=float).tolist())
        if key not in self._grads:
            dl = self.grid.delta
            self._grads[key] = np.array([grad_batch(self.spec, s[None], s[None], dl, theta)[0] for s in self.segments])
        return self._grads[key]

    def quadrature(self, values) -> np.ndarray:
        """Composite trapezoid over the nodes (axis 0)."""
        values = np.asarray(values, dtype=float)
        h = self.grid.delta
        return h * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def limit_path(spec: ModelSpec, grid: Grid, theta0, fine_factor: int = 8) -> LimitPath:
    """Solve the limit ODE at ``theta0`` on ``grid`` refined by ``fine_factor``."""
    return LimitPath(spec, solve_limit_ode(spec, grid, theta0, fine_factor, fine=True), theta0)


@dataclass(frozen=True)
class AsymptoticReport:
    xi_of_theta: float
    i_matrix: np.ndarray
    k_matrix: np.ndarray
    k0_matrix: np.ndarray
    quadrature: tuple


def lambda_mismatch(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure, theta, theta0) -> np.ndarray:
    """``b(seg, mu, theta0) - b(seg, mu, theta)``."""
    s, a = seg.values[None], mu.atoms
    return drift_batch(spec, s, a, seg.delta, theta0)[0] - drift_batch(spec, s, a, seg.delta, theta)[0]


def circ(A, B) -> np.ndarray:
    """``A o B`` for ``A`` of shape ``(p, p*d)`` and ``B`` in ``R^d``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1)
    d = B.size
    p = A.shape[0]
    return np.stack([A[:, k * d : (k + 1) * d] @ B for k in range(p)], axis=1)


def capital_xi(spec: ModelSpec, limit: LimitPath, theta, theta0=None) -> float:
    """``int_0^T Lam^T W Lam dt`` with ``Lam = b(theta0) - b(theta)`` on the limit path."""
    if theta0 is None:
        theta0 = limit.theta0
    lam = limit.drifts(theta0) - limit.drifts(theta)
    integrand = np.einsum("ki,kij,kj->k", lam, limit.weights, lam)
    return float(limit.quadrature(integrand))


def information_matrix(spec: ModelSpec, limit: LimitPath, theta) -> np.ndarray:
    """``int_0^T G^T W G ds``, symmetrised."""
    G = limit.grads(theta)
    integrand = np.einsum("kdp,kde,keq->kpq", G, limit.weights, G)
    out = limit.quadrature(integrand)
    return 0.5 * (out + out.T)


def k_matrix(spec: ModelSpec, limit: LimitPath, theta, theta0=None) -> np.ndarray:
    """``-2 int_0^T H(theta) o (W Lam) ds`` with ``H`` the second theta-derivative."""
    if theta0 is None:
        theta0 = limit.theta0
    theta = np.asarray(theta, dtype=float)
    lam = limit.drifts(theta0) - limit.drifts(theta)
    vals = np.empty((limit.n_nodes, spec.p, spec.p))
    for j in range(limit.n_nodes):
        H = hess_theta_drift(spec, limit.segment(j), limit.measure(j), theta)
        vals[j] = circ(H, limit.weights[j] @ lam[j])
    return -2.0 * limit.quadrature(vals)


def k0_matrix(spec: ModelSpec, limit: LimitPath, theta, theta0=None) -> np.ndarray:
    """``K(theta) + 2 I(theta)``."""
    return k_matrix(spec, limit, theta, theta0) + 2.0 * information_matrix(spec, limit, theta)


def upsilon(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure, theta0) -> np.ndarray:
    """``G^T (sigma sigma^T)^{-1} sigma``, shape ``(p, m)``."""
    sig = eval_diffusion(spec, seg, mu)
    G = grad_theta_drift(spec, seg, mu, theta0)
    return G.T @ inverse_gram(sig) @ sig


def _upsilons(limit: LimitPath, theta0) -> np.ndarray:
    G = limit.grads(theta0)
    return np.einsum("kdp,kde,kem->kpm", G, limit.weights, limit.sigmas)


def noise_matrix(spec: ModelSpec, limit: LimitPath, theta0=None) -> np.ndarray:
    """``V = int_0^T Ups Ups^T ds`` (trapezoid)."""
    if theta0 is None:
        theta0 = limit.theta0
    U = _upsilons(limit, theta0)
    return limit.quadrature(np.einsum("kpm,kqm->kpq", U, U))


def _checked_inverse(I):
    c = np.linalg.cond(I)
    if not np.isfinite(c) or c >= 1e10:
        raise SingularInformation(f"information matrix condition number {c:.3g} exceeds 1e10")
    return np.linalg.inv(I)


def limit_covariance(spec: ModelSpec, limit: LimitPath, theta0=None) -> np.ndarray:
    """Covariance ``I^-1 V I^-1`` of the limit law."""
    if theta0 is None:
        theta0 = limit.theta0
    Iinv = _checked_inverse(information_matrix(spec, limit, theta0))
    return Iinv @ noise_matrix(spec, limit, theta0) @ Iinv


def asymptotic_report(spec: ModelSpec, limit: LimitPath, theta, theta0=None) -> AsymptoticReport:
    if theta0 is None:
        theta0 = limit.theta0
    I = information_matrix(spec, limit, theta)
    K = k_matrix(spec, limit, theta, theta0)
    return AsymptoticReport(
        capital_xi(spec, limit, theta, theta0), I, K, K + 2.0 * I, (limit.n_nodes, "trapezoid")
    )


def sample_limit_law(spec: ModelSpec, limit: LimitPath, theta0, n_samples: int, rng_seed: int) -> np.ndarray:
    """Draws of ``I^-1 sum_j Ups(X0_{s_j}) dB_j`` (left-point Ito sums).

    Sample ``i`` uses its own stream ``(rng_seed, i)``. Returns an array of
    shape ``(n_samples, p)``.
    """
    I = information_matrix(spec, limit, theta0)
    Iinv = _checked_inverse(I)
    U = _upsilons(limit, theta0)[:-1]  # left endpoints
    n_int = U.shape[0]
    scale = np.sqrt(limit.grid.delta)
    out = np.empty((n_samples, spec.p))
    for i in range(n_samples):
        dB = stream(rng_seed, i).standard_normal((n_int, spec.m)) * scale
        out[i] = Iinv @ np.einsum("kpm,km->p", U, dB)
    return out
