"""Model declarations: drift, diffusion, parameter box and initial datum.

A :class:`ModelSpec` carries the coefficients of

    dX(t) = b(X_t, L(X_t), theta) dt + eps * sigma(X_t, L(X_t)) dB(t),

where ``X_t`` is the segment of the path on ``[t - r0, t]`` and the law
argument is an :class:`~mvlse.measure.EmpiricalMeasure`. Per-state
callbacks are always required; the ``*_many`` callbacks are optional
vectorised versions used by the simulator and estimator when present.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularDiffusion
from .measure import EmpiricalMeasure, integrate, wasserstein2
from .segment_path import Grid, Segment, sup_norm

__all__ = [
    "ThetaBox",
    "ModelSpec",
    "B0",
    "B0_VARIANTS",
    "ProbeReport",
    "initial_segment",
    "eval_drift",
    "eval_diffusion",
    "drift_batch",
    "diffusion_batch",
    "grad_batch",
    "sigma_hat",
    "inverse_gram",
    "grad_theta_drift",
    "hess_theta_drift",
    "build_example_model",
    "lipschitz_probe",
    "linear_initial_path",
]

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ThetaBox:
    """Open axis-aligned box ``prod_j (lower_j, upper_j)``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("each lower bound must be below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_bounds(cls, bounds) -> "ThetaBox":
        b = np.asarray(bounds, dtype=float)
        return cls(b[:, 0], b[:, 1])

    @property
    def p(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta, strict: bool = True) -> bool:
        theta = np.asarray(theta, dtype=float)
        if strict:
            return bool(np.all(theta > self.lower) and np.all(theta < self.upper))
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def project(self, theta) -> np.ndarray:
        """Nearest point of the closed box."""
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def bounds(self):
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]

    def __eq__(self, other):
        if not isinstance(other, ThetaBox):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)


DriftFn = Callable[[Segment, EmpiricalMeasure, np.ndarray], np.ndarray]
DiffusionFn = Callable[[Segment, EmpiricalMeasure], np.ndarray]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficients and parameter space of a path-distribution dependent SDE.

    Parameters
    ----------
    drift, diffusion
        Per-state callbacks ``b(seg, mu, theta) -> (d,)`` and
        ``sigma(seg, mu) -> (d, m)``. They must be pure.
    theta_box
        Parameter space.
    xi
        Initial datum as a function of time on ``[-r0, 0]``, vectorised:
        ``xi(s)`` for an array ``s`` of shape ``(K,)`` returns ``(K,)`` or
        ``(K, d)``. Sampling a function (rather than storing one segment)
        keeps the initial datum exact on every grid.
    dims
        ``(d, m, p)``.
    drift_grad_theta
        Optional ``(seg, mu, theta) -> (d, p)``, row ``i`` holding
        ``d b_i / d theta_j``. Central differences are used when absent.
    drift_hess_theta
        Optional ``(seg, mu, theta) -> (p, p*d)``; block ``k`` (columns
        ``k*d:(k+1)*d``) holds ``d/d theta_k`` of the ``p x d`` transposed
        gradient.
    affine
        Whether the drift is affine in theta, enabling the closed-form LSE.
    drift_many, diffusion_many, grad_many
        Optional batch callbacks over states of shape ``(K, M+1, d)`` and
        measure atoms ``(N, M+1, d)``.
    kernel
        Name of a compiled simulation kernel able to run this model.
    """

    drift: DriftFn
    diffusion: DiffusionFn
    theta_box: ThetaBox
    xi: Callable
    dims: tuple
    drift_grad_theta: Optional[Callable] = None
    drift_hess_theta: Optional[Callable] = None
    affine: bool = False
    drift_many: Optional[Callable] = None
    diffusion_many: Optional[Callable] = None
    grad_many: Optional[Callable] = None
    kernel: Optional[str] = None
    b0: Optional["B0"] = None
    name: str = "custom"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        d, m, p = (int(x) for x in self.dims)
        object.__setattr__(self, "dims", (d, m, p))
        if min(d, m, p) < 1:
            raise ValueError("dimensions must be positive")
        if self.theta_box.p != p:
            raise ValueError(f"theta_box has {self.theta_box.p} coordinates, expected p={p}")

    @property
    def d(self) -> int:
        return self.dims[0]

    @property
    def m(self) -> int:
        return self.dims[1]

    @property
    def p(self) -> int:
        return self.dims[2]


def linear_initial_path(intercept: float = 0.5, slope: float = 1.0):
    """``xi(s) = intercept + slope * s``: a Lipschitz scalar initial datum."""

    def xi(s):
        return intercept + slope * np.asarray(s, dtype=float)

    xi.params = {"kind": "linear", "intercept": float(intercept), "slope": float(slope)}
    return xi


def initial_segment(spec: ModelSpec, grid: Grid) -> Segment:
    vals = np.asarray(spec.xi(grid.time(np.arange(-grid.memory_steps, 1))), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (grid.memory_steps + 1, spec.d):
        raise ValueError(f"initial datum has shape {vals.shape}, expected (M+1, {spec.d})")
    return Segment(vals, grid.delta)


def eval_drift(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure, theta) -> np.ndarray:
    out = np.asarray(spec.drift(seg, mu, np.asarray(theta, dtype=float)), dtype=float).reshape(-1)
    if out.shape != (spec.d,):
        raise ValueError(f"drift returned shape {out.shape}, expected ({spec.d},)")
    return out


def eval_diffusion(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure) -> np.ndarray:
    out = np.asarray(spec.diffusion(seg, mu), dtype=float)
    out = out.reshape(spec.d, spec.m)
    return out


def drift_batch(spec: ModelSpec, states, atoms, delta, theta) -> np.ndarray:
    """Drift at each of ``K`` states against the empirical measure of ``atoms``."""
    theta = np.asarray(theta, dtype=float)
    if spec.drift_many is not None:
        return np.asarray(spec.drift_many(states, atoms, theta), dtype=float).reshape(len(states), spec.d)
    mu = EmpiricalMeasure(atoms, delta)
    return np.array([eval_drift(spec, Segment(s, delta), mu, theta) for s in states])


def diffusion_batch(spec: ModelSpec, states, atoms, delta) -> np.ndarray:
    if spec.diffusion_many is not None:
        return np.asarray(spec.diffusion_many(states, atoms), dtype=float).reshape(len(states), spec.d, spec.m)
    mu = EmpiricalMeasure(atoms, delta)
    return np.array([eval_diffusion(spec, Segment(s, delta), mu) for s in states])


def grad_batch(spec: ModelSpec, states, atoms, delta, theta) -> np.ndarray:
    """``(K, d, p)`` drift gradients in theta."""
    theta = np.asarray(theta, dtype=float)
    if spec.grad_many is not None:
        return np.asarray(spec.grad_many(states, atoms, theta), dtype=float).reshape(len(states), spec.d, spec.p)
    mu = EmpiricalMeasure(atoms, delta)
    return np.array([grad_theta_drift(spec, Segment(s, delta), mu, theta) for s in states])


def inverse_gram(sig) -> np.ndarray:
    """``(sig sig^T)^{-1}`` via a Cholesky factorisation.

    Raises :class:`SingularDiffusion` if the Gram matrix is not positive
    definite or its condition number exceeds ``1e12``.
    """
    sig = np.atleast_2d(np.asarray(sig, dtype=float))
    gram = sig @ sig.T
    if gram.shape == (1, 1):
        g = gram[0, 0]
        if not (np.isfinite(g) and g > 0):
            raise SingularDiffusion(f"sigma sigma^T = {g} is not positive")
        return np.array([[1.0 / g]])
    if not np.all(np.isfinite(gram)):
        raise SingularDiffusion("sigma sigma^T has non-finite entries")
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularDiffusion("sigma sigma^T is not positive definite") from exc
    if np.linalg.cond(gram) > COND_LIMIT:
        raise SingularDiffusion("sigma sigma^T condition number exceeds 1e12")
    inv = cho_solve(factor, np.eye(gram.shape[0]))
    return 0.5 * (inv + inv.T)


def sigma_hat(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure) -> np.ndarray:
    """``(sigma sigma^T)^{-1}`` at ``(seg, mu)``."""
    return inverse_gram(eval_diffusion(spec, seg, mu))


def _fd_steps(theta, scale):
    return scale * np.maximum(1.0, np.abs(theta))


def grad_theta_drift(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure, theta) -> np.ndarray:
    """``d x p`` gradient of the drift in theta.

    Uses the analytic gradient when the model supplies one, otherwise
    central differences with step ``1e-5 * max(1, |theta_j|)``.
    """
    theta = np.asarray(theta, dtype=float)
    if spec.drift_grad_theta is not None:
        return np.asarray(spec.drift_grad_theta(seg, mu, theta), dtype=float).reshape(spec.d, spec.p)
    h = _fd_steps(theta, 1e-5)
    out = np.empty((spec.d, spec.p))
    for j in range(spec.p):
        e = np.zeros_like(theta)
        e[j] = h[j]
        out[:, j] = (eval_drift(spec, seg, mu, theta + e) - eval_drift(spec, seg, mu, theta - e)) / (2 * h[j])
    return out


def hess_theta_drift(spec: ModelSpec, seg: Segment, mu: EmpiricalMeasure, theta) -> np.ndarray:
    """``p x (p*d)`` second derivative in the block layout of ``ModelSpec``.

    Block ``k`` is ``A_k[i, j] = d^2 b_j / (d theta_i d theta_k)``. Without an
    analytic Hessian it is built from central differences of the gradient
    (or second differences of the drift) with step ``1e-4 * max(1, |theta|)``.
    """
    theta = np.asarray(theta, dtype=float)
    d, p = spec.d, spec.p
    if spec.drift_hess_theta is not None:
        return np.asarray(spec.drift_hess_theta(seg, mu, theta), dtype=float).reshape(p, p * d)
    h = _fd_steps(theta, 1e-4)
    out = np.empty((p, p * d))
    if spec.drift_grad_theta is not None:
        for k in range(p):
            e = np.zeros_like(theta)
            e[k] = h[k]
            dg = (grad_theta_drift(spec, seg, mu, theta + e) - grad_theta_drift(spec, seg, mu, theta - e)) / (2 * h[k])
            out[:, k * d : (k + 1) * d] = dg.T
        return out
    f = lambda t: eval_drift(spec, seg, mu, t)
    for k in range(p):
        ek = np.zeros_like(theta)
        ek[k] = h[k]
        for i in range(p):
            ei = np.zeros_like(theta)
            ei[i] = h[i]
            val = (f(theta + ei + ek) - f(theta + ei - ek) - f(theta - ei + ek) + f(theta - ei - ek)) / (4 * h[i] * h[k])
            out[i, k * d : (k + 1) * d] = val
    return out


# --- the scalar worked example -------------------------------------------------


@dataclass(frozen=True)
class B0:
    """Interaction function ``b0(z, z')`` of the scalar example model.

    Built-in variants are separable, ``b0(z, z') = own(z) + other(z')``,
    which lets the mean-field integral be computed in ``O(N)``. ``code`` is
    the identifier understood by the compiled kernel.
    """

    name: str
    code: int
    own: Callable  # (K, M+1) knot arrays -> (K,)
    other: Callable  # (N, M+1) knot arrays -> (N,)
    lipschitz: float

    def __call__(self, z: Segment, zp: Segment) -> float:
        return float(self.own(z.values[None, :, 0])[0] + self.other(zp.values[None, :, 0])[0])


def _zeros(a):
    return np.zeros(a.shape[0])


B0_VARIANTS = {
    "sincos": B0("sincos", 1, lambda a: np.sin(a[:, 0]), lambda a: np.cos(a[:, -1]), 1.0),
    "zero": B0("zero", 0, _zeros, _zeros, 0.0),
    "state": B0("state", 2, _zeros, lambda a: a[:, -1].copy(), 1.0),
}


def build_example_model(
    b0: Union[str, B0, Callable] = "sincos",
    theta_box: Optional[ThetaBox] = None,
    xi: Optional[Callable] = None,
) -> ModelSpec:
    """Scalar model with drift ``theta1 + theta2 * int b0(z, z') mu(dz')`` and
    diffusion ``1 + |z(0)|``.

    ``b0`` is a variant name (``"sincos"``, ``"zero"``, ``"state"``), a
    :class:`B0`, or any callable ``(Segment, Segment) -> float``. The drift
    is affine in theta, its gradient is ``(1, int b0 dmu)`` and its Hessian
    vanishes.
    """
    if theta_box is None:
        theta_box = ThetaBox([0.0, 0.0], [2.0, 2.0])
    if xi is None:
        xi = linear_initial_path()
    if isinstance(b0, str):
        try:
            b0 = B0_VARIANTS[b0]
        except KeyError:
            raise ValueError(f"unknown b0 variant {b0!r}; choose from {sorted(B0_VARIANTS)}") from None

    if isinstance(b0, B0):
        sep = b0

        def mean_field(states, atoms):
            return sep.own(states[:, :, 0]) + np.mean(sep.other(atoms[:, :, 0]))

        def interaction(seg, mu):
            return float(mean_field(seg.values[None], mu.atoms)[0])

        kernel = "example"
        b0_name = sep.name
    else:
        fn = b0

        def interaction(seg, mu):
            return integrate(mu, lambda z: fn(seg, z))

        mean_field = None
        kernel = None
        sep = None
        b0_name = getattr(fn, "__name__", "custom")

    def drift(seg, mu, theta):
        return np.array([theta[0] + theta[1] * interaction(seg, mu)])

    def diffusion(seg, mu):
        return np.array([[1.0 + abs(seg.values[-1, 0])]])

    def grad(seg, mu, theta):
        return np.array([[1.0, interaction(seg, mu)]])

    def hess(seg, mu, theta):
        return np.zeros((2, 2))

    def drift_many(states, atoms, theta):
        return (theta[0] + theta[1] * mean_field(states, atoms))[:, None]

    def diffusion_many(states, atoms):
        return (1.0 + np.abs(states[:, -1, 0]))[:, None, None]

    def grad_many(states, atoms, theta):
        g = np.empty((len(states), 1, 2))
        g[:, 0, 0] = 1.0
        g[:, 0, 1] = mean_field(states, atoms)
        return g

    return ModelSpec(
        drift=drift,
        diffusion=diffusion,
        theta_box=theta_box,
        xi=xi,
        dims=(1, 1, 2),
        drift_grad_theta=grad,
        drift_hess_theta=hess,
        affine=True,
        drift_many=drift_many if mean_field is not None else None,
        diffusion_many=diffusion_many,
        grad_many=grad_many if mean_field is not None else None,
        kernel=kernel,
        b0=sep,
        name="example",
        options={"b0": b0_name},
    )


# --- assumption probe ------------------------------------------------------------


@dataclass(frozen=True)
class ProbeReport:
    """Largest observed Lipschitz ratios (not squared).

    ``alpha*`` are for the drift and ``beta*`` for the diffusion, with ``1``
    the state argument and ``2`` the measure argument; ``L1_hat`` is for
    ``(sigma sigma^T)^{-1}`` against ``|dz| + W2``.
    """

    alpha1_hat: float
    alpha2_hat: float
    beta1_hat: float
    beta2_hat: float
    L1_hat: float
    n_samples: int

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lipschitz_probe(
    spec: ModelSpec,
    n_samples: int = 10_000,
    rng_seed: int = 0,
    memory_steps: int = 8,
    n_atoms: int = 4,
) -> ProbeReport:
    """Empirical lower bounds for the Lipschitz constants of ``b``, ``sigma``
    and ``(sigma sigma^T)^{-1}``.

    Random segments and measures are perturbed by random amounts and the
    largest ratio of output change to input distance is reported. The
    probe is advisory: it never rejects a model.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    d = spec.d
    delta = 1.0 / memory_steps
    box = spec.theta_box
    a1 = a2 = b1 = b2 = l1 = 0.0
    shape = (memory_steps + 1, d)
    for _ in range(n_samples):
        theta = box.lower + rng.random(box.p) * box.width
        z1 = rng.standard_normal(shape)
        h = 10.0 ** rng.uniform(-3, 0)
        z2 = z1 + h * rng.standard_normal(shape)
        atoms = rng.standard_normal((n_atoms,) + shape)
        atoms2 = atoms + 10.0 ** rng.uniform(-3, 0) * rng.standard_normal(atoms.shape)
        s1, s2 = Segment(z1, delta), Segment(z2, delta)
        mu, nu = EmpiricalMeasure(atoms, delta), EmpiricalMeasure(atoms2, delta)

        dz = sup_norm(Segment(z1 - z2, delta))
        w = wasserstein2(mu, nu)
        f11 = eval_drift(spec, s1, mu, theta)
        if dz > 0:
            a1 = max(a1, float(np.linalg.norm(f11 - eval_drift(spec, s2, mu, theta))) / dz)
        if w > 0:
            a2 = max(a2, float(np.linalg.norm(f11 - eval_drift(spec, s1, nu, theta))) / w)
        g11 = eval_diffusion(spec, s1, mu)
        if dz > 0:
            b1 = max(b1, float(np.linalg.norm(g11 - eval_diffusion(spec, s2, mu))) / dz)
        if w > 0:
            b2 = max(b2, float(np.linalg.norm(g11 - eval_diffusion(spec, s1, nu))) / w)
        try:
            h1 = inverse_gram(g11)
            h2 = inverse_gram(eval_diffusion(spec, s2, nu))
        except SingularDiffusion:
            continue
        if dz + w > 0:
            l1 = max(l1, float(np.linalg.norm(h1 - h2)) / (dz + w))
    return ProbeReport(a1, a2, b1, b2, l1, n_samples)
