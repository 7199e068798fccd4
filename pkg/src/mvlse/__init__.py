"""Least-squares drift estimation for small-noise path-distribution dependent
McKean-Vlasov delay SDEs.

Modules
-------
segment_path  grids, path segments on the memory window, observed trajectories
measure       empirical measures on segment space and the W2 distance
model         model specification, the worked example, Lipschitz probe
simulator     interacting-particle Euler-Maruyama and the limiting ODE
estimator     contrast function and least-squares estimators
asymptotics   limit objects (information, K, Upsilon) and the limit law
config, experiments, cli
              experiment configuration, drivers and command line
"""
from .errors import (
    ConfigError,
    DegenerateNormalEquations,
    MvlseError,
    NonFinite,
    SingularDiffusion,
    SingularInformation,
)
from .segment_path import Grid, Segment, TrajectoryRecord, segment_at, sup_norm
from .measure import EmpiricalMeasure, dirac, integrate, wasserstein2
from .model import ModelSpec, ThetaBox, build_example_model, lipschitz_probe
from .simulator import SimConfig, simulate_observation, simulate_particles, solve_limit_ode
from .estimator import build_context, contrast, estimate, phi
from .asymptotics import (
    capital_xi,
    information_matrix,
    k0_matrix,
    k_matrix,
    limit_covariance,
    limit_path,
    sample_limit_law,
)
from .config import ExperimentConfig, validate_config
from .experiments import run_asymptotics, run_consistency, run_rate_check
from .kernels import BACKEND

__version__ = "0.1.0"
