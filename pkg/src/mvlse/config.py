"""Experiment configuration: parsing, validation and serialisation.

Configs are JSON documents. Every key is optional except ``theta0`` and
``epsilon_list``; see ``ExperimentConfig`` for defaults.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

from .errors import ConfigError
from .model import B0_VARIANTS, ModelSpec, ThetaBox, build_example_model, linear_initial_path
from .segment_path import Grid

__all__ = ["ExperimentConfig", "Cell", "validate_config", "build_model", "MODEL_NAMES"]

MODEL_NAMES = ("example", "custom")
MEASURE_MODES = ("ensemble", "dirac")
PILOTS = ("center", "theta0")
METHODS = ("auto", "closed_form", "nelder_mead")


@dataclass(frozen=True)
class Cell:
    """One sweep cell; ``epsilon_index``/``n_index`` locate it in the lists."""

    epsilon_index: int
    n_index: int
    epsilon: float
    n: int


@dataclass(frozen=True)
class ExperimentConfig:
    theta0: tuple
    epsilon_list: tuple
    model: dict = field(default_factory=lambda: {"name": "example", "b0": "sincos"})
    theta_box: tuple = ((0.0, 2.0), (0.0, 2.0))
    T: float = 1.0
    r0: float = 0.25
    delta: Optional[float] = None
    n_list: Optional[tuple] = None
    n_scale: Optional[float] = None
    fine_factor: int = 8
    n_particles: int = 256
    n_replications: int = 1
    measure_mode: str = "ensemble"
    pilot: Union[str, tuple] = "center"
    refine_passes: int = 1
    method: str = "auto"
    limit_samples: int = 10_000
    rate_n: int = 100
    rate_delta_epsilon: float = 0.01
    rate_delta_n_list: tuple = (4, 8, 16)
    rate_reference_factor: int = 64
    rng_seed: int = 0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = _untuple(v)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return validate_config(d)

    @property
    def box(self) -> ThetaBox:
        return ThetaBox.from_bounds(self.theta_box)

    def grid_for(self, n: int) -> Grid:
        return Grid.from_horizon(self.T, self.r0, n)

    def n_for(self, epsilon: float) -> int:
        """Horizon steps for a matched or fixed-step sweep."""
        if self.n_scale is not None:
            return _compatible_n(math.ceil(self.n_scale / epsilon - 1e-9), self.T, self.r0)
        if self.delta is not None:
            return int(round(self.T / self.delta))
        raise ValueError("no rule for n: set n_list, n_scale or delta")

    def cells(self) -> list:
        if self.n_list is not None:
            return [
                Cell(i, j, float(e), int(n))
                for i, e in enumerate(self.epsilon_list)
                for j, n in enumerate(self.n_list)
            ]
        return [Cell(i, 0, float(e), self.n_for(e)) for i, e in enumerate(self.epsilon_list)]


def _untuple(v):
    if isinstance(v, (tuple, list)):
        return [_untuple(x) for x in v]
    return v


def _tuple(v):
    if isinstance(v, (tuple, list)):
        return tuple(_tuple(x) for x in v)
    return v


def _grid_ok(T, r0, n):
    try:
        Grid.from_horizon(T, r0, n)
        return True
    except ValueError:
        return False


def _compatible_n(n: int, T: float, r0: float) -> int:
    """Smallest ``n' >= n`` for which ``r0`` is a whole number of steps."""
    for cand in range(max(n, 1), max(n, 1) + 10_000):
        if _grid_ok(T, r0, cand):
            return cand
    raise ValueError(f"no step count near {n} makes r0={r0} a multiple of T/n")


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(raw) -> ExperimentConfig:
    """Parse JSON text (or a mapping) into a validated config.

    All violated constraints are collected and raised together as one
    :class:`~mvlse.errors.ConfigError`.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    problems = [f"unknown field '{k}'" for k in sorted(set(raw) - known)]
    for req in ("theta0", "epsilon_list"):
        if req not in raw:
            problems.append(f"missing required field '{req}'")
    if problems and any(p.startswith("missing") for p in problems):
        raise ConfigError(problems)
    data = {k: _tuple(v) for k, v in raw.items() if k in known}
    if "model" in data and isinstance(raw["model"], dict):
        data["model"] = dict(raw["model"])
    try:
        cfg = ExperimentConfig(**data)
    except TypeError as exc:  # pragma: no cover
        raise ConfigError(str(exc))

    model = cfg.model
    if not isinstance(model, dict) or "name" not in model:
        problems.append("model: must be an object with a 'name'")
    elif model["name"] not in MODEL_NAMES:
        problems.append(f"model.name: unknown model '{model['name']}' (expected one of {list(MODEL_NAMES)})")
    elif model["name"] == "example":
        b0 = model.get("b0", "sincos")
        if b0 not in B0_VARIANTS:
            problems.append(f"model.b0: unknown variant '{b0}' (expected one of {sorted(B0_VARIANTS)})")
        xi = model.get("xi", {"kind": "linear"})
        if not isinstance(xi, dict) or xi.get("kind") not in ("linear", "constant"):
            problems.append("model.xi: kind must be 'linear' or 'constant'")
        extra = set(model) - {"name", "b0", "xi"}
        if extra:
            problems.append(f"model: unknown option(s) {sorted(extra)}")

    box_ok = False
    tb = cfg.theta_box
    if not (isinstance(tb, tuple) and tb and all(isinstance(b, tuple) and len(b) == 2 and all(_num(x) for x in b) for b in tb)):
        problems.append("theta_box: must be a list of [lower, upper] pairs")
    elif not all(lo < hi for lo, hi in tb):
        problems.append("theta_box: each lower bound must be below its upper bound")
    else:
        box_ok = True
    t0 = cfg.theta0
    if not (isinstance(t0, tuple) and all(_num(x) for x in t0)):
        problems.append("theta0: must be a list of numbers")
    elif box_ok:
        if len(t0) != len(tb):
            problems.append(f"theta0: has {len(t0)} coordinates but theta_box has {len(tb)}")
        elif not all(lo < x < hi for x, (lo, hi) in zip(t0, tb)):
            problems.append("theta0: must lie strictly inside theta_box (the parameter set is open)")
        elif model.get("name") == "example" and len(t0) != 2:
            problems.append("theta0: the example model has p=2")

    el = cfg.epsilon_list
    if not (isinstance(el, tuple) and el and all(_num(e) for e in el)):
        problems.append("epsilon_list: must be a non-empty list of numbers")
    else:
        for e in el:
            if not 0 < e < 1:
                problems.append(f"epsilon_list: epsilon={e} violates 0 < epsilon < 1")

    if not (_num(cfg.T) and cfg.T > 0):
        problems.append("T: must be positive")
    if not (_num(cfg.r0) and cfg.r0 > 0):
        problems.append("r0: must be positive")
    rules = [cfg.delta is not None, cfg.n_list is not None, cfg.n_scale is not None]
    if sum(rules) != 1:
        problems.append("grid: set exactly one of 'delta', 'n_list', 'n_scale'")
    if cfg.delta is not None and not (_num(cfg.delta) and cfg.delta > 0):
        problems.append("delta: must be positive")
    if cfg.n_scale is not None and not (_num(cfg.n_scale) and cfg.n_scale > 0):
        problems.append("n_scale: must be positive")
    if _num(cfg.T) and _num(cfg.r0) and cfg.T > 0 and cfg.r0 > 0:
        ns = []
        if cfg.n_list is not None:
            if not (isinstance(cfg.n_list, tuple) and cfg.n_list and all(_int(n) for n in cfg.n_list)):
                problems.append("n_list: must be a non-empty list of integers")
            else:
                ns = list(cfg.n_list)
        if cfg.delta is not None and _num(cfg.delta) and cfg.delta > 0:
            n = cfg.T / cfg.delta
            if abs(n - round(n)) > 1e-9 * n:
                problems.append(f"delta: T={cfg.T} is not a whole number of steps of {cfg.delta}")
            ns.append(int(round(n)))
        for n in ns:
            if n < 1:
                problems.append(f"n: n={n} violates n >= 1")
            elif not _grid_ok(cfg.T, cfg.r0, n):
                problems.append(f"grid: with n={n}, r0={cfg.r0} is not a whole number M >= 1 of steps T/n")
        rn = cfg.rate_delta_n_list
        if not (isinstance(rn, tuple) and rn and all(_int(n) and n >= 1 for n in rn)):
            problems.append("rate_delta_n_list: must be a non-empty list of positive integers")
        else:
            for n in rn:
                if not _grid_ok(cfg.T, cfg.r0, n):
                    problems.append(f"rate_delta_n_list: with n={n}, r0 is not a whole number M >= 1 of steps")
            if any(max(rn) % n for n in rn):
                problems.append("rate_delta_n_list: every entry must divide the largest one")
        if not (_int(cfg.rate_n) and cfg.rate_n >= 1 and _grid_ok(cfg.T, cfg.r0, cfg.rate_n)):
            problems.append("rate_n: must be a positive step count compatible with r0")

    for name in ("fine_factor", "n_particles", "n_replications", "limit_samples", "rate_reference_factor"):
        v = getattr(cfg, name)
        if not (_int(v) and v >= 1):
            problems.append(f"{name}: must be an integer >= 1")
    if not (_int(cfg.refine_passes) and cfg.refine_passes >= 0):
        problems.append("refine_passes: must be an integer >= 0")
    if not (_num(cfg.rate_delta_epsilon) and 0 < cfg.rate_delta_epsilon < 1):
        problems.append("rate_delta_epsilon: must satisfy 0 < epsilon < 1")
    if cfg.measure_mode not in MEASURE_MODES:
        problems.append(f"measure_mode: must be one of {list(MEASURE_MODES)}")
    if cfg.method not in METHODS:
        problems.append(f"method: must be one of {list(METHODS)}")
    if isinstance(cfg.pilot, str):
        if cfg.pilot not in PILOTS:
            problems.append(f"pilot: must be one of {list(PILOTS)} or a parameter vector")
    elif not (isinstance(cfg.pilot, tuple) and all(_num(x) for x in cfg.pilot)) or (
        box_ok and len(cfg.pilot) != len(tb)
    ):
        problems.append("pilot: parameter vector has the wrong length or non-numeric entries")
    if not (_int(cfg.rng_seed) and 0 <= cfg.rng_seed < 2**64):
        problems.append("rng_seed: must be an unsigned 64-bit integer")
    if not isinstance(cfg.output_dir, str):
        problems.append("output_dir: must be a string")
    if problems:
        raise ConfigError(problems)
    return cfg


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    """The model named by the config (``"custom"`` models are library-only)."""
    name = cfg.model.get("name")
    if name == "custom":
        raise ConfigError("model.name: 'custom' models must be passed in from Python")
    xi_cfg = cfg.model.get("xi", {"kind": "linear"})
    if xi_cfg.get("kind") == "constant":
        xi = linear_initial_path(float(xi_cfg.get("value", 0.5)), 0.0)
    else:
        xi = linear_initial_path(float(xi_cfg.get("intercept", 0.5)), float(xi_cfg.get("slope", 1.0)))
    return build_example_model(cfg.model.get("b0", "sincos"), cfg.box, xi)
