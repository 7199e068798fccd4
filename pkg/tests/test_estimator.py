import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from mvlse import estimator as est
from mvlse.errors import DegenerateNormalEquations
from mvlse.estimator import (
    box_quadratic_min,
    build_context,
    contrast,
    contrast_many,
    estimate,
    estimate_closed_form,
    estimate_numeric,
    estimation_measures,
    example_lse,
    grid_oracle,
    normal_equations_lse,
    phi,
    residual,
)
from mvlse.model import ModelSpec, ThetaBox, build_example_model
from mvlse.rng import derive_seed
from mvlse.segment_path import Grid, TrajectoryRecord
from mvlse.simulator import SimConfig, simulate_observation, solve_limit_ode

from conftest import linear_model, zero_model
from oracles import decomposition_phi, example_contrast


def example_ctx(seed, eps=0.05, n=100, mode="ensemble", N=64):
    spec = build_example_model("sincos")
    g = Grid.from_horizon(1.0, 0.25, n)
    obs = simulate_observation(spec, SimConfig(eps, g, N, derive_seed(seed, 0), 4), [1.0, 0.5])
    mp = estimation_measures(spec, obs, eps, mode, None, N, derive_seed(seed, 1))
    return build_context(obs, spec, eps, mp)


def linear_data(theta, n=10, delta=0.1, noise=None):
    g = Grid(delta, n, 1)
    inc = np.full(n, theta * delta) if noise is None else theta * delta + noise
    path = np.concatenate([[0.0], np.concatenate([[0.0], np.cumsum(inc)])])
    return TrajectoryRecord.from_path(path, g)


class TestResidual:
    def test_zero_drift_constant_path(self):
        g = Grid(0.1, 5, 2)
        rec = TrajectoryRecord.from_path(np.full(8, 0.5), g)
        ctx = build_context(rec, zero_model(1.0), 0.1)
        assert all(residual(ctx, k, [0.0])[0] == 0.0 for k in range(1, 6))

    def test_linear_model(self):
        rec = linear_data(1.0, noise=np.linspace(-0.1, 0.1, 10))
        ctx = build_context(rec, linear_model(), 0.1)
        for k in range(1, 11):
            assert residual(ctx, k, [0.3])[0] == pytest.approx(rec.increments()[k - 1, 0] - 0.3 * 0.1)

    def test_local_error_order(self):
        spec = build_example_model("sincos")
        peaks = []
        for n in (20, 40):
            g = Grid.from_horizon(1.0, 0.25, n)
            data = solve_limit_ode(spec, g, [1.0, 0.5], 256)
            ctx = build_context(data, spec, 0.1)
            P = np.array([residual(ctx, k, [1.0, 0.5])[0] for k in range(1, n + 1)])
            peaks.append(np.max(np.abs(P)) / g.delta**2)
        # |P_k| <= C delta^2 with the same C on both grids
        assert peaks[1] <= 1.5 * peaks[0]

    def test_index_range(self):
        ctx = build_context(linear_data(1.0), linear_model(), 0.1)
        with pytest.raises(IndexError):
            residual(ctx, 0, [1.0])


class TestContrast:
    def test_zero_residuals(self):
        ctx = build_context(linear_data(0.7), linear_model(), 0.2)
        assert contrast(ctx, [0.7]) == pytest.approx(0.0, abs=1e-20)

    def test_hand_value(self):
        g = Grid(0.5, 1, 1)
        rec = TrajectoryRecord.from_path([0.0, 0.0, 0.2], g)
        ctx = build_context(rec, linear_model(sigma=0.5), 0.1)
        assert contrast(ctx, [0.0]) == pytest.approx(32.0, rel=1e-12)

    def test_matches_loop_oracle(self):
        ctx = example_ctx(3, n=40)
        M = ctx.observed.grid.memory_steps
        other = [np.mean(np.cos(ctx.measures.atoms(j)[:, -1, 0])) for j in range(ctx.n)]
        for th in ([1.0, 0.5], [0.2, 1.7]):
            ref = example_contrast(ctx.observed.path[:, 0].tolist(), M, ctx.delta, ctx.epsilon, th, other)
            assert contrast(ctx, th) == pytest.approx(ref, rel=1e-12)

    def test_vectorised_equals_scalar(self):
        ctx = example_ctx(4, n=40)
        pts = np.random.default_rng(0).uniform(0, 2, (7, 2))
        np.testing.assert_allclose(contrast_many(ctx, pts), [contrast(ctx, t) for t in pts], rtol=1e-12)

    def test_affine_shortcut_equals_drift_path(self):
        ctx = example_ctx(5, n=40)
        th = np.array([0.4, 1.3])
        slow = sum(float(residual(ctx, k, th) @ ctx.weights[k - 1] @ residual(ctx, k, th)) for k in range(1, ctx.n + 1))
        assert contrast(ctx, th) == pytest.approx(slow / (ctx.epsilon**2 * ctx.delta), rel=1e-12)


class TestPhi:
    def test_zero_at_theta0(self):
        ctx = example_ctx(6, n=40)
        assert phi(ctx, [1.0, 0.5], [1.0, 0.5]) == 0.0

    def test_definition(self):
        ctx = example_ctx(7, n=40)
        a, b = [0.3, 1.1], [1.0, 0.5]
        assert phi(ctx, a, b) == pytest.approx(ctx.epsilon**2 * (contrast(ctx, a) - contrast(ctx, b)), rel=1e-14)

    @given(st.integers(0, 2**16), st.floats(0, 2), st.floats(0, 2))
    def test_antisymmetry_and_decomposition(self, seed, t1, t2):
        ctx = example_ctx(seed, n=20, N=8)
        th, th0 = np.array([t1, t2]), np.array([1.0, 0.5])
        assert phi(ctx, th, th0) == pytest.approx(-phi(ctx, th0, th), abs=1e-9)
        assert phi(ctx, th, th0) == pytest.approx(decomposition_phi(ctx, th, th0), abs=1e-9)

    def test_quadratic_in_theta(self):
        ctx = example_ctx(8, n=40)
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 2, (30, 2))
        vals = np.array([phi(ctx, t, [1.0, 0.5]) for t in pts])
        X = np.column_stack([np.ones(30), pts, pts[:, 0] ** 2, pts[:, 0] * pts[:, 1], pts[:, 1] ** 2])
        coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
        assert np.max(np.abs(X @ coef - vals)) < 1e-10 * max(1.0, np.max(np.abs(vals)))


class TestClosedForm:
    def test_noiseless_linear_exact(self):
        ctx = build_context(linear_data(0.8), linear_model(), 0.1)
        assert estimate_closed_form(ctx).theta_hat[0] == pytest.approx(0.8, rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_formula_vs_normal_equations(self, seed):
        ctx = example_ctx(seed)
        np.testing.assert_allclose(example_lse(ctx), normal_equations_lse(ctx), rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_vs_nelder_mead(self, seed):
        ctx = example_ctx(seed)
        cf = estimate_closed_form(ctx)
        nm = estimate_numeric(ctx)
        assert np.max(np.abs(cf.theta_hat - nm.theta_hat)) <= 1e-6
        assert cf.contrast_value <= nm.contrast_value + 1e-9 * abs(nm.contrast_value)

    def test_out_of_box_is_projected_exactly(self):
        rec = linear_data(9.0)
        spec = linear_model(theta_box=ThetaBox([-1.0], [2.0]))
        res = estimate_closed_form(build_context(rec, spec, 0.1))
        assert not res.in_box
        assert res.stationary[0] == pytest.approx(9.0)
        assert res.theta_hat[0] == 2.0

    def test_degenerate(self):
        # b0 == 0 leaves the second design column identically zero
        spec = build_example_model("zero")
        g = Grid.from_horizon(1.0, 0.25, 20)
        obs = simulate_observation(spec, SimConfig(0.1, g, 4, 0, 1), [1.0, 0.5])
        ctx = build_context(obs, spec, 0.1)
        with pytest.raises(DegenerateNormalEquations):
            estimate_closed_form(ctx)


class TestBoxQuadratic:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_matches_bounded_solver(self, seed, p):
        rng = np.random.default_rng(seed)
        L = rng.standard_normal((p, p))
        A = L @ L.T + 0.1 * np.eye(p)
        r = rng.standard_normal(p) * 3
        lo, hi = -np.ones(p), np.ones(p)
        got = box_quadratic_min(A, r, lo, hi)
        f = lambda t: t @ A @ t - 2 * r @ t
        ref = minimize(f, np.zeros(p), jac=lambda t: 2 * A @ t - 2 * r, bounds=list(zip(lo, hi)),
                       method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
        assert f(got) <= f(ref.x) + 1e-9
        assert np.all(got >= lo) and np.all(got <= hi)


class TestNumeric:
    def test_start_at_truth_noiseless(self):
        ctx = build_context(linear_data(0.8), linear_model(), 0.1)
        res = estimate_numeric(ctx, [0.8])
        assert res.theta_hat[0] == pytest.approx(0.8, abs=1e-7)
        assert res.converged

    def test_nonaffine_model(self):
        # b = theta^2: the numeric route must handle drifts without a closed form
        spec = ModelSpec(
            drift=lambda seg, mu, th: np.array([th[0] ** 2]),
            diffusion=lambda seg, mu: np.array([[1.0]]),
            theta_box=ThetaBox([0.0], [3.0]),
            xi=lambda s: np.zeros(np.shape(s)),
            dims=(1, 1, 1),
        )
        ctx = build_context(linear_data(2.25), spec, 0.1)
        res = estimate(ctx.observed, spec, 0.1, mode="dirac")
        assert res.method == "nelder_mead"
        assert res.theta_hat[0] == pytest.approx(1.5, abs=1e-6)


class TestGridOracle:
    def test_constant_contrast_lowest_corner(self):
        g = Grid(0.1, 5, 1)
        rec = TrajectoryRecord.from_path(np.zeros(7), g)
        spec = ModelSpec(
            drift=lambda seg, mu, th: np.zeros(1),
            diffusion=lambda seg, mu: np.array([[1.0]]),
            theta_box=ThetaBox([-1.0, 2.0], [1.0, 3.0]),
            xi=lambda s: np.zeros(np.shape(s)),
            dims=(1, 1, 2),
        )
        np.testing.assert_array_equal(grid_oracle(build_context(rec, spec, 0.1), 5), [-1.0, 2.0])

    def test_affine_within_one_cell(self):
        rng = np.random.default_rng(2)
        rec = linear_data(0.8, n=50, noise=0.01 * rng.standard_normal(50))
        ctx = build_context(rec, linear_model(), 0.1)
        cell = 10.0 / 199
        assert abs(grid_oracle(ctx, 200)[0] - estimate_closed_form(ctx).theta_hat[0]) <= cell

    def test_resolution_two_counts_corners(self, monkeypatch):
        seen = []
        real = est.contrast_many

        def spy(ctx, pts):
            seen.append(np.array(pts))
            return real(ctx, pts)

        monkeypatch.setattr(est, "contrast_many", spy)
        ctx = example_ctx(9, n=20, N=4)
        grid_oracle(ctx, 2)
        pts = np.concatenate(seen)
        assert len(pts) == 4
        assert {tuple(p) for p in pts} == {(0.0, 0.0), (0.0, 2.0), (2.0, 0.0), (2.0, 2.0)}


class TestEstimate:
    def test_dirac_measures_are_observed_segments(self):
        ctx = example_ctx(10, n=20, mode="dirac")
        assert ctx.measures.paths.shape[0] == 1
        np.testing.assert_array_equal(ctx.measures.atoms(5)[0], ctx.state(5))

    def test_deterministic(self):
        spec = build_example_model("sincos")
        g = Grid.from_horizon(1.0, 0.25, 40)
        obs = simulate_observation(spec, SimConfig(0.05, g, 16, 1, 2), [1.0, 0.5])
        a = estimate(obs, spec, 0.05, n_particles=16, seed=3)
        b = estimate(obs, spec, 0.05, n_particles=16, seed=3)
        np.testing.assert_array_equal(a.theta_hat, b.theta_hat)

    def test_small_noise_recovers_truth(self):
        spec = build_example_model("sincos")
        g = Grid.from_horizon(1.0, 0.25, 400)
        obs = simulate_observation(spec, SimConfig(0.002, g, 64, 5, 4), [1.0, 0.5])
        res = estimate(obs, spec, 0.002, pilot=[1.0, 0.5], n_particles=64, seed=2)
        # limit-law standard deviation is about eps * 16 = 0.033 per coordinate
        np.testing.assert_allclose(res.theta_hat, [1.0, 0.5], atol=0.15)

    def test_unknown_mode(self):
        spec = build_example_model("sincos")
        obs = simulate_observation(spec, SimConfig(0.05, Grid.from_horizon(1.0, 0.25, 8), 2, 1, 1), [1.0, 0.5])
        with pytest.raises(ValueError):
            estimate(obs, spec, 0.05, mode="bogus")
