import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvlse.errors import SingularDiffusion
from mvlse.measure import EmpiricalMeasure, dirac
from mvlse.model import (
    ModelSpec,
    ThetaBox,
    build_example_model,
    eval_drift,
    grad_theta_drift,
    hess_theta_drift,
    initial_segment,
    inverse_gram,
    lipschitz_probe,
    sigma_hat,
)
from mvlse.segment_path import Grid, Segment


def rand_inputs(seed, K=5, N=4):
    rng = np.random.default_rng(seed)
    seg = Segment(rng.standard_normal(K), 0.25)
    mu = EmpiricalMeasure(rng.standard_normal((N, K, 1)), 0.25)
    return rng, seg, mu


class TestThetaBox:
    def test_contains_and_project(self):
        box = ThetaBox([0.0, 0.0], [2.0, 2.0])
        assert box.contains([1.0, 1.0])
        assert not box.contains([0.0, 1.0])
        assert box.contains([0.0, 1.0], strict=False)
        np.testing.assert_array_equal(box.project([-1.0, 3.0]), [0.0, 2.0])
        np.testing.assert_array_equal(box.center, [1.0, 1.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            ThetaBox([1.0], [1.0])


class TestSigmaHat:
    def test_identity(self):
        np.testing.assert_allclose(inverse_gram(np.eye(3)), np.eye(3))

    def test_example_value(self, example):
        seg = Segment([0.0, 0.5, 1.0], 0.1)
        np.testing.assert_allclose(sigma_hat(example, seg, dirac(seg)), [[0.25]])

    @given(st.integers(0, 2**32 - 1))
    def test_matches_dense_inverse(self, seed):
        rng = np.random.default_rng(seed)
        sig = rng.standard_normal((2, 3))
        gram = sig @ sig.T
        if np.linalg.cond(gram) > 1e6:
            return
        out = inverse_gram(sig)
        np.testing.assert_allclose(out, np.linalg.inv(gram), rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(out @ gram, np.eye(2), atol=1e-8)
        np.testing.assert_array_equal(out, out.T)

    def test_rank_deficient(self):
        sig = np.random.default_rng(0).standard_normal((3, 2))
        with pytest.raises(SingularDiffusion):
            inverse_gram(sig)
        with pytest.raises(SingularDiffusion):
            inverse_gram([[0.0]])


def _spec(drift, p=1, d=1, grad=None):
    return ModelSpec(
        drift=drift,
        diffusion=lambda seg, mu: np.eye(d),
        theta_box=ThetaBox([-10.0] * p, [10.0] * p),
        xi=lambda s: np.zeros(np.shape(s)),
        dims=(d, d, p),
        drift_grad_theta=grad,
    )


class TestGradient:
    def test_example_columns(self, example):
        _, seg, mu = rand_inputs(1)
        G = grad_theta_drift(example, seg, mu, [1.0, 0.5])
        b0 = example.b0
        integral = np.mean([b0(seg, z) for z in mu.segments()])
        np.testing.assert_allclose(G, [[1.0, integral]], rtol=1e-12)

    def test_theta_free_drift(self):
        spec = _spec(lambda seg, mu, th: np.array([seg.end[0] ** 2]), p=2)
        _, seg, mu = rand_inputs(2)
        np.testing.assert_array_equal(grad_theta_drift(spec, seg, mu, [0.3, -0.2]), np.zeros((1, 2)))

    def test_square(self):
        spec = _spec(lambda seg, mu, th: np.array([th[0] ** 2]))
        _, seg, mu = rand_inputs(3)
        assert grad_theta_drift(spec, seg, mu, [3.0])[0, 0] == pytest.approx(6.0, abs=1e-6)

    @given(st.integers(0, 2**32 - 1))
    def test_analytic_vs_fd(self, seed):
        rng, seg, mu = rand_inputs(seed)
        theta = rng.uniform(0, 2, 2)
        ex = build_example_model("sincos")
        fd = ModelSpec(ex.drift, ex.diffusion, ex.theta_box, ex.xi, ex.dims)
        np.testing.assert_allclose(
            grad_theta_drift(fd, seg, mu, theta), grad_theta_drift(ex, seg, mu, theta), atol=1e-5
        )

    def test_nonlinear_hessian_blocks(self):
        # b = (th0^2 th1, sin th1) with d=2, p=2
        def drift(seg, mu, th):
            return np.array([th[0] ** 2 * th[1], np.sin(th[1])])

        spec = _spec(drift, p=2, d=2)
        _, seg, mu = rand_inputs(4)
        th = np.array([0.7, -0.4])
        H = hess_theta_drift(spec, seg, mu, th)
        # block k holds d/dtheta_k of the p x d transposed gradient
        A0 = np.array([[2 * th[1], 0.0], [2 * th[0], 0.0]])
        A1 = np.array([[2 * th[0], 0.0], [0.0, -np.sin(th[1])]])
        np.testing.assert_allclose(H, np.hstack([A0, A1]), atol=1e-6)


class TestExampleModel:
    def test_zero_b0(self):
        spec = build_example_model("zero")
        _, seg, mu = rand_inputs(5)
        assert eval_drift(spec, seg, mu, [0.8, 1.7])[0] == pytest.approx(0.8)

    def test_state_b0_dirac(self):
        spec = build_example_model("state")
        c = 1.3
        seg = Segment(np.full(4, c), 0.1)
        assert eval_drift(spec, seg, dirac(seg), [0.2, 0.5])[0] == pytest.approx(0.2 + 0.5 * c)

    def test_custom_callable_matches_variant(self):
        def b0(z, zp):
            return np.sin(z.values[0, 0]) + np.cos(zp.values[-1, 0])

        custom = build_example_model(b0)
        builtin = build_example_model("sincos")
        _, seg, mu = rand_inputs(6)
        assert custom.kernel is None
        assert eval_drift(custom, seg, mu, [1.0, 0.5])[0] == pytest.approx(
            eval_drift(builtin, seg, mu, [1.0, 0.5])[0], rel=1e-13
        )

    @given(st.integers(0, 2**32 - 1))
    def test_affine_superposition(self, seed):
        rng, seg, mu = rand_inputs(seed)
        spec = build_example_model("sincos")
        f = lambda th: eval_drift(spec, seg, mu, th) - eval_drift(spec, seg, mu, [0.0, 0.0])
        a, b = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        s = rng.uniform(-3, 3)
        np.testing.assert_allclose(f(a + s * b), f(a) + s * f(b), atol=1e-12)

    def test_hessian_zero(self, example):
        _, seg, mu = rand_inputs(7)
        np.testing.assert_array_equal(hess_theta_drift(example, seg, mu, [1.0, 1.0]), np.zeros((2, 2)))

    def test_initial_segment(self, example):
        seg = initial_segment(example, Grid(0.125, 8, 2))
        np.testing.assert_allclose(seg.values[:, 0], [0.25, 0.375, 0.5])


class TestProbe:
    def test_constant_model(self):
        spec = ModelSpec(
            drift=lambda seg, mu, th: np.array([1.0]),
            diffusion=lambda seg, mu: np.array([[2.0]]),
            theta_box=ThetaBox([0.0], [1.0]),
            xi=lambda s: np.zeros(np.shape(s)),
            dims=(1, 1, 1),
        )
        rep = lipschitz_probe(spec, 200, 0)
        assert rep.as_dict() == {
            "alpha1_hat": 0.0, "alpha2_hat": 0.0, "beta1_hat": 0.0, "beta2_hat": 0.0, "L1_hat": 0.0, "n_samples": 200
        }

    def test_identity_drift(self):
        spec = ModelSpec(
            drift=lambda seg, mu, th: seg.end.copy(),
            diffusion=lambda seg, mu: np.array([[1.0]]),
            theta_box=ThetaBox([0.0], [1.0]),
            xi=lambda s: np.zeros(np.shape(s)),
            dims=(1, 1, 1),
        )
        rep = lipschitz_probe(spec, 10_000, 1)
        assert 0.9 <= rep.alpha1_hat <= 1.0 + 1e-12

    def test_b0_constant(self):
        # theta pinned near (0, 1) so the drift ratios are those of b0 itself
        spec = build_example_model("sincos", ThetaBox([0.0, 1.0 - 1e-9], [1e-9, 1.0]))
        rep = lipschitz_probe(spec, 10_000, 2)
        assert max(rep.alpha1_hat, rep.alpha2_hat) <= 1.05

    def test_example_ceiling(self, example):
        rep = lipschitz_probe(example, 2_000, 3)
        K, c = example.b0.lipschitz, 2.0
        assert max(rep.alpha1_hat, rep.alpha2_hat) <= K * c * 1.01

    def test_needs_two_samples(self, example):
        with pytest.raises(ValueError):
            lipschitz_probe(example, 1)
