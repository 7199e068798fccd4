import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mvlse.segment_path import (
    Grid,
    Segment,
    TrajectoryRecord,
    segment_at,
    segment_sup_bound_check,
    sup_norm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def ramp_record():
    # Y(j*delta) = j*delta with M=2, delta=0.5, n=4
    g = Grid(0.5, 4, 2)
    path = np.arange(-2, 5) * 0.5
    return TrajectoryRecord.from_path(path, g)


class TestGrid:
    def test_derived_quantities(self):
        g = Grid(0.01, 100, 25)
        assert g.T == 100 * 0.01
        assert g.r0 == 25 * 0.01

    def test_from_horizon(self):
        g = Grid.from_horizon(1.0, 0.25, 100)
        assert (g.n_steps, g.memory_steps) == (100, 25)
        assert g.delta == 0.01

    def test_incompatible_memory(self):
        with pytest.raises(ValueError):
            Grid.from_horizon(1.0, 0.25, 50 + 1)

    @pytest.mark.parametrize("args", [(0.0, 1, 1), (-0.1, 1, 1), (0.1, 0, 1), (0.1, 1, 0), (0.1, 1.5, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            Grid(*args)

    def test_refine(self):
        g = Grid(0.1, 10, 3).refine(4)
        assert (g.delta, g.n_steps, g.memory_steps) == (0.025, 40, 12)


class TestSegmentAt:
    def test_constant_path(self):
        g = Grid(0.1, 10, 3)
        rec = TrajectoryRecord.from_path(np.full(14, 2.5), g)
        for k in range(11):
            assert np.all(segment_at(rec, k).values == 2.5)

    def test_k0_is_history(self):
        rec = ramp_record()
        assert segment_at(rec, 0) is rec.history

    def test_ramp(self):
        seg = segment_at(ramp_record(), 3)
        np.testing.assert_array_equal(seg.values[:, 0], [0.5, 1.0, 1.5])

    def test_out_of_range(self):
        rec = ramp_record()
        with pytest.raises(IndexError):
            segment_at(rec, 5)
        with pytest.raises(IndexError):
            segment_at(rec, -1)

    @given(arrays(float, st.integers(8, 30), elements=finite), st.integers(1, 4))
    def test_knots_are_exact(self, path, M):
        n = len(path) - M - 1
        g = Grid(0.1, n, M)
        rec = TrajectoryRecord.from_path(path, g)
        for k in range(n + 1):
            seg = segment_at(rec, k)
            assert seg.values.shape == (M + 1, 1)
            np.testing.assert_array_equal(seg.values[:, 0], path[k : k + M + 1])
            assert segment_at(rec, k) == seg


class TestSupNorm:
    def test_zero(self):
        assert sup_norm(Segment(np.zeros(4), 0.1)) == 0.0

    def test_scalar(self):
        assert sup_norm(Segment([-3.0, 1.0, 2.0], 0.1)) == 3.0

    def test_vector(self):
        assert sup_norm(Segment([[3.0, 4.0], [0.0, 0.0]], 0.1)) == 5.0

    @given(arrays(float, (5, 2), elements=finite), arrays(float, (5, 2), elements=finite), finite)
    def test_norm_axioms(self, a, b, c):
        sa, sb = Segment(a, 0.1), Segment(b, 0.1)
        assert sup_norm(Segment(a + b, 0.1)) <= sup_norm(sa) + sup_norm(sb) + 1e-9
        assert sup_norm(Segment(c * a, 0.1)) == pytest.approx(abs(c) * sup_norm(sa), rel=1e-12, abs=1e-12)

    @given(arrays(float, (6, 1), elements=finite), st.floats(-0.5, 0.0))
    def test_interpolant_bounded_by_knots(self, v, s):
        seg = Segment(v, 0.1)
        assert abs(seg(s)[0]) <= sup_norm(seg) + 1e-9


class TestRecord:
    def test_history_must_match(self):
        g = Grid(0.1, 3, 2)
        with pytest.raises(ValueError):
            TrajectoryRecord(Segment([0.0, 0.0, 1.0], 0.1), [[0.0], [1.0], [2.0], [3.0]], g)

    def test_length_checked(self):
        g = Grid(0.1, 3, 2)
        with pytest.raises(ValueError):
            TrajectoryRecord(Segment([0.0, 0.0, 0.0], 0.1), [[0.0], [1.0]], g)

    def test_immutable(self):
        rec = ramp_record()
        with pytest.raises(AttributeError):
            rec.grid = None
        with pytest.raises(ValueError):
            rec.path[0] = 1.0

    def test_increments_and_subsample(self):
        rec = ramp_record()
        np.testing.assert_allclose(rec.increments()[:, 0], 0.5)
        g = Grid(0.25, 8, 4)
        fine = TrajectoryRecord.from_path(np.arange(-4, 9) * 0.25, g)
        assert fine.subsample(2) == rec


class TestSupBound:
    def test_constant(self):
        g = Grid(0.1, 5, 2)
        rec = TrajectoryRecord.from_path(np.full(8, -1.0), g)
        assert all(segment_sup_bound_check(rec, k) for k in range(6))

    def test_ramp(self):
        assert segment_sup_bound_check(ramp_record(), 3)

    def test_random_trajectories(self):
        # 1000 random trajectories, every k
        rng = np.random.default_rng(0)
        for _ in range(1000):
            M = int(rng.integers(1, 6))
            n = int(rng.integers(1, 30))
            d = int(rng.integers(1, 3))
            path = np.cumsum(rng.standard_normal((M + n + 1, d)), axis=0)
            rec = TrajectoryRecord.from_path(path, Grid(0.1, n, M))
            assert all(segment_sup_bound_check(rec, k) for k in range(n + 1))
