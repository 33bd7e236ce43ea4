"""Hypervolume and reference-front checks against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batchmobo import HypervolumeSpec, hypervolume_2d_exact, hypervolume_mc, reference_front
from batchmobo.metrics import default_reference_point, non_dominated_mask


def brute_force_mask(F):
    """O(n^2) non-domination straight from the definition (all-minimize)."""
    n = len(F)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j and np.all(F[j] <= F[i]) and np.any(F[j] < F[i]):
                mask[i] = False
                break
    return mask


def grid_hypervolume(front, ref, cells=2000):
    """Riemann-grid oracle for 2-D hypervolume (coarse but independent)."""
    front = np.asarray(front, dtype=float)
    lo = front.min(axis=0)
    xs = np.linspace(lo[0], ref[0], cells, endpoint=False) + (ref[0] - lo[0]) / (2 * cells)
    ys = np.linspace(lo[1], ref[1], cells, endpoint=False) + (ref[1] - lo[1]) / (2 * cells)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    covered = np.zeros(X.shape, dtype=bool)
    for p in front:
        covered |= (X >= p[0]) & (Y >= p[1])
    cell = (ref[0] - lo[0]) / cells * (ref[1] - lo[1]) / cells
    return covered.sum() * cell


class TestNonDominatedMask:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for m in (2, 3):
            F = rng.random((120, m))
            assert np.array_equal(non_dominated_mask(F), brute_force_mask(F))

    def test_duplicates_all_survive(self):
        F = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 3.0]])
        assert non_dominated_mask(F).tolist() == [True, True, False]

    def test_idempotent(self):
        F = np.random.default_rng(1).random((60, 2))
        survivors = F[non_dominated_mask(F)]
        assert non_dominated_mask(survivors).all()


class TestHypervolume2dExact:
    def test_two_point_inclusion_exclusion(self):
        # rectangles 2x1 and 1x2 overlap in a 1x1 square: 2 + 2 - 1 = 3
        assert hypervolume_2d_exact(np.array([[1.0, 2.0], [2.0, 1.0]]), (3.0, 3.0)) == pytest.approx(3.0)

    def test_unit_square(self):
        assert hypervolume_2d_exact(np.array([[0.0, 0.0]]), (1.0, 1.0)) == pytest.approx(1.0)

    def test_dominated_point_contributes_nothing(self):
        front = np.array([[1.0, 2.0], [2.0, 1.0]])
        padded = np.vstack([front, [2.5, 2.5]])
        ref = (3.0, 3.0)
        assert hypervolume_2d_exact(padded, ref) == hypervolume_2d_exact(front, ref)

    def test_points_beyond_reference_are_clipped_out(self):
        front = np.array([[1.0, 2.0], [5.0, 0.0]])
        assert hypervolume_2d_exact(front, (3.0, 3.0)) == pytest.approx(2.0)

    def test_empty_effective_front(self):
        assert hypervolume_2d_exact(np.array([[4.0, 4.0]]), (3.0, 3.0)) == 0.0
        assert hypervolume_2d_exact(np.empty((0, 2)), (3.0, 3.0)) == 0.0

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(7)
        front = rng.random((12, 2)) * 2.0
        exact = hypervolume_2d_exact(front, (2.5, 2.5))
        approx = grid_hypervolume(front, (2.5, 2.5))
        assert exact == pytest.approx(approx, rel=5e-3)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 2), st.floats(0, 2)), min_size=1, max_size=12))
    def test_adding_a_point_never_decreases(self, pts):
        front = np.asarray(pts, dtype=float)
        ref = (2.5, 2.5)
        base = hypervolume_2d_exact(front[:-1], ref) if len(front) > 1 else 0.0
        assert hypervolume_2d_exact(front, ref) >= base - 1e-12

    def test_affine_covariance(self):
        rng = np.random.default_rng(3)
        front = rng.random((9, 2))
        ref = np.array([1.5, 1.5])
        base = hypervolume_2d_exact(front, ref)
        shift = np.array([2.0, -3.0])
        assert hypervolume_2d_exact(front + shift, ref + shift) == pytest.approx(base, rel=1e-12)
        scale = np.array([2.0, 5.0])
        assert hypervolume_2d_exact(front * scale, ref * scale) == pytest.approx(
            base * scale.prod(), rel=1e-12
        )


class TestHypervolumeMc:
    def test_within_three_sigma_of_exact(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            front = rng.random((8, 2)) * 2.0
            ref = (2.5, 2.5)
            exact = hypervolume_2d_exact(front, ref)
            spec = HypervolumeSpec(reference_point=ref, mc_samples=200_000)
            est, err = hypervolume_mc(front, spec, seed=trial)
            assert abs(est - exact) <= 3.0 * err

    def test_front_at_ideal_point_covers_box(self):
        spec = HypervolumeSpec(reference_point=(2.0, 2.0), ideal_point=(0.0, 0.0))
        est, err = hypervolume_mc(np.array([[0.0, 0.0]]), spec, seed=0)
        assert est == pytest.approx(4.0)
        assert err == 0.0

    def test_empty_front(self):
        spec = HypervolumeSpec(reference_point=(1.0, 1.0))
        est, err = hypervolume_mc(np.empty((0, 2)), spec, seed=0)
        assert est == 0.0 and err == 0.0

    def test_error_scales_inverse_sqrt(self):
        # quadrupling the sample count should roughly halve the std error
        front = np.random.default_rng(2).random((6, 2))
        ref = (1.5, 1.5)
        _, err1 = hypervolume_mc(front, HypervolumeSpec(ref, mc_samples=65_536), seed=5)
        _, err4 = hypervolume_mc(front, HypervolumeSpec(ref, mc_samples=262_144), seed=5)
        assert err4 == pytest.approx(err1 / 2.0, rel=0.15)

    def test_three_objectives_on_known_volume(self):
        # single point at the origin dominates exactly the unit cube
        spec = HypervolumeSpec(reference_point=(1.0, 1.0, 1.0), ideal_point=(0.0, 0.0, 0.0))
        est, err = hypervolume_mc(np.zeros((1, 3)), spec, seed=1)
        assert est == pytest.approx(1.0)

    def test_deterministic_per_seed(self):
        front = np.random.default_rng(4).random((5, 2))
        spec = HypervolumeSpec(reference_point=(1.5, 1.5), mc_samples=100_000)
        assert hypervolume_mc(front, spec, seed=9) == hypervolume_mc(front, spec, seed=9)
        assert hypervolume_mc(front, spec, seed=9) != hypervolume_mc(front, spec, seed=10)

    def test_ideal_point_validation(self):
        with pytest.raises(ValueError):
            HypervolumeSpec(reference_point=(1.0, 1.0), ideal_point=(1.0, 0.0))


class TestReferenceFront:
    def test_zdt1_identity(self):
        front = reference_front("zdt1", resolution=500)
        assert np.allclose(front[:, 1], 1.0 - np.sqrt(front[:, 0]), atol=1e-12)

    def test_zdt2_identity(self):
        front = reference_front("zdt2", resolution=500)
        assert np.allclose(front[:, 1], 1.0 - front[:, 0] ** 2, atol=1e-12)

    def test_zdt3_has_five_segments(self):
        front = reference_front("zdt3", resolution=10_000)
        f1 = np.sort(front[:, 0])
        gaps = np.diff(f1) > 10.0 / 10_000  # count jumps larger than the grid step
        assert gaps.sum() == 4  # five disjoint intervals

    def test_front_is_nondominated(self):
        front = reference_front("zdt3", resolution=2000)
        assert non_dominated_mask(front).all()

    def test_resolution_guard(self):
        with pytest.raises(ValueError):
            reference_front("zdt1", resolution=50)

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            reference_front("dtlz1")

    def test_default_reference_points(self):
        assert default_reference_point("zdt3").tolist() == [11.0, 11.0]
        assert default_reference_point("dtlz4").tolist() == [1.1, 1.1, 1.1]
