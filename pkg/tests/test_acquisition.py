"""Batch selection: 2M-objective search, dedup, top-up, and the ablation."""

import numpy as np
import pytest

from batchmobo import AcquisitionConfig, DesignSpace, acquire, acquisition_objectives
from batchmobo.core import _row_key, direction_signs
from batchmobo.surrogate import EnsembleSurrogate, Mlp, MlpSpec


def _small_cfg(batch_size, **kw):
    kw.setdefault("per_seed_population", 16)
    kw.setdefault("num_seeds", 2)
    kw.setdefault("generations", 4)
    return AcquisitionConfig(batch_size=batch_size, **kw)


def _zero_variance_clone(surrogate):
    """An ensemble whose members agree exactly, so sigma is identically 0."""
    theta = surrogate.members[0].theta.copy()
    spec = surrogate.members[0].spec
    members = [Mlp(spec, theta=theta.copy()) for _ in range(2)]
    return EnsembleSurrogate(
        members,
        surrogate.x_lower.copy(),
        surrogate.x_span.copy(),
        surrogate.y_mean.copy(),
        surrogate.y_std.copy(),
    )


class TestConfig:
    def test_num_seeds_covers_batch(self):
        assert AcquisitionConfig(batch_size=1000).resolved_num_seeds() == 10
        assert AcquisitionConfig(batch_size=101).resolved_num_seeds() == 2
        assert AcquisitionConfig(batch_size=50).resolved_num_seeds() == 1
        assert AcquisitionConfig(batch_size=50, num_seeds=7).resolved_num_seeds() == 7

    def test_validation(self):
        with pytest.raises(ValueError):
            AcquisitionConfig(batch_size=0)
        with pytest.raises(ValueError):
            AcquisitionConfig(batch_size=5, num_seeds=0)


class TestObjectives:
    def test_uncertainty_doubles_the_columns(self, tiny_surrogate, unit_space_3):
        X = np.random.default_rng(0).random((9, 3))
        full = acquisition_objectives(tiny_surrogate, ("min", "min"), X, use_uncertainty=True)
        plain = acquisition_objectives(tiny_surrogate, ("min", "min"), X, use_uncertainty=False)
        assert full.shape == (9, 4)
        assert plain.shape == (9, 2)
        assert np.array_equal(full[:, :2], plain)

    def test_columns_are_signed_mean_and_negative_sigma(self, tiny_surrogate):
        X = np.random.default_rng(1).random((6, 3))
        mean, sigma = tiny_surrogate.predict(X)
        F = acquisition_objectives(tiny_surrogate, ("min", "max"), X, use_uncertainty=True)
        signs = direction_signs(("min", "max"))
        assert np.array_equal(F[:, :2], mean * signs)
        assert np.array_equal(F[:, 2:], -sigma)

    def test_maximization_flips_sign(self, tiny_surrogate):
        X = np.random.default_rng(2).random((4, 3))
        fmin = acquisition_objectives(tiny_surrogate, ("min", "min"), X, False)
        fmax = acquisition_objectives(tiny_surrogate, ("max", "max"), X, False)
        assert np.array_equal(fmin, -fmax)


class TestAcquire:
    def test_batch_size_shape_and_bounds(self, tiny_surrogate, unit_space_3):
        batch, info = acquire(
            tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(12), seed=3
        )
        assert batch.shape == (12, 3)
        assert unit_space_3.contains(batch).all()
        assert info["batch_size"] == 12

    def test_batch_rows_are_unique(self, tiny_surrogate, unit_space_3):
        batch, _ = acquire(
            tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(12), seed=4
        )
        keys = {_row_key(row) for row in batch}
        assert len(keys) == len(batch)

    def test_deterministic_per_seed(self, tiny_surrogate, unit_space_3):
        a, ia = acquire(tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=5)
        b, ib = acquire(tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=5)
        c, _ = acquire(tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=6)
        assert np.array_equal(a, b)
        assert ia == ib
        assert not np.array_equal(a, c)

    def test_known_designs_are_never_reproposed(self, tiny_surrogate, unit_space_3):
        cfg = _small_cfg(10)
        first, _ = acquire(tiny_surrogate, unit_space_3, ("min", "min"), set(), cfg, seed=7)
        known = {_row_key(row) for row in first}
        # Same seed regenerates the same candidate union, so every point the
        # search proposes is now "already evaluated" and must be filtered out.
        second, info = acquire(tiny_surrogate, unit_space_3, ("min", "min"), known, cfg, seed=7)
        assert second.shape == first.shape
        assert all(_row_key(row) not in known for row in second)
        assert info["removed_known"] > 0

    def test_topup_fills_a_small_union(self, tiny_surrogate, unit_space_3):
        cfg = AcquisitionConfig(
            batch_size=20, per_seed_population=8, num_seeds=1, generations=2
        )
        batch, info = acquire(tiny_surrogate, unit_space_3, ("min", "min"), set(), cfg, seed=8)
        assert batch.shape == (20, 3)
        assert info["topup"] >= 20 - 8
        assert len({_row_key(row) for row in batch}) == 20

    def test_no_topup_when_union_covers_batch(self, tiny_surrogate, unit_space_3):
        _, info = acquire(
            tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(8), seed=9
        )
        assert info["topup"] == 0

    def test_diagnostics_keys(self, tiny_surrogate, unit_space_3):
        _, info = acquire(
            tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(6), seed=10
        )
        assert set(info) >= {
            "batch_size",
            "num_seeds",
            "per_seed_population",
            "generations",
            "use_uncertainty",
            "front0_sizes",
            "union_size",
            "removed_known",
            "removed_internal",
            "topup",
        }
        assert len(info["front0_sizes"]) == info["num_seeds"] == 2

    def test_zero_variance_matches_ablated_mode(self, tiny_surrogate, unit_space_3):
        """With sigma == 0 everywhere the extra columns must change nothing.

        The uncertainty columns of a collapsed ensemble are constant zeros:
        they dominate nobody, and a zero-spread objective contributes no
        crowding, so selection must coincide with the plain-objective run.
        """
        collapsed = _zero_variance_clone(tiny_surrogate)
        X = np.random.default_rng(11).random((5, 3))
        assert np.all(collapsed.predict_epistemic_variance(X) == 0.0)
        full, _ = acquire(
            collapsed, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=12
        )
        ablated, _ = acquire(
            collapsed,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10, use_uncertainty=False),
            seed=12,
        )
        assert np.array_equal(full, ablated)

    def test_ablated_flag_reaches_diagnostics(self, tiny_surrogate, unit_space_3):
        _, info = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(6, use_uncertainty=False),
            seed=13,
        )
        assert info["use_uncertainty"] is False


class TestWarmStart:
    def test_warm_pool_changes_the_search(self, tiny_surrogate, unit_space_3):
        pool = np.random.default_rng(30).random((20, 3))
        cold, _ = acquire(
            tiny_surrogate, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=31
        )
        warm, info = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10),
            seed=31,
            warm_pool=pool,
        )
        assert not np.array_equal(cold, warm)
        assert info["warm_start"] is True
        assert info["warm_rows"] == 16  # pool truncated to per-seed population

    def test_warm_start_flag_off_ignores_the_pool(self, tiny_surrogate, unit_space_3):
        pool = np.random.default_rng(32).random((6, 3))
        cold, cold_info = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10, warm_start=False),
            seed=33,
        )
        disabled, info = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10, warm_start=False),
            seed=33,
            warm_pool=pool,
        )
        assert np.array_equal(cold, disabled)
        assert info["warm_start"] is False
        assert info["warm_rows"] == 0 == cold_info["warm_rows"]

    def test_warm_runs_draw_distinct_subsets(self, tiny_surrogate, unit_space_3):
        # With a pool wider than the per-seed population, each run should
        # start from its own permutation; determinism still holds per seed.
        pool = np.random.default_rng(34).random((40, 3))
        a, _ = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10),
            seed=35,
            warm_pool=pool,
        )
        b, _ = acquire(
            tiny_surrogate,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10),
            seed=35,
            warm_pool=pool,
        )
        assert np.array_equal(a, b)

    def test_zero_variance_equivalence_holds_under_warm_start(
        self, tiny_surrogate, unit_space_3
    ):
        collapsed = _zero_variance_clone(tiny_surrogate)
        pool = np.random.default_rng(36).random((16, 3))
        full, _ = acquire(
            collapsed, unit_space_3, ("min", "min"), set(), _small_cfg(10), seed=37,
            warm_pool=pool,
        )
        ablated, _ = acquire(
            collapsed,
            unit_space_3,
            ("min", "min"),
            set(),
            _small_cfg(10, use_uncertainty=False),
            seed=37,
            warm_pool=pool,
        )
        assert np.array_equal(full, ablated)
