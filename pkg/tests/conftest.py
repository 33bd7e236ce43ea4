"""Shared fixtures: tiny configurations that keep unit tests fast."""

import numpy as np
import pytest

from batchmobo import DesignSpace, MlpSpec, TrainConfig, train_ensemble


@pytest.fixture
def unit_space_3():
    return DesignSpace.unit(3)


@pytest.fixture(scope="session")
def tiny_surrogate():
    """A small trained ensemble on a smooth 2-objective map, reused across tests."""
    rng = np.random.default_rng(0)
    space = DesignSpace.unit(3)
    X = rng.random((80, 3))
    Y = np.column_stack([X.sum(axis=1), (X**2).sum(axis=1)])
    specs = (
        MlpSpec(3, 2, (16, 16), "tanh"),
        MlpSpec(3, 2, (16, 16), "relu"),
        MlpSpec(3, 2, (16, 16), "elu"),
        MlpSpec(3, 2, (16, 16), "celu"),
    )
    cfg = TrainConfig(epochs=40, minibatch=10)
    return train_ensemble(X, Y, space, specs, cfg, seed=123)
