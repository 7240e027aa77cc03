import numpy as np
import pytest

from aolpomdp import DiscretePomdp
from aolpomdp.bench import random_tiny_model


@pytest.fixture
def tiger_like():
    """Two-state, two-observation diagnostic problem with a listen action."""
    transition = np.array([
        [[1.0, 0.0], [0.0, 1.0]],          # listen: state unchanged
        [[0.5, 0.5], [0.5, 0.5]],          # commit: reset
    ])
    observation = np.array([
        [0.85, 0.15],
        [0.15, 0.85],
    ])
    reward = np.array([
        [-1.0, 10.0],
        [-1.0, -20.0],
    ])
    initial = np.array([0.5, 0.5])
    return DiscretePomdp(transition, observation, reward, initial,
                         horizon=2, r_max=20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_models(seed, count, **kwargs):
    gen = np.random.default_rng(seed)
    return [random_tiny_model(gen, **kwargs) for _ in range(count)]
