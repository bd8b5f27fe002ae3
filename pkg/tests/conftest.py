import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
