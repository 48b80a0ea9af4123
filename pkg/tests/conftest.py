import numpy as np
import pytest
from hypothesis import settings

from msplab.fourier import FourierFunction

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def gen():
    return np.random.default_rng(20240101)


def staircase(P: int, coef: float = 1.0) -> FourierFunction:
    """``z1 + z1z2 + ... + z1..zP``."""
    return FourierFunction.from_sets(P, [(tuple(range(1, i + 1)), coef) for i in range(1, P + 1)])
