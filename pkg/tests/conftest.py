import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("aluthge", max_examples=200, derandomize=True, deadline=None)
settings.load_profile("aluthge")


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
