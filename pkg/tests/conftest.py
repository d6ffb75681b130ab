import numpy as np
import pytest

from neutral_spde_lab.charfn import example_system, no_delay


@pytest.fixture
def stable_example():
    """gamma = 0.1 (flat exponential), beta = 0.2, r = 1, eight unit-noise modes."""
    return example_system(1.0, 0.1, 0.0, 0.2, modes=8, noise=np.ones(8))


@pytest.fixture
def ou4():
    return no_delay(4, np.ones(4))
