#! IMPORTS


import os
import sys
import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from pathwisehj import PeriodicGrid1D, make_hamiltonian, make_initial, sample


#! FIXTURES


@pytest.fixture
def grid512():
    return PeriodicGrid1D(512, 1.0)


@pytest.fixture
def cos512(grid512):
    return sample(lambda x: np.cos(2 * np.pi * x), grid512)


@pytest.fixture
def sawtooth512(grid512):
    # 0.5 - |x - 0.5|, Lipschitz constant 1
    return make_initial("sawtooth", {"slope": 1.0}, grid512)


@pytest.fixture
def quadratic():
    # P covers the slopes of cos(2 pi x) with the default safety factor
    return make_hamiltonian("quadratic", {"a": 1.0}, P=8.0)
