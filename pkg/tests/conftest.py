import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lqlearn.lemmas import random_problem
from lqlearn.model import LqProblem
from lqlearn.riccati import solve_pi_star


@pytest.fixture(scope="session")
def reference_problem():
    """Scalar workhorse instance used throughout."""
    return LqProblem(F=[[0.9]], G=[[1.0]], Q=[[1.0]], R=[[1.0]], Qf=[[1.0]], p=0.1)


@pytest.fixture(scope="session")
def reference_oracle(reference_problem):
    return solve_pi_star(reference_problem)


@pytest.fixture(scope="session")
def planar_problem():
    """A fixed random two-state instance."""
    rng = np.random.default_rng(42)
    return random_problem(rng, n=2, m=1, p=0.1)


@pytest.fixture(scope="session")
def planar_oracle(planar_problem):
    return solve_pi_star(planar_problem)
