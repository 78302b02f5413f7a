import hypothesis
import numpy as np
import pytest

from subriem.flow import integrate_extremal
from subriem.heisenberg import ALPHA_STAR
from subriem.structure import make_structure

hypothesis.settings.register_profile("suite", max_examples=25, deadline=None,
                                     derandomize=True)
hypothesis.settings.load_profile("suite")

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def heis():
    return make_structure("heisenberg")


@pytest.fixture(scope="session")
def eucl3():
    return make_structure("euclidean:3")


def _reference_trajectory(struct, alpha):
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.2, 61), [1.0]]))
    return integrate_extremal(struct, np.zeros(3), np.array([1.0, 0.0, alpha]),
                              1.2, 1e-10, samples=grid)


@pytest.fixture(scope="session")
def traj_2pi(heis):
    """Extremal through the conjugate covector (1, 0, 2 pi), sampled past t = 1."""
    return _reference_trajectory(heis, TWO_PI)


@pytest.fixture(scope="session")
def traj_astar(heis):
    """Extremal through the fold conjugate covector (1, 0, alpha*)."""
    return _reference_trajectory(heis, ALPHA_STAR)
