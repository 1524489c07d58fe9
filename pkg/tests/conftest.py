import numpy as np
import pytest

from renewalkit import TimeGrid, decompose, validate_network


def two_state():
    return validate_network(["1", "2"], [("1", "2", 1.0), ("2", "1", 1.0)])


def chain():
    return validate_network(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 1.0)])


def random_generator(rng, n, density=0.5, low=0.0, high=1.0):
    """Column-convention generator with each off-diagonal edge present with prob ``density``."""
    A = rng.uniform(low, high, size=(n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(A, 0.0)
    A[np.diag_indices(n)] = -A.sum(axis=0)
    return A


def random_partition(rng, states, blocks=3):
    perm = list(rng.permutation(states))
    cuts = np.sort(rng.choice(np.arange(1, len(states)), size=blocks - 1, replace=False))
    return [list(p) for p in np.split(np.array(perm, dtype=object), cuts)]


@pytest.fixture
def two_state_system():
    return decompose(two_state(), [["1"], ["2"]])


@pytest.fixture
def chain_system():
    return decompose(chain(), [["1", "2"], ["3"]])


@pytest.fixture
def grid40():
    return TimeGrid(40.0, 1e-3)
