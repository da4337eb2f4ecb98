import numpy as np
import pytest

from markov_holdout import (
    HigherOrderChainSpec,
    LossSpec,
    TransitionKernel,
    markovize,
)

# reference chains used throughout: closed-form constants for the two-state
# kernel are derived in the tests that assert them


@pytest.fixture(scope="session")
def two_state_matrix():
    return np.array([[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture(scope="session")
def two_state_kernel(two_state_matrix):
    return TransitionKernel(two_state_matrix)


@pytest.fixture(scope="session")
def two_state_chain(two_state_matrix):
    return markovize(HigherOrderChainSpec.from_kernel(two_state_matrix), 1)


@pytest.fixture(scope="session")
def iid_kernel():
    # rows equal to the stationary law: mixes in one step
    return TransitionKernel(np.full((2, 2), 0.5))


@pytest.fixture(scope="session")
def iid_chain():
    return markovize(HigherOrderChainSpec.from_kernel(np.full((2, 2), 0.5)), 1)


@pytest.fixture(scope="session")
def order2_spec():
    conditional = np.array([[0.9, 0.1],
                            [0.7, 0.3],
                            [0.4, 0.6],
                            [0.2, 0.8]])
    return HigherOrderChainSpec(symbols=2, order=2, conditional=conditional)


@pytest.fixture(scope="session")
def order2_chain(order2_spec):
    return markovize(order2_spec, 2)


@pytest.fixture(scope="session")
def zero_one_loss():
    return LossSpec.misclassification(2)


def random_primitive_binary_kernel(rng) -> TransitionKernel:
    """Binary kernel with strictly positive rows (primitive almost surely)."""
    rows = rng.uniform(0.05, 0.95, size=2)
    return TransitionKernel(np.array([[1.0 - rows[0], rows[0]],
                                      [rows[1], 1.0 - rows[1]]]))
