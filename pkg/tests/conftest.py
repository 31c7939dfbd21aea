import numpy as np
import pytest

from casbo.problems import SequentialProblem


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def random_spd(d, seed, jitter=0.5):
    """Well-conditioned random SPD matrix: A A^T + jitter * I."""
    a = make_rng(seed).standard_normal((d, d))
    return a @ a.T + jitter * np.eye(d)


class CountingProblem(SequentialProblem):
    """Wrapper that counts advance() calls on another problem."""

    def __init__(self, inner):
        self.inner = inner
        self.n_calls = 0

    def dims(self):
        return self.inner.dims()

    def begin_rollout(self):
        return self.inner.begin_rollout()

    def advance(self, state, x_k):
        self.n_calls += 1
        return self.inner.advance(state, x_k)

    def _step(self, state, x_k):  # pragma: no cover - advance is overridden
        raise NotImplementedError


@pytest.fixture
def rng():
    return make_rng(0)
