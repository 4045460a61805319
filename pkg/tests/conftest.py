import numpy as np
import pytest
import scipy.sparse as sp

from cjslice.linalg import SparseHermitian


def random_symmetric(n, seed=0, density=None, complex_=False):
    rng = np.random.default_rng(seed)
    if density is None:
        B = rng.standard_normal((n, n))
        if complex_:
            B = B + 1j * rng.standard_normal((n, n))
    else:
        B = sp.random(n, n, density=density, random_state=rng).toarray()
    return (B + B.conj().T) / 2


def random_orthonormal(n, k, seed=0, complex_=False):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    if complex_:
        X = X + 1j * rng.standard_normal((n, k))
    Q, _ = np.linalg.qr(X)
    return Q


@pytest.fixture
def sym_matrix():
    def make(n, seed=0, **kw):
        return SparseHermitian.from_matrix(random_symmetric(n, seed, **kw))
    return make


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
