import numpy as np
import pytest

from fkbackward.models import make_finite_hmm


def random_finite_model(seed, S=None, T=None, positive=True):
    """Seeded finite model with strictly positive potentials and transitions."""
    rng = np.random.default_rng(seed)
    S = S or int(rng.integers(1, 5))
    T = T or 7
    initial = rng.dirichlet(np.ones(S))
    trans = rng.dirichlet(np.ones(S), size=S)
    pots = rng.uniform(0.05, 2.0, size=(T, S))
    if not positive:
        pots[rng.random((T, S)) < 0.2] = 0.0
    return make_finite_hmm(S, initial, trans, pots, V=1.0 + rng.random(S) * 3)


def random_functional_table(seed, S, n):
    return np.random.default_rng(seed + 10_000).normal(size=(n + 1, S))


@pytest.fixture
def finite3():
    return random_finite_model(3, S=3, T=8)


@pytest.fixture
def finite2():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    G = np.array([[0.8, 0.3], [0.2, 0.7], [0.8, 0.3], [0.8, 0.3], [0.2, 0.7], [0.8, 0.3]])
    return make_finite_hmm(2, [0.5, 0.5], P, G)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
