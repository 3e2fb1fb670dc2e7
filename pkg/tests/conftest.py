import sys

import numpy as np
import pytest

from rwre_lab import SiteLaw, StepSupport


@pytest.fixture
def nn1():
    return StepSupport.nearest_neighbour(1)


@pytest.fixture
def uniform1(nn1):
    """Dirichlet(1, 1) on {+1, -1}: pi_+ is Uniform(0, 1)."""
    return SiteLaw.dirichlet(nn1, (1.0, 1.0))


@pytest.fixture
def dirichlet2():
    return SiteLaw.dirichlet(StepSupport.nearest_neighbour(2), (0.5, 1.0, 2.0, 1.0))


@pytest.fixture
def simple2():
    """Deterministic 1/4 on each nearest neighbour: the simple random walk."""
    return SiteLaw.deterministic(StepSupport.nearest_neighbour(2), (0.25,) * 4)


@pytest.fixture
def mixture1(nn1):
    return SiteLaw.mixture(nn1, [(0.5, (0.8, 0.2)), (0.5, (0.3, 0.7))])


def brute_force_law(env, n):
    """P_0^w(X_n = x) by enumerating all |S|^n step sequences."""
    import itertools

    from rwre_lab import transition_vector

    S = env.law.support.array
    out = {}
    for seq in itertools.product(range(len(S)), repeat=n):
        x = np.zeros(env.nu, dtype=np.int64)
        p = 1.0
        for k, j in enumerate(seq):
            p *= transition_vector(env, k, x)[j]
            x = x + S[j]
        key = tuple(int(c) for c in x)
        out[key] = out.get(key, 0.0) + p
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
