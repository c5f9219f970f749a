"""Shared fixtures: small random grouped problems and finite-difference helpers."""
import numpy as np
import pytest

from mixedsel.problem import GroupBlock, LMEProblem, Params


def random_problem(rng, m=None, p=None, q=None, n_range=(2, 8)):
    m = int(rng.integers(2, 6)) if m is None else m
    p = int(rng.integers(1, 5)) if p is None else p
    q = int(rng.integers(1, 5)) if q is None else q
    blocks = []
    beta = rng.normal(size=p)
    gamma = rng.uniform(0.2, 1.5, size=q)
    for _ in range(m):
        n = int(rng.integers(*n_range))
        x = rng.normal(size=(n, p))
        z = rng.normal(size=(n, q))
        u = rng.normal(size=q) * np.sqrt(gamma)
        obs_var = rng.uniform(0.3, 1.5, size=n)
        y = x @ beta + z @ u + rng.normal(size=n) * np.sqrt(obs_var)
        blocks.append(GroupBlock(x, z, y, obs_var))
    return LMEProblem(tuple(blocks))


def random_params(rng, problem, low=0.2, high=1.5):
    return Params(rng.normal(size=problem.p), rng.uniform(low, high, size=problem.q))


def scalar_problem(y=0.0, x=1.0, z=1.0, obs_var=1.0):
    return LMEProblem((GroupBlock([[x]], [[z]], [y], [obs_var]),))


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
