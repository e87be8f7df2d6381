import itertools

import numpy as np
import pytest

from oicap.channel import reduce

# (H, alpha, gamma_E, gamma_B) for four 2x1 channels
REFERENCE_CHANNELS = [
    ((0.65, 0.35), (0.90, 0.20), -0.3780, 0.0000),
    ((0.25, 0.75), (0.20, 0.10), -1.0798, -1.0798),
    ((0.45, 0.55), (0.60, 0.10), -0.1978, -0.1979),
    ((0.20, 0.80), (0.52, 0.48), -0.0009, -0.0009),
]


def random_corank_one(rng, n_t):
    """Nonnegative (n_t - 1) x n_t matrix of full row rank."""
    while True:
        H = rng.random((n_t - 1, n_t)) + 0.05
        rc = reduce(H)
        if rc.r == n_t - 1 and rc.sigma[-1] / rc.sigma[0] > 1e-3:
            return H, rc


def zonotope_halfspaces(G):
    """Facet description ``|C (s - c)| <= b`` of the zonotope of ``G`` (independent of any tiling)."""
    r, n = G.shape
    center = 0.5 * G.sum(axis=1)
    if r == 1:
        C = np.ones((1, 1))
    else:
        rows = []
        for U in itertools.combinations(range(n), r - 1):
            B = G[:, U]
            # normal to span(B): last left-singular vector
            u, s, _ = np.linalg.svd(B, full_matrices=True)
            if s.size and s[-1] < 1e-12 * s[0]:
                continue
            rows.append(u[:, -1])
        C = np.array(rows)
    b = 0.5 * np.abs(C @ G).sum(axis=1)
    return C, b, center


def inside_halfspaces(G, S, tol=0.0):
    C, b, c = zonotope_halfspaces(G)
    S = np.atleast_2d(S)
    return np.all(np.abs((S - c) @ C.T) <= b + tol, axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
