import numpy as np
import pytest

from optojosephson.integrate import IntegratorConfig, integrate
from optojosephson.scenarios import SCENARIOS

# PASS/FAIL lines from the acceptance module, repeated in the terminal summary
# because pytest captures output written while a test runs
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def reference_rhs(y, g, lam, n0, kappa, gamma, n_th):
    """Equations of motion written out directly, for cross-checking the kernels."""
    x, p, z, phi, q = y
    w = np.sqrt(q * q - z * z)
    return np.array([
        p - gamma * x / 2,
        -x - gamma * p / 2 - lam * n0 * z,
        2 * g * w * np.sin(phi) - kappa * z,
        2 * lam * x - 2 * g * z * np.cos(phi) / w,
        -kappa * q + 2 * kappa * n_th / n0,
    ])


def random_states(rng, n, q_range=(0.2, 1.5), margin=0.05, x_scale=50.0):
    """Admissible states kept at least ``margin`` away from the |z| = q pole."""
    q = rng.uniform(*q_range, n)
    z = rng.uniform(-1, 1, n) * (q - margin)
    return np.column_stack([
        rng.normal(0, x_scale, n), rng.normal(0, x_scale, n), z,
        rng.uniform(-np.pi, np.pi, n), q,
    ])


@pytest.fixture(scope="session")
def fig3a_traj():
    sc = SCENARIOS["fig3a"]
    return integrate(sc.params, sc.initial, IntegratorConfig(t_end=200.0))
