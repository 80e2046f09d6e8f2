import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blockmix.model import ComponentParams, MixtureParams, ModelVariant, membership_matrix  # noqa: E402


def random_membership(rng, J, L):
    labels = rng.permutation(np.arange(J) % L) if J >= L else rng.integers(0, L, J)
    return membership_matrix(labels, L)


def random_params(rng, K, J, L, variant="UU"):
    variant = ModelVariant.parse(variant)
    Ls = [L] * K if np.isscalar(L) else list(L)
    shared_B = random_membership(rng, J, Ls[0])
    shared_D = rng.uniform(0.2, 2.0, J)
    comps = []
    for k in range(K):
        B = shared_B if variant.shared_membership else random_membership(rng, J, Ls[k])
        D = shared_D if variant.shared_errors else rng.uniform(0.2, 2.0, J)
        comps.append(ComponentParams(rng.normal(0, 2, J), B, D))
    pi = rng.dirichlet(np.ones(K) * 2)
    return MixtureParams(pi, comps, variant)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
