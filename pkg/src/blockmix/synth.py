"""Sampling labelled data from the block mixture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .model import ComponentParams, DataMatrix, MixtureParams, ModelVariant, column_cluster_assignment, membership_matrix


@dataclass(frozen=True)
class Scenario:
    params: MixtureParams
    n: int
    seed: int = 0
    name: str = "custom"

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario(self.params, self.n, seed, self.name)


def sample(scenario: Scenario):
    """Draw ``(data, row_labels, column_assignments)``.

    Each unit gets its own factor draw, y = mu_k + B_k u + e with
    u ~ N(0, I) and e ~ N(0, D_k), so that the marginal covariance of
    component k is B_k B_k' + D_k.  Row labels are 0-based; column
    assignments are the 1-based first-appearance labels of each B_k.
    """
    params = scenario.params
    rng = np.random.default_rng(scenario.seed)
    n, J = scenario.n, params.J
    labels = rng.choice(params.K, size=n, p=params.pi)
    Y = np.empty((n, J))
    for k, comp in enumerate(params.components):
        idx = np.flatnonzero(labels == k)
        u = rng.standard_normal((idx.size, comp.L))
        e = rng.standard_normal((idx.size, J)) * np.sqrt(comp.D)
        Y[idx] = comp.mu + u @ comp.B.T + e
    data = DataMatrix(Y, tuple(f"u{i + 1}" for i in range(n)), tuple(f"V{j + 1}" for j in range(J)))
    cols = tuple(column_cluster_assignment(c.B) for c in params.components)
    return data, labels, cols


def scenario_a(n: int = 500, seed: int = 0) -> Scenario:
    """Two components, eight variables, two column clusters each.

    Component 1 (pi 0.6, mean -1) splits the variables {1-4}/{5-8}; component
    2 (pi 0.4, mean +1) splits odd/even variables.  Error variance 0.25.
    """
    J = 8
    B1 = membership_matrix([0, 0, 0, 0, 1, 1, 1, 1], 2)
    B2 = membership_matrix([0, 1, 0, 1, 0, 1, 0, 1], 2)
    D = np.full(J, 0.25)
    comps = [
        ComponentParams(-np.ones(J), B1, D),
        ComponentParams(np.ones(J), B2, D),
    ]
    params = MixtureParams(np.array([0.6, 0.4]), comps, ModelVariant.UU)
    return Scenario(params, n, seed, "A")


SCENARIOS = {"A": scenario_a}


def get_scenario(name: str, n: int | None = None, seed: int = 0) -> Scenario:
    try:
        factory = SCENARIOS[name.upper()]
    except KeyError:
        raise InvalidParameterError(f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}") from None
    return factory(seed=seed) if n is None else factory(n=n, seed=seed)
