import numpy as np
import pytest
from scipy import stats

from blockmix.errors import InvalidParameterError
from blockmix.model import ComponentParams, MixtureParams, assemble_covariance, membership_matrix
from blockmix.synth import Scenario, get_scenario, sample, scenario_a


def two_component(pi):
    B = membership_matrix([0, 0, 1])
    comps = [ComponentParams(np.zeros(3), B, np.ones(3)), ComponentParams(np.full(3, 5.0), B, np.ones(3))]
    return MixtureParams(pi, comps)


def test_degenerate_proportions():
    _, labels, _ = sample(Scenario(two_component([1.0, 0.0]), 200, seed=1))
    assert np.all(labels == 0)


def test_sample_covariance_converges():
    comp = ComponentParams(np.zeros(2), [[1], [1]], [1.0, 1.0])
    data, _, _ = sample(Scenario(MixtureParams([1.0], [comp]), 100_000, seed=2))
    cov = np.cov(data.values, rowvar=False)
    np.testing.assert_allclose(cov, assemble_covariance([[1], [1]], [1, 1]), atol=0.05)


def test_component_means_within_standard_error():
    sc = scenario_a(n=2000, seed=3)
    data, labels, _ = sample(sc)
    for k, comp in enumerate(sc.params.components):
        members = data.values[labels == k]
        sd = np.sqrt(np.diag(comp.covariance()))
        assert np.all(np.abs(members.mean(axis=0) - comp.mu) <= 4 * sd / np.sqrt(len(members)))


def test_proportions_binomial():
    sc = scenario_a(n=10_000, seed=4)
    _, labels, _ = sample(sc)
    count = int(np.sum(labels == 0))
    # two-sided binomial test at the 0.001 level
    assert stats.binomtest(count, sc.n, 0.6).pvalue > 1e-3


def test_deterministic():
    a = sample(scenario_a(seed=7))
    b = sample(scenario_a(seed=7))
    np.testing.assert_array_equal(a[0].values, b[0].values)
    np.testing.assert_array_equal(a[1], b[1])
    c = sample(scenario_a(seed=8))
    assert not np.array_equal(a[0].values, c[0].values)


def test_scenario_a_layout():
    sc = scenario_a()
    assert sc.n == 500 and sc.params.K == 2 and sc.params.J == 8
    np.testing.assert_array_equal(sc.params.pi, [0.6, 0.4])
    _, _, cols = sample(sc)
    np.testing.assert_array_equal(cols[0], [1, 1, 1, 1, 2, 2, 2, 2])
    np.testing.assert_array_equal(cols[1], [1, 2, 1, 2, 1, 2, 1, 2])
    for c in sc.params.components:
        np.testing.assert_array_equal(c.D, 0.25)


def test_lookup():
    assert get_scenario("a", n=50, seed=2).n == 50
    with pytest.raises(InvalidParameterError):
        get_scenario("Z")
