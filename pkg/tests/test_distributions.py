import math

import numpy as np
import pytest

from ismdp.core import (
    Exponential,
    LogNormal,
    Normal,
    Pareto,
    RandomStream,
    make_distribution,
)
from ismdp.core.distributions import family_parameters
from ismdp.core.quadrature import expect
from ismdp.exceptions import ConfigError, DomainError, TruthUnavailableError

LAWS = [
    Exponential(rate=1.0),
    Exponential(rate=2.5),
    Pareto(alpha=3.0, scale=1.0),
    Pareto(alpha=2.5, scale=2.0),
    Normal(mean=0.0, stdev=1.0),
    Normal(mean=1.0, stdev=2.0),
    LogNormal(logmean=0.0, logsd=1.0),
]


def test_exponential_closed_forms(exponential):
    assert exponential.tail(2.0) == pytest.approx(math.exp(-2.0), rel=1e-15)
    assert exponential.tail(-1.0) == 1.0
    assert exponential.density(-1.0) == 0.0
    assert exponential.quantile(0.05) == pytest.approx(-math.log(0.05), rel=1e-15)


def test_tail_is_vectorised(pareto):
    out = pareto.tail(np.array([0.5, 1.0, 2.0]))
    assert isinstance(out, np.ndarray)
    np.testing.assert_allclose(out, [1.0, 1.0, 0.125])


@pytest.mark.parametrize("mu", LAWS, ids=lambda m: m.describe())
def test_quantile_inverts_tail(mu):
    for q in (0.5, 0.1, 1e-3, 1e-6):
        assert mu.tail(mu.quantile(q)) == pytest.approx(q, rel=1e-9)


@pytest.mark.parametrize("mu", LAWS, ids=lambda m: m.describe())
def test_expected_shortfall_matches_quadrature(mu):
    for p in (0.2, 0.05, 0.01):
        b = mu.quantile(p)
        numeric = expect(mu, lambda x: x, lower=b) / p
        assert mu.expected_shortfall(p) == pytest.approx(numeric, rel=1e-8)


def test_expected_shortfall_reference_values(exponential, pareto):
    assert exponential.expected_shortfall(0.05) == pytest.approx(3.995732, abs=1e-6)
    assert pareto.expected_shortfall(0.1) == pytest.approx(3.231652, abs=1e-6)
    assert Normal().expected_shortfall(0.05) == pytest.approx(2.062713, abs=1e-5)


def test_heavy_pareto_has_no_expected_shortfall():
    mu = Pareto(alpha=1.0, scale=1.0)
    with pytest.raises(TruthUnavailableError):
        mu.expected_shortfall(0.1)
    assert not Pareto(alpha=1.5).moment_finite(2.0)
    assert Pareto(alpha=3.0).tail_index == 3.0
    assert Exponential().tail_index is None


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_rejects_levels_outside_unit_interval(exponential, p):
    with pytest.raises(DomainError):
        exponential.quantile(p)


def test_random_stream_is_reproducible():
    a = RandomStream(42, 3).uniforms(1000)
    b = RandomStream(42, 3).uniforms(1000)
    c = RandomStream(42, 4).uniforms(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() > 0.0 and a.max() < 1.0


def test_random_stream_rejects_bad_seeds():
    with pytest.raises(DomainError):
        RandomStream(-1)
    with pytest.raises(DomainError):
        RandomStream(0, -2)


def test_sample_mean():
    draws = Exponential(rate=2.0).sample(RandomStream(7), 200_000)
    assert draws.shape == (200_000,)
    assert draws.mean() == pytest.approx(0.5, abs=0.01)


def test_make_distribution_builds_families():
    assert make_distribution({"family": "pareto", "alpha": 3}) == Pareto(3.0, 1.0)
    assert make_distribution({"family": "normal"}) == Normal(0.0, 1.0)
    assert family_parameters("normal") == ("mean", "stdev")
    assert Exponential(rate=1.0).describe() == "exponential(rate=1)"


@pytest.mark.parametrize(
    "spec",
    [
        {"family": "gamma", "shape": 2},
        {"family": "exponential", "scale": 2},
        {"family": "exponential", "rate": -1},
        {"rate": 1},
    ],
)
def test_make_distribution_rejects_bad_specs(spec):
    with pytest.raises(ConfigError):
        make_distribution(spec)


@pytest.mark.parametrize("mu", LAWS, ids=lambda m: m.describe())
def test_quantile_and_tail_form_a_galois_connection(mu):
    levels = (0.9, 0.5, 0.1, 1e-2, 1e-4, 1e-6)
    grid = np.linspace(mu.quantile(0.999), mu.quantile(1e-7), 200)
    for p in levels:
        q = mu.quantile(p)
        for t in grid:
            tail = mu.tail(t)
            if abs(tail - p) <= 1e-7 * p:
                continue
            assert (tail <= p) == (q <= t)


@pytest.mark.parametrize("mu", LAWS, ids=lambda m: m.describe())
def test_density_integrates_to_one(mu):
    assert expect(mu, lambda x: 1.0) == pytest.approx(1.0, abs=1e-9)
