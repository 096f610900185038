import math

import pytest

from ismdp.core import (
    Exponential,
    LogNormal,
    Normal,
    Pareto,
    make_scheme,
    unit_scheme,
)
from ismdp.exceptions import DivergentIntegralError, DomainError, ZeroVarianceError
from ismdp.stats import (
    es_rate,
    gao_wang_variance,
    mdp_confidence_interval,
    quantile_variance,
    rate_report,
    sigma_p_squared,
    sigma_qp_squared,
    tail_variance,
    truncated_es_rate,
)
from ismdp.stats.rates import (
    gao_wang_moments,
    level_second_moment,
    mdp_half_width,
    tail_weight_mass,
)


@pytest.mark.parametrize("p", [0.05, 0.5, 0.01])
def test_sigma_p_squared_unit_exponential(exponential, unit_exponential, p):
    # For the unit exponential σ²_p = 2/p - 1.
    value = sigma_p_squared(exponential, unit_exponential, p)
    assert value == pytest.approx(2.0 / p - 1.0, abs=1e-6)


def test_sigma_qp_squared_reference_values(exponential, unit_exponential):
    assert sigma_qp_squared(exponential, unit_exponential, 0.01, 0.05) == pytest.approx(
        18.4845, abs=1e-3
    )
    assert sigma_qp_squared(
        exponential, unit_exponential, 0.001, 0.05
    ) == pytest.approx(35.111, abs=1e-2)


def test_sigma_qp_squared_grows_towards_sigma_p(exponential, unit_exponential):
    values = [
        sigma_qp_squared(exponential, unit_exponential, q, 0.05)
        for q in (0.04, 0.01, 1e-3, 1e-5)
    ]
    assert values == sorted(values)
    assert values[-1] == pytest.approx(39.0, rel=5e-3)


def test_sigma_qp_squared_requires_ordered_levels(exponential, unit_exponential):
    with pytest.raises(DomainError):
        sigma_qp_squared(exponential, unit_exponential, 0.1, 0.05)


def test_tilt_reduces_es_variance(exponential, tilted_exponential):
    tilted = sigma_p_squared(exponential, tilted_exponential, 0.05)
    assert 0.0 < tilted < 39.0


def test_heavy_tail_has_divergent_variance():
    mu = Pareto(alpha=1.5, scale=1.0)
    with pytest.raises(DivergentIntegralError):
        sigma_p_squared(mu, unit_scheme(mu), 0.05)


def test_weighted_tail_mass_equals_nominal_tail(exponential, tilted_exponential):
    assert tail_weight_mass(exponential, tilted_exponential, 2.0) == pytest.approx(
        math.exp(-2.0), rel=1e-9
    )


def test_level_second_moment(exponential, unit_exponential, tilted_exponential):
    assert level_second_moment(exponential, unit_exponential, 0.1) == 0.1
    assert level_second_moment(
        exponential, tilted_exponential, 0.1
    ) == pytest.approx(0.0421637, abs=1e-7)


def test_projected_variances(exponential, unit_exponential):
    assert quantile_variance(exponential, unit_exponential, 0.05) == pytest.approx(19.0)
    t = 1.0
    expected = math.exp(-t) * (1.0 - math.exp(-t))
    assert tail_variance(exponential, unit_exponential, t) == pytest.approx(expected)


def test_rates_are_quadratic(exponential, unit_exponential):
    assert es_rate(exponential, unit_exponential, 0.05, 0.0) == 0.0
    assert es_rate(exponential, unit_exponential, 0.05, 1.0) == pytest.approx(1 / 78)
    assert es_rate(exponential, unit_exponential, 0.05, 2.0) == pytest.approx(4 / 78)
    assert truncated_es_rate(exponential, unit_exponential, 0.01, 0.05, 0.0) == 0.0


def test_gao_wang_matches_unit_variance(exponential, unit_exponential, pareto):
    mean, second = gao_wang_moments(exponential, 0.95)
    assert mean == pytest.approx(0.0, abs=1e-8)
    assert second == pytest.approx(
        sigma_p_squared(exponential, unit_exponential, 0.05), rel=1e-8
    )
    assert gao_wang_variance(pareto, 0.9) == pytest.approx(
        sigma_p_squared(pareto, unit_scheme(pareto), 0.1), rel=1e-6
    )


GAO_WANG_LAWS = [
    Exponential(rate=1.0),
    Pareto(alpha=3.0, scale=1.0),
    Normal(mean=0.0, stdev=1.0),
]


@pytest.mark.parametrize("alpha", [0.5, 0.9, 0.95, 0.99])
@pytest.mark.parametrize("mu", GAO_WANG_LAWS, ids=lambda m: m.describe())
def test_gao_wang_equals_unit_variance_across_laws(mu, alpha):
    expected = sigma_p_squared(mu, unit_scheme(mu), 1.0 - alpha)
    assert gao_wang_variance(mu, alpha) == pytest.approx(expected, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize(
    "mu",
    [*GAO_WANG_LAWS, LogNormal(logmean=0.0, logsd=1.0), Pareto(alpha=2.5, scale=2.0)],
    ids=lambda m: m.describe(),
)
def test_gao_wang_variable_is_centred(mu):
    for alpha in (0.5, 0.95):
        mean, _ = gao_wang_moments(mu, alpha)
        assert mean == pytest.approx(0.0, abs=1e-9)


def test_gao_wang_needs_second_moment():
    with pytest.raises(DivergentIntegralError):
        gao_wang_variance(Pareto(alpha=2.0, scale=1.0), 0.9)


def test_confidence_half_width(exponential, unit_exponential):
    width = mdp_confidence_interval(exponential, unit_exponential, 0.05, 10_000, 0.05)
    assert width == pytest.approx(0.152867, abs=1e-4)
    assert mdp_half_width(39.0, 10_000, 0.05) == pytest.approx(width, rel=1e-6)


def test_confidence_half_width_rejects_bad_arguments(exponential, unit_exponential):
    with pytest.raises(DomainError):
        mdp_confidence_interval(exponential, unit_exponential, 0.05, 100, 1.5)
    with pytest.raises(DomainError):
        mdp_confidence_interval(exponential, unit_exponential, 0.05, 0, 0.05)
    with pytest.raises(ZeroVarianceError):
        mdp_half_width(0.0, 100, 0.05)


def test_rate_report(exponential, unit_exponential):
    report = rate_report(
        exponential,
        unit_exponential,
        0.05,
        q_grid=[0.01, 0.1],
        delta_grid=[0.5],
        z_grid=[0.0, 1.0],
    )
    assert report.sigma_p_sq == pytest.approx(39.0, abs=1e-6)
    assert list(report.sigma_qp_sq) == [0.01]
    assert len(report.kappa) == 2
    q, delta, k1, k2, k3 = report.kappa[1]
    assert (q, delta) == (0.1, 0.5)
    assert k1 == pytest.approx(1.388889, abs=1e-6)
    assert k2 == pytest.approx(0.657895, abs=1e-6)
    assert k3 == pytest.approx(1.388889, abs=1e-6)
    assert report.es_rate_at[0.0] == 0.0
    record = report.to_dict()
    assert record["sigma_p_sq"] == report.sigma_p_sq
    assert record["es_rate"][1] == {"z": 1.0, "value": pytest.approx(1 / 78)}


def test_bounded_pareto_scheme_has_finite_variance(pareto):
    scheme = make_scheme(pareto, Pareto(alpha=2.5, scale=1.0))
    assert sigma_p_squared(pareto, scheme, 0.05) > 0.0
