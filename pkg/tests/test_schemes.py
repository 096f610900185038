import math

import numpy as np
import pytest

from ismdp.core import Exponential, LogNormal, Normal, Pareto, WeightKind, make_scheme
from ismdp.core.schemes import weight
from ismdp.exceptions import SupportError


def test_unit_scheme(unit_exponential):
    assert unit_exponential.is_unit
    assert unit_exponential.weight_bound == 1.0
    np.testing.assert_array_equal(unit_exponential.weight(np.array([0.1, 3.0])), 1.0)
    assert unit_exponential.describe() == "unit[exponential(rate=1)]"


def test_exponential_tilt(tilted_exponential):
    scheme = tilted_exponential
    assert scheme.weight_kind is WeightKind.EXPONENTIAL_TILT
    assert scheme.tilt == 0.5
    assert scheme.weight_bound == pytest.approx(2.0)
    assert scheme.exp_moments_finite and scheme.exp_moments_certified
    assert scheme.weight(2.0) == pytest.approx(2.0 * math.exp(-1.0), rel=1e-12)
    assert scheme.weighted_moment_finite(2.0)


def test_heavier_sampling_rate_is_unbounded(exponential):
    scheme = make_scheme(exponential, Exponential(rate=2.0))
    assert scheme.weight_bound is None
    assert scheme.exp_moments_certified
    assert not scheme.exp_moments_finite
    assert not scheme.weighted_moment_finite(2.0)


def test_pareto_scale_shift(pareto):
    scheme = make_scheme(pareto, Pareto(alpha=2.0, scale=1.0))
    assert scheme.weight_kind is WeightKind.SCALE_SHIFT
    assert scheme.weight_bound == pytest.approx(1.5)
    assert scheme.weight(1.0) == pytest.approx(1.5)
    assert scheme.weight(3.0) == pytest.approx(0.5)
    assert scheme.weighted_moment_finite(2.0)


def test_normal_mean_shift_is_unbounded():
    scheme = make_scheme(Normal(0.0, 1.0), Normal(2.0, 1.0))
    assert scheme.weight_bound is None
    assert scheme.weight(0.0) == pytest.approx(math.exp(2.0))


def test_wider_normal_is_bounded():
    scheme = make_scheme(Normal(0.0, 1.0), Normal(0.0, 2.0))
    assert scheme.weight_bound == pytest.approx(2.0)
    assert scheme.weight(0.0) == pytest.approx(2.0)


def test_cross_family_scheme_is_uncertified(exponential):
    scheme = make_scheme(exponential, LogNormal(0.0, 1.0))
    assert scheme.weight_kind is WeightKind.DENSITY_RATIO
    assert scheme.weight_bound is None
    assert not scheme.exp_moments_certified
    assert scheme.weighted_moment_finite(2.0) is None


def test_support_mismatch_is_rejected(exponential):
    with pytest.raises(SupportError):
        make_scheme(Normal(), exponential)
    with pytest.raises(SupportError):
        make_scheme(exponential, Pareto(alpha=2.0, scale=1.0))


def test_weight_off_support_is_zero_and_logged(tilted_exponential, caplog):
    with caplog.at_level("WARNING", logger="ismdp.core.schemes"):
        assert weight(tilted_exponential, -1.0) == 0.0
    assert "off the support" in caplog.text
    assert weight(tilted_exponential, 2.0) == pytest.approx(2.0 * math.exp(-1.0))
