"""Change-of-measure schemes: the pair (μ, ν) and the likelihood ratio w = dμ/dν."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from ismdp.core.distributions import (
    AnalyticDistribution,
    Exponential,
    FloatArray,
    LogNormal,
    Normal,
    Pareto,
)
from ismdp.exceptions import SupportError

logger = logging.getLogger(__name__)


class WeightKind(str, Enum):
    UNIT = "unit"
    EXPONENTIAL_TILT = "exponential_tilt"
    SCALE_SHIFT = "scale_shift"
    DENSITY_RATIO = "density_ratio"


@dataclass(frozen=True)
class SamplingScheme:
    """
    Importance sampling scheme (ν, w) for a nominal law μ.

    Attributes
    ----------
    nominal : AnalyticDistribution
        The law μ whose tail functionals are estimated.
    sampler : AnalyticDistribution
        The law ν the draws come from.
    weight_kind : WeightKind
        How w arises from the pair.
    weight_bound : float or None
        sup w over the support of ν when finite.
    exp_moments_finite : bool
        Whether E_ν[exp(αw(X))] < ∞ for every α > 0.
    exp_moments_certified : bool
        Whether ``exp_moments_finite`` was decided analytically. Cross-family pairs
        are left uncertified and audited numerically.
    tilt : float or None
        Rate ratio θ = rate(ν)/rate(μ) for exponential tilts.
    """

    nominal: AnalyticDistribution
    sampler: AnalyticDistribution
    weight_kind: WeightKind
    weight_bound: float | None
    exp_moments_finite: bool
    exp_moments_certified: bool = True
    tilt: float | None = None

    @property
    def is_unit(self) -> bool:
        return self.weight_kind is WeightKind.UNIT

    def log_weight(self, x: ArrayLike) -> Any:
        """log w(x) as a log-density difference; ``-inf`` off either support."""
        arr = np.asarray(x, dtype=float)
        log_mu = np.asarray(self.nominal.log_density(arr))
        log_nu = np.asarray(self.sampler.log_density(arr))
        with np.errstate(invalid="ignore"):
            out = np.where(np.isfinite(log_nu), log_mu - log_nu, -np.inf)
        return float(out) if np.ndim(x) == 0 else out

    def weight(self, x: ArrayLike) -> Any:
        """w(x) = (dμ/dν)(x), zero off the support of ν."""
        if self.is_unit:
            arr = np.asarray(x, dtype=float)
            out = np.where(self.off_support(arr), 0.0, 1.0)
            return float(out) if np.ndim(x) == 0 else out
        with np.errstate(over="ignore"):
            out = np.exp(np.asarray(self.log_weight(x)))
        return float(out) if np.ndim(x) == 0 else out

    def off_support(self, x: ArrayLike) -> Any:
        """Diagnostic flag: True where x lies outside the support of ν."""
        out = ~np.isfinite(np.asarray(self.sampler.log_density(x)))
        return bool(out) if np.ndim(x) == 0 else out

    def weighted_moment_finite(self, k: float) -> bool | None:
        """
        Whether E_ν[|X|^k w(X)²] = E_μ[|X|^k w(X)] is finite, decided analytically.

        Returns None for pairs with no analytic answer.
        """
        mu, nu = self.nominal, self.sampler
        if self.is_unit:
            return mu.moment_finite(k)
        if isinstance(mu, Exponential) and isinstance(nu, Exponential):
            return 2.0 * mu.rate > nu.rate
        if isinstance(mu, Normal) and isinstance(nu, Normal):
            return 2.0 * nu.stdev**2 > mu.stdev**2
        if isinstance(mu, LogNormal) and isinstance(nu, LogNormal):
            return 2.0 * nu.logsd**2 > mu.logsd**2
        if isinstance(mu, Pareto) and isinstance(nu, Pareto):
            return k + nu.alpha - 2.0 * mu.alpha < 0.0
        return None

    def describe(self) -> str:
        if self.is_unit:
            return f"unit[{self.nominal.describe()}]"
        pair = f"{self.nominal.describe()} <- {self.sampler.describe()}"
        return f"{self.weight_kind.value}[{pair}]"


def _gaussian_log_ratio_max(
    mean_mu: float, sd_mu: float, mean_nu: float, sd_nu: float
) -> float | None:
    """
    Maximum over x of log N(x; mean_mu, sd_mu) - log N(x; mean_nu, sd_nu).

    None when the quadratic is unbounded above.
    """
    a = 1.0 / (2.0 * sd_nu**2) - 1.0 / (2.0 * sd_mu**2)
    b = mean_mu / sd_mu**2 - mean_nu / sd_nu**2
    c = (
        math.log(sd_nu / sd_mu)
        - mean_mu**2 / (2.0 * sd_mu**2)
        + mean_nu**2 / (2.0 * sd_nu**2)
    )
    if a < 0.0:
        return c - b * b / (4.0 * a)
    if a == 0.0 and b == 0.0:
        return c
    return None


def _analytic_bound(
    mu: AnalyticDistribution, nu: AnalyticDistribution
) -> tuple[WeightKind, float | None, float | None]:
    """Weight kind, sup w and tilt for a same-family pair."""
    if isinstance(mu, Exponential) and isinstance(nu, Exponential):
        tilt = nu.rate / mu.rate
        bound = mu.rate / nu.rate if nu.rate <= mu.rate else None
        return WeightKind.EXPONENTIAL_TILT, bound, tilt
    if isinstance(mu, Pareto) and isinstance(nu, Pareto):
        # w(x) ∝ x^{β-α} on [x_m, ∞): maximal at the left end point when β <= α.
        if nu.alpha <= mu.alpha:
            bound = mu.alpha / nu.alpha * (mu.scale / nu.scale) ** nu.alpha
            return WeightKind.SCALE_SHIFT, bound, None
        return WeightKind.SCALE_SHIFT, None, None
    if isinstance(mu, Normal) and isinstance(nu, Normal):
        log_max = _gaussian_log_ratio_max(mu.mean, mu.stdev, nu.mean, nu.stdev)
        return WeightKind.SCALE_SHIFT, _exp_or_none(log_max), None
    if isinstance(mu, LogNormal) and isinstance(nu, LogNormal):
        # The 1/x Jacobians cancel, so the ratio is the Gaussian one in log space.
        log_max = _gaussian_log_ratio_max(mu.logmean, mu.logsd, nu.logmean, nu.logsd)
        return WeightKind.SCALE_SHIFT, _exp_or_none(log_max), None
    return WeightKind.DENSITY_RATIO, None, None


def _exp_or_none(value: float | None) -> float | None:
    return None if value is None else math.exp(value)


def make_scheme(mu: AnalyticDistribution, nu: AnalyticDistribution) -> SamplingScheme:
    """
    Build the importance sampling scheme for nominal law ``mu`` sampled under ``nu``.

    Parameters
    ----------
    mu : AnalyticDistribution
        Nominal law.
    nu : AnalyticDistribution
        Sampling law.

    Returns
    -------
    SamplingScheme
        Scheme with the density ratio as weight. The bound is analytic for same-family
        pairs; exponential moments are certified finite exactly when the bound is.

    Raises
    ------
    SupportError
        If μ has mass outside the support of ν.
    """
    if not nu.contains_support_of(mu):
        raise SupportError(
            f"{mu.describe()} has mass outside the support of {nu.describe()}"
        )
    if mu == nu:
        return SamplingScheme(mu, nu, WeightKind.UNIT, 1.0, True, tilt=1.0)
    kind, bound, tilt = _analytic_bound(mu, nu)
    certified = kind is not WeightKind.DENSITY_RATIO
    scheme = SamplingScheme(
        nominal=mu,
        sampler=nu,
        weight_kind=kind,
        weight_bound=bound,
        # Same-family unbounded ratios grow exponentially (or polynomially under a
        # heavy tail) and E_ν[exp(αw)] diverges for every α > 0.
        exp_moments_finite=bound is not None,
        exp_moments_certified=certified or bound is not None,
        tilt=tilt,
    )
    logger.debug("built scheme %s with bound %s", scheme.describe(), bound)
    return scheme


def unit_scheme(mu: AnalyticDistribution) -> SamplingScheme:
    """Standard Monte Carlo: ν = μ and w ≡ 1."""
    return make_scheme(mu, mu)


def weight(scheme: SamplingScheme, x: float) -> float:
    """
    Evaluate w(x); off the support of ν the value is 0 and a warning is logged.
    """
    if scheme.off_support(x):
        logger.warning(
            "weight evaluated off the support of %s at x=%g",
            scheme.sampler.describe(),
            x,
        )
        return 0.0
    return float(scheme.weight(x))
