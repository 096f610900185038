"""
Closed-form moderate deviation variances and rates.

All integrals against ν that carry a factor w are rewritten against μ
(E_ν[g w²] = E_μ[g w]) before they reach the quadrature layer, so the integrand
never multiplies a large weight by a small sampling density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

from ismdp.core.distributions import AnalyticDistribution
from ismdp.core.quadrature import expect, landmarks
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import (
    DensityError,
    DivergentIntegralError,
    DomainError,
    ZeroVarianceError,
)
from ismdp.stats.scaling import LambdaSpec

logger = logging.getLogger(__name__)


def _check_level(name: str, p: float) -> None:
    if not 0.0 < p < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {p}")


def quantile_with_density(mu: AnalyticDistribution, p: float) -> tuple[float, float]:
    """T⁻¹(p) and f(T⁻¹(p)), requiring a positive density there."""
    _check_level("level", p)
    x = float(mu.quantile(p))
    f = float(mu.density(x))
    if not f > 0.0:
        raise DensityError(
            f"density of {mu.describe()} vanishes at T⁻¹({p}) = {x:g}"
        )
    return x, f


def _require_weighted_second_moment(scheme: SamplingScheme) -> None:
    if scheme.weighted_moment_finite(2.0) is False:
        raise DivergentIntegralError(
            f"E_ν[X² w(X)²] is infinite for {scheme.describe()}"
        )


def _split_points(scheme: SamplingScheme) -> list[float]:
    return [] if scheme.is_unit else landmarks(scheme.sampler)


def tail_weight_mass(
    mu: AnalyticDistribution, scheme: SamplingScheme, b: float
) -> float:
    """
    ∫_b^∞ w dν, by quadrature against ν.

    Equals T(b) for every scheme; kept as an independent evaluation path.
    """
    if scheme.is_unit:
        return float(mu.tail(b))
    return expect(
        scheme.sampler, scheme.weight, lower=b, points=landmarks(scheme.nominal)
    )


def tail_second_moment(
    mu: AnalyticDistribution, scheme: SamplingScheme, b: float
) -> float:
    """E_ν[w(X)² I{X > b}], evaluated as E_μ[w(X) I{X > b}]."""
    if scheme.is_unit:
        return float(mu.tail(b))
    return expect(mu, scheme.weight, lower=b, points=_split_points(scheme))


def level_second_moment(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float
) -> float:
    """E_ν[w² I{X > T⁻¹(q)}]; exactly q under the unit scheme."""
    if scheme.is_unit:
        return q
    return tail_second_moment(mu, scheme, float(mu.quantile(q)))


def sigma_qp_squared(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, p: float
) -> float:
    """
    Asymptotic variance σ²_{q,p}(w) of the truncated Expected Shortfall estimator.

    The first term keeps ∫_{T⁻¹(q)}^∞ w dν as written (first power of w); it is
    evaluated by quadrature and equals q.

    Parameters
    ----------
    mu : AnalyticDistribution
        Nominal law.
    scheme : SamplingScheme
        Sampling scheme for ``mu``.
    q, p : float
        Truncation and Expected Shortfall levels with 0 < q < p < 1.

    Returns
    -------
    float
        σ²_{q,p}(w), non-negative.

    Raises
    ------
    DomainError
        If the levels are out of order.
    DensityError
        If f vanishes at either quantile.
    """
    _check_level("p", p)
    if not 0.0 < q < p:
        raise DomainError(f"truncation requires 0 < q < p, got q={q}, p={p}")
    bq, _ = quantile_with_density(mu, q)
    bp, _ = quantile_with_density(mu, p)
    points = _split_points(scheme)

    first = (bq - bp) ** 2 * tail_weight_mass(mu, scheme, bq)
    second = expect(
        mu, lambda x: (x - bp) ** 2 * scheme.weight(x), bp, bq, points=points
    )
    mean_part = expect(mu, lambda x: x - bp, bp, bq) + q * (bq - bp)
    value = (first + second - mean_part**2) / p**2
    logger.debug("sigma_qp^2(q=%g, p=%g) = %.12g", q, p, value)
    # Rounding can leave a negative residue of order 1e-16 as q -> p.
    return max(value, 0.0)


def sigma_p_squared(
    mu: AnalyticDistribution, scheme: SamplingScheme, p: float
) -> float:
    """
    Asymptotic variance σ²_p(w) of the Expected Shortfall estimator at level p.

    Raises
    ------
    DivergentIntegralError
        If the weighted second moment is infinite.
    """
    _check_level("p", p)
    _require_weighted_second_moment(scheme)
    bp = float(mu.quantile(p))
    square = expect(
        mu,
        lambda x: (x - bp) ** 2 * scheme.weight(x),
        lower=bp,
        points=_split_points(scheme),
    )
    excess = expect(mu, lambda x: x - bp, lower=bp)
    value = (square - excess**2) / p**2
    logger.debug("sigma_p^2(p=%g) = %.12g", p, value)
    return max(value, 0.0)


def _quadratic_rate(variance: float, z: float, what: str) -> float:
    if not variance > 0.0:
        raise ZeroVarianceError(f"{what} has zero asymptotic variance")
    return z * z / (2.0 * variance)


def es_rate(
    mu: AnalyticDistribution, scheme: SamplingScheme, p: float, z: float
) -> float:
    """I_p^w(z) = z² / (2σ²_p(w))."""
    return _quadratic_rate(sigma_p_squared(mu, scheme, p), z, "Expected Shortfall")


def truncated_es_rate(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, p: float, z: float
) -> float:
    """z² / (2σ²_{q,p}(w))."""
    return _quadratic_rate(
        sigma_qp_squared(mu, scheme, q, p), z, "truncated Expected Shortfall"
    )


def quantile_variance(
    mu: AnalyticDistribution, scheme: SamplingScheme, p: float
) -> float:
    """(E_ν[w² I{X > T⁻¹(p)}] - p²) / f(T⁻¹(p))²."""
    _, f = quantile_with_density(mu, p)
    return (level_second_moment(mu, scheme, p) - p * p) / (f * f)


def tail_variance(mu: AnalyticDistribution, scheme: SamplingScheme, t: float) -> float:
    """E_ν[w² I{X > t}] - T(t)², the variance of w(X)I{X > t} under ν."""
    level = float(mu.tail(t))
    return tail_second_moment(mu, scheme, t) - level * level


def gao_wang_moments(mu: AnalyticDistribution, alpha: float) -> tuple[float, float]:
    """
    Mean and second moment of

        Z(α) = ((X - a)⁺ - c) / (1 - α)

    with a = T⁻¹(1 - α) and c = ∫_a^∞ T(x) dx.

    Raises
    ------
    DivergentIntegralError
        If μ has no finite second moment.
    """
    _check_level("alpha", alpha)
    if not mu.moment_finite(2.0):
        raise DivergentIntegralError(f"{mu.describe()} has no finite second moment")
    p = 1.0 - alpha
    a = float(mu.quantile(p))
    # ∫_a^∞ T(x) dx = E[(X - a)⁺]
    c = expect(mu, lambda x: x - a, lower=a)
    below = 1.0 - float(mu.tail(a))
    mean = (expect(mu, lambda x: x - a - c, lower=a) - below * c) / p
    second = (below * c * c + expect(mu, lambda x: (x - a - c) ** 2, lower=a)) / p**2
    return mean, second


def gao_wang_variance(mu: AnalyticDistribution, alpha: float) -> float:
    """E[Z(α)²]; equals σ²_{1-α}(1) under the unit scheme."""
    return gao_wang_moments(mu, alpha)[1]


def mdp_half_width(variance: float, n: int, significance: float) -> float:
    """σ √(2 ln(1/significance) / n) for an estimator with asymptotic variance σ²."""
    if not 0.0 < significance < 1.0:
        raise DomainError(f"significance must lie in (0, 1), got {significance}")
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    if not variance > 0.0:
        raise ZeroVarianceError("half-width requested for a zero asymptotic variance")
    return math.sqrt(2.0 * variance * math.log(1.0 / significance) / n)


def mdp_confidence_interval(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    p: float,
    n: int,
    significance: float,
    *,
    speed: LambdaSpec | None = None,
) -> float:
    """
    Half-width of the Expected Shortfall interval implied by the MDP tail bound.

    Solving exp(-λ_n² z² / (2σ²)) = significance for z gives the deviation on the
    b_n scale; the half-width z / b_n is σ √(2 ln(1/significance)) / √n for every
    speed sequence.
    """
    if not 0.0 < significance < 1.0:
        raise DomainError(f"significance must lie in (0, 1), got {significance}")
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    variance = sigma_p_squared(mu, scheme, p)
    if not variance > 0.0:
        raise ZeroVarianceError("Expected Shortfall has zero asymptotic variance")
    speed = speed or LambdaSpec()
    z = math.sqrt(variance) * math.sqrt(2.0 * math.log(1.0 / significance))
    z /= speed.lambda_n(n)
    return z / speed.b_n(n)


@dataclass
class RateReport:
    """
    Rate quantities for one (μ, scheme, p).

    ``kappa`` holds rows ``(q, delta, kappa1, kappa2, kappa3)``.
    """

    p: float
    sigma_p_sq: float
    sigma_qp_sq: dict[float, float] = field(default_factory=dict)
    kappa: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    es_rate_at: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "sigma_p_sq": self.sigma_p_sq,
            "sigma_qp_sq": [
                {"q": q, "value": v} for q, v in self.sigma_qp_sq.items()
            ],
            "kappa": [
                {"q": q, "delta": d, "kappa1": k1, "kappa2": k2, "kappa3": k3}
                for q, d, k1, k2, k3 in self.kappa
            ],
            "es_rate": [{"z": z, "value": v} for z, v in self.es_rate_at.items()],
        }


def rate_report(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    p: float,
    *,
    q_grid: Iterable[float] = (),
    delta_grid: Iterable[float] = (),
    z_grid: Iterable[float] = (0.0, 1.0),
) -> RateReport:
    """Collect σ²_p, σ²_{q,p} per q, κ₁-κ₃ per (q, δ) and I_p^w per z."""
    from ismdp.stats.variational import kappa1, kappa2, kappa3

    q_values = list(q_grid)
    deltas = list(delta_grid)
    variance = sigma_p_squared(mu, scheme, p)
    report = RateReport(p=p, sigma_p_sq=variance)
    for q in q_values:
        if q < p:
            report.sigma_qp_sq[q] = sigma_qp_squared(mu, scheme, q, p)
        for delta in deltas:
            report.kappa.append(
                (
                    q,
                    delta,
                    kappa1(mu, scheme, q, delta),
                    kappa2(mu, scheme, q, delta),
                    kappa3(mu, scheme, q, delta),
                )
            )
    for z in z_grid:
        report.es_rate_at[z] = _quadratic_rate(variance, z, "Expected Shortfall")
    return report
