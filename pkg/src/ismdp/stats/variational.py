"""
Variational rate constants κ₁, κ₂, κ₃ and their optimal perturbations.

Each constant is the minimum of the energy ½∫h² dν over centered densities h
subject to one linear constraint |∫ g h dν| >= δ, where g is

    κ₁: (q / f(b)) · w · I{X > b}
    κ₂: (X - b)⁺ · w
    κ₃: w · I{X > b}

with b = T⁻¹(q). The minimum is δ² / (2 Var_ν(g)), attained at
h* = -(δ / Var_ν(g)) (g - E_ν g).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy import optimize

from ismdp.core.distributions import AnalyticDistribution
from ismdp.core.quadrature import expect, landmarks
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import (
    DivergentIntegralError,
    DomainError,
    NonPositiveDenominatorError,
    NumericalError,
)
from ismdp.stats.rates import level_second_moment, quantile_with_density

logger = logging.getLogger(__name__)


class KappaKind(str, Enum):
    QUANTILE = "kappa1"
    INTEGRATED_TAIL = "kappa2"
    TAIL = "kappa3"


@dataclass(frozen=True)
class PerturbationDensity:
    """
    A signed density h = dη/dν of a centered perturbation η of ν.

    Attributes
    ----------
    evaluator : Callable[[float], float]
        h as a function of x.
    description : str
        Human-readable tag.
    breakpoints : tuple of float
        Points where h jumps, used to split quadrature.
    """

    evaluator: Callable[[float], float]
    description: str = ""
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x: float) -> float:
        return float(self.evaluator(x))

    def scaled(self, c: float) -> "PerturbationDensity":
        return PerturbationDensity(
            lambda x: c * self.evaluator(x),
            f"{c:g}*{self.description}",
            self.breakpoints,
        )


@dataclass(frozen=True)
class ConstraintStatistic:
    """The function g of one variational problem with its mean and variance under ν."""

    kind: KappaKind
    g: Callable[[float], float]
    mean: float
    variance: float
    breakpoint: float


def _weighted_excess_moments(
    mu: AnalyticDistribution, scheme: SamplingScheme, b: float
) -> tuple[float, float]:
    """E_ν[((X - b)⁺ w)²] and E_ν[(X - b)⁺ w] = ∫_b^∞ T(x) dx."""
    if scheme.weighted_moment_finite(2.0) is False:
        raise DivergentIntegralError(
            f"E_ν[X² w(X)²] is infinite for {scheme.describe()}"
        )
    points = [] if scheme.is_unit else landmarks(scheme.sampler)
    square = expect(
        mu, lambda x: (x - b) ** 2 * scheme.weight(x), lower=b, points=points
    )
    excess = expect(mu, lambda x: x - b, lower=b)
    return square, excess


def constraint_statistic(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q: float,
    kind: KappaKind | str,
) -> ConstraintStatistic:
    """
    Build g for the requested constant and its first two ν-moments.

    Raises
    ------
    NonPositiveDenominatorError
        If Var_ν(g) is not positive.
    """
    kind = KappaKind(kind)
    b, f = quantile_with_density(mu, q)
    w = scheme.weight

    g: Callable[[float], float]
    if kind is KappaKind.INTEGRATED_TAIL:
        square, mean = _weighted_excess_moments(mu, scheme, b)
        variance = square - mean * mean

        def g(x: float) -> float:
            return max(x - b, 0.0) * w(x)

    else:
        scale = q / f if kind is KappaKind.QUANTILE else 1.0
        second = level_second_moment(mu, scheme, q)
        mean = scale * q
        variance = scale * scale * (second - q * q)

        def g(x: float) -> float:
            return scale * w(x) if x > b else 0.0

    if not variance > 0.0:
        raise NonPositiveDenominatorError(
            f"{kind.value} denominator Var_ν(g) = {variance:g} is not positive "
            f"at q={q}"
        )
    return ConstraintStatistic(kind, g, mean, variance, b)


def _kappa(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q: float,
    delta: float,
    kind: KappaKind,
) -> float:
    if delta < 0.0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    stat = constraint_statistic(mu, scheme, q, kind)
    return delta**2 / (2.0 * stat.variance)


def kappa1(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, delta: float
) -> float:
    """
    Rate constant for a quantile deviation of size δ at level q.

    Equals (δ²/2) f(T⁻¹(q))² / (q² (E_ν[w² I{X > T⁻¹(q)}] - q²)).
    """
    return _kappa(mu, scheme, q, delta, KappaKind.QUANTILE)


def kappa2(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, delta: float
) -> float:
    """
    Rate constant for a deviation δ of the integrated tail beyond T⁻¹(q).

    The denominator is E_ν[(X - b)² w² I] - (E_μ[(X - b) I])², which expands into
    the four moments E_ν[X² w² I], E_ν[X w² I], E_ν[w² I] and E_μ[X I].
    """
    return _kappa(mu, scheme, q, delta, KappaKind.INTEGRATED_TAIL)


def kappa3(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, delta: float
) -> float:
    """(δ²/2) / (E_ν[w² I{X > T⁻¹(q)}] - q²)."""
    return _kappa(mu, scheme, q, delta, KappaKind.TAIL)


KAPPAS = {
    KappaKind.QUANTILE: kappa1,
    KappaKind.INTEGRATED_TAIL: kappa2,
    KappaKind.TAIL: kappa3,
}


def lagrange_multipliers(
    mu: AnalyticDistribution, scheme: SamplingScheme, q: float, delta: float
) -> tuple[float, float]:
    """
    Multipliers (λ₁, λ₂) of the κ₁ Lagrangian.

    With V = E_ν[w² I] - q² and f = f(T⁻¹(q)): λ₂ = δ f² / (q² V) and
    λ₁ = -λ₂ q² / f.
    """
    _, f = quantile_with_density(mu, q)
    stat = constraint_statistic(mu, scheme, q, KappaKind.QUANTILE)
    return _multipliers(stat, q, f, delta)


def _multipliers(
    stat: ConstraintStatistic, q: float, f: float, delta: float
) -> tuple[float, float]:
    # stat.variance is the scaled V, (q/f)² V
    lam2 = delta / stat.variance
    return -lam2 * q * q / f, lam2


def optimal_perturbation(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q: float,
    delta: float,
    kind: KappaKind | str = KappaKind.QUANTILE,
) -> PerturbationDensity:
    """
    Minimiser h* of the energy for the requested constant.

    For κ₁, h* = -λ₁ below T⁻¹(q) and -λ₁ - λ₂ q w(x) / f(T⁻¹(q)) above, with the
    multipliers of :func:`lagrange_multipliers`. The other constants use
    h* = -δ (g - E_ν g) / Var_ν(g). In every case ∫h* dν = 0 and ∫ g h* dν = -δ.
    """
    kind = KappaKind(kind)
    if delta < 0.0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    stat = constraint_statistic(mu, scheme, q, kind)

    h: Callable[[float], float]
    if kind is KappaKind.QUANTILE:
        b, f = quantile_with_density(mu, q)
        lam1, lam2 = _multipliers(stat, q, f, delta)
        w = scheme.weight

        def h(x: float) -> float:
            return -lam1 - lam2 * q * w(x) / f if x > b else -lam1

    else:
        coef = delta / stat.variance
        g, mean = stat.g, stat.mean

        def h(x: float) -> float:
            return -coef * (g(x) - mean)

    return PerturbationDensity(
        h, f"{kind.value}-optimum(q={q:g}, delta={delta:g})", (stat.breakpoint,)
    )


def _points(scheme: SamplingScheme, h: PerturbationDensity) -> list[float]:
    return [*h.breakpoints, *landmarks(scheme.nominal)]


def perturbation_rate(scheme: SamplingScheme, h: PerturbationDensity) -> float:
    """Energy ½∫h² dν of the perturbation."""
    return 0.5 * expect(scheme.sampler, lambda x: h(x) ** 2, points=_points(scheme, h))


def centering(scheme: SamplingScheme, h: PerturbationDensity) -> float:
    """∫h dν; zero for an admissible perturbation."""
    return expect(scheme.sampler, h, points=_points(scheme, h))


def constraint_functional(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q: float,
    h: PerturbationDensity,
    kind: KappaKind | str = KappaKind.QUANTILE,
) -> float:
    """
    ∫ g h dν for the constraint of the requested constant.

    For κ₂ this is ∫(x - T⁻¹(q))⁺ w h dν, the integrated tail functional with
    the order of integration swapped.
    """
    stat = constraint_statistic(mu, scheme, q, kind)
    return expect(
        scheme.sampler,
        lambda x: stat.g(x) * h(x),
        lower=stat.breakpoint,
        points=_points(scheme, h),
    )


def numeric_kappa(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q: float,
    delta: float,
    kind: KappaKind | str = KappaKind.QUANTILE,
    *,
    n_bins: int = 12,
) -> float:
    """
    Minimise the energy numerically over a finite family of perturbations.

    The family spans indicators of ``n_bins`` ν-quantile bins (split at T⁻¹(q)) and
    the constraint shape g. The minimiser is SLSQP on the Gram quadratic form.

    Raises
    ------
    NumericalError
        If the optimiser does not converge.
    """
    kind = KappaKind(kind)
    stat = constraint_statistic(mu, scheme, q, kind)
    nu = scheme.sampler
    levels = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    inner = {float(x) for x in np.atleast_1d(nu.isf(levels))} | {stat.breakpoint}
    lo, hi = nu.support
    edges = [lo, *sorted(x for x in inner if lo < x < hi), hi]
    bins = list(zip(edges[:-1], edges[1:]))
    points = landmarks(mu)

    masses = np.array([float(nu.tail(a)) - float(nu.tail(b)) for a, b in bins])
    # ∫ g 1_bin dν; g is ν-integrable on each bin.
    g_bin = np.array(
        [
            expect(nu, stat.g, a, b, points=points) if b > stat.breakpoint else 0.0
            for a, b in bins
        ]
    )
    g_square = stat.variance + stat.mean**2

    size = len(bins) + 1
    gram = np.zeros((size, size))
    gram[np.arange(len(bins)), np.arange(len(bins))] = masses
    gram[:-1, -1] = gram[-1, :-1] = g_bin
    gram[-1, -1] = g_square
    first = np.append(masses, stat.mean)
    constraint = np.append(g_bin, g_square)

    start = np.zeros(size)
    start[-1] = -delta / stat.variance
    start[:-1] = delta * stat.mean / stat.variance

    result = optimize.minimize(
        lambda c: 0.5 * c @ gram @ c,
        start + 0.1 * delta,
        jac=lambda c: gram @ c,
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda c: first @ c, "jac": lambda c: first},
            {
                "type": "ineq",
                "fun": lambda c: -(constraint @ c) - delta,
                "jac": lambda c: -constraint,
            },
        ],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    if not result.success:
        raise NumericalError(f"variational minimisation failed: {result.message}")
    logger.debug(
        "numeric %s = %.10g after %d iterations", kind.value, result.fun, result.nit
    )
    return float(result.fun)


def kappa_sequence(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q_grid: list[float],
    delta: float,
    kind: KappaKind | str = KappaKind.QUANTILE,
) -> list[float]:
    """The constant along a decreasing grid of levels."""
    fn = KAPPAS[KappaKind(kind)]
    return [fn(mu, scheme, q, delta) for q in q_grid]


__all__ = [
    "KAPPAS",
    "ConstraintStatistic",
    "KappaKind",
    "PerturbationDensity",
    "centering",
    "constraint_functional",
    "constraint_statistic",
    "kappa1",
    "kappa2",
    "kappa3",
    "kappa_sequence",
    "lagrange_multipliers",
    "numeric_kappa",
    "optimal_perturbation",
    "perturbation_rate",
]
