"""
Checks of the hypotheses behind the moderate deviation results.

Every check yields a verdict of pass, fail or inconclusive. Numeric estimates never
certify an infinite moment, so an estimate that blows up is reported as inconclusive
unless an analytic criterion decides the case.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from ismdp.core.distributions import AnalyticDistribution
from ismdp.core.quadrature import expect
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import DomainError, NumericalError
from ismdp.stats.rates import quantile_with_density, tail_second_moment
from ismdp.stats.scaling import LambdaSpec

logger = logging.getLogger(__name__)

DEFAULT_SLOPE_THRESHOLD = 0.05
DEFAULT_Q_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
# Grid points over which a diagnostic ratio must move monotonically.
MONOTONE_WINDOW = 4


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass
class CheckResult:
    """
    Outcome of one check.

    Attributes
    ----------
    name : str
        Check identifier.
    verdict : Verdict
        pass, fail or inconclusive.
    reason : str
        Short human-readable justification.
    diagnostics : list of (float, float)
        Pairs such as (q_m, ratio) that the verdict was read from.
    exponent : float or None
        Fitted log-log slope of the diagnostic ratio, when one was fitted.
    """

    name: str
    verdict: Verdict
    reason: str = ""
    diagnostics: list[tuple[float, float]] = field(default_factory=list)
    exponent: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"verdict": self.verdict.value, "reason": self.reason}
        if self.exponent is not None:
            out["exponent"] = self.exponent
        if self.diagnostics:
            out["diagnostics"] = [[a, b] for a, b in self.diagnostics]
        return out


@dataclass
class AuditReport:
    """Verdicts keyed by check name."""

    checks: dict[str, CheckResult] = field(default_factory=dict)

    def add(self, result: CheckResult) -> None:
        self.checks[result.name] = result

    def __getitem__(self, name: str) -> CheckResult:
        return self.checks[name]

    @property
    def failed(self) -> bool:
        return any(c.verdict is Verdict.FAIL for c in self.checks.values())

    @property
    def passed(self) -> bool:
        return all(c.verdict is Verdict.PASS for c in self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {name: check.to_dict() for name, check in self.checks.items()}


def check_lambda_condition(
    spec: LambdaSpec, k_max: int = 64, n_max: int = 1024
) -> CheckResult:
    """
    Growth condition λ_{nk} <= A k^{1/2-δ} λ_n for λ_n = n^β.

    The verdict is analytic (β <= 1/2 - δ); a sweep over powers of two up to
    ``n_max`` and ``k_max`` is recorded alongside.
    """
    analytic = spec.beta <= 0.5 - spec.delta + 1e-12
    ns = [2**j for j in range(1, int(math.log2(n_max)) + 1)]
    ks = [2**j for j in range(1, int(math.log2(k_max)) + 1)]
    worst = max(
        spec.lambda_n(n * k) / (spec.A * k ** (0.5 - spec.delta) * spec.lambda_n(n))
        for n in ns
        for k in ks
    )
    numeric = worst <= 1.0 + 1e-12
    if numeric != analytic:
        logger.warning(
            "growth condition sweep (max ratio %.6g) disagrees with the exponent test",
            worst,
        )
    verdict = Verdict.PASS if analytic else Verdict.FAIL
    reason = (
        f"beta={spec.beta:g} {'<=' if analytic else '>'} 1/2 - delta="
        f"{0.5 - spec.delta:g}; sweep max ratio {worst:.6g}"
    )
    return CheckResult("lambda_condition", verdict, reason, [(float(k_max), worst)])


def _fit_exponent(points: Sequence[tuple[float, float]]) -> float:
    log_q = np.log([q for q, _ in points])
    log_r = np.log([r for _, r in points])
    slope, _ = np.polyfit(log_q, log_r, 1)
    return float(slope)


def _ratio_check(
    name: str,
    q_grid: Sequence[float],
    ratio: Callable[[float], float],
    threshold: float,
) -> CheckResult:
    """
    Decide ratio(q_m) = o(1) along a decreasing grid.

    The exponent is fitted over the last grid points only, the same window on
    which the ratio must decrease strictly. Pass needs both; an exponent at or
    below ``threshold`` fails however fast the ratio fell at the coarse levels.
    """
    try:
        points = [(q, ratio(q)) for q in q_grid]
    except NumericalError as exc:
        return CheckResult(name, Verdict.INCONCLUSIVE, f"numeric failure: {exc}")
    if any(not (r > 0.0 and math.isfinite(r)) for _, r in points):
        return CheckResult(
            name, Verdict.INCONCLUSIVE, "ratio not positive and finite", points
        )
    window = points[-MONOTONE_WINDOW:]
    exponent = _fit_exponent(window)
    tail = [r for _, r in window]
    monotone = all(b < a for a, b in zip(tail, tail[1:]))
    if exponent > threshold and monotone:
        verdict, reason = Verdict.PASS, f"ratio decays like q^{exponent:.4g}"
    elif exponent <= threshold:
        verdict = Verdict.FAIL
        reason = f"ratio does not decay (exponent {exponent:.4g})"
    else:
        verdict = Verdict.INCONCLUSIVE
        reason = "ratio not monotone over the last points"
    return CheckResult(name, verdict, reason, points, exponent)


def _moment_check(
    name: str, analytic: bool | None, numeric: Callable[[], float], what: str
) -> CheckResult:
    if analytic is not None:
        verdict = Verdict.PASS if analytic else Verdict.FAIL
        state = "finite" if analytic else "infinite"
        return CheckResult(name, verdict, f"{what} is {state} (analytic)")
    try:
        value = numeric()
    except NumericalError as exc:
        return CheckResult(name, Verdict.INCONCLUSIVE, f"{what}: {exc}")
    return CheckResult(name, Verdict.PASS, f"{what} = {value:.6g} (quadrature)")


def _validate_grid(q_grid: Sequence[float]) -> list[float]:
    grid = [float(q) for q in q_grid]
    if len(grid) < MONOTONE_WINDOW:
        raise DomainError(f"q_grid needs at least {MONOTONE_WINDOW} points")
    if any(not 0.0 < q < 1.0 for q in grid) or any(
        b >= a for a, b in zip(grid, grid[1:])
    ):
        raise DomainError("q_grid must be strictly decreasing inside (0, 1)")
    return grid


def check_A1_A4(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    *,
    slope_threshold: float = DEFAULT_SLOPE_THRESHOLD,
) -> AuditReport:
    """
    Check the four moment and density-ratio assumptions along ``q_grid``.

    A1: E_μ[X²] < ∞.
    A2: q_m² / f(T⁻¹(q_m)) → 0.
    A3: E_ν[(X w(X))²] < ∞.
    A4: q_m² E_ν[w² I{X > T⁻¹(q_m)}] / f(T⁻¹(q_m))² → 0.

    The report also carries a ``continuity`` check asserting T(T⁻¹(q_m)) = q_m.
    """
    grid = _validate_grid(q_grid)
    report = AuditReport()

    gaps = [(q, abs(float(mu.tail(mu.quantile(q))) - q)) for q in grid]
    worst = max(g for _, g in gaps)
    report.add(
        CheckResult(
            "continuity",
            Verdict.PASS if worst <= 1e-12 else Verdict.FAIL,
            f"max |T(T⁻¹(q)) - q| = {worst:.3g}",
            gaps,
        )
    )

    report.add(
        _moment_check(
            "A1",
            mu.moment_finite(2.0),
            lambda: expect(mu, lambda x: x * x),
            "E_μ[X²]",
        )
    )

    def a2(q: float) -> float:
        _, f = quantile_with_density(mu, q)
        return q * q / f

    report.add(_ratio_check("A2", grid, a2, slope_threshold))

    report.add(
        _moment_check(
            "A3",
            scheme.weighted_moment_finite(2.0),
            lambda: expect(mu, lambda x: x * x * scheme.weight(x)),
            "E_ν[(X w)²]",
        )
    )

    def a4(q: float) -> float:
        b, f = quantile_with_density(mu, q)
        second = q if scheme.is_unit else tail_second_moment(mu, scheme, b)
        return q * q * second / (f * f)

    report.add(_ratio_check("A4", grid, a4, slope_threshold))
    for name in ("A1", "A2", "A3", "A4"):
        check = report[name]
        logger.info("%s: %s (%s)", name, check.verdict.value, check.reason)
    return report


# Tail levels of ν at which the exponential moment is truncated.
_TRUNCATION_LEVELS = (1e-2, 1e-4, 1e-6, 1e-8)


def _truncated_exp_moments(
    scheme: SamplingScheme, alpha: float
) -> list[tuple[float, float]]:
    """E_ν[exp(αw) I{X <= x_k}] on a growing grid of truncation points x_k."""
    nu = scheme.sampler

    def integrand(x: float) -> float:
        try:
            return math.exp(alpha * scheme.weight(x))
        except OverflowError:
            return math.inf

    sweep = []
    for level in _TRUNCATION_LEVELS:
        upper = float(nu.isf(level))
        try:
            value = expect(nu, integrand, upper=upper)
        except NumericalError:
            value = math.inf
        sweep.append((upper, value))
    return sweep


def check_scheme_feasibility(scheme: SamplingScheme, alpha: float = 1.0) -> CheckResult:
    """
    Decide whether the scheme satisfies a moderate deviation hypothesis.

    Bounded weights pass outright. Otherwise an analytically certified finite
    exponential moment passes, a certified infinite one fails, and anything else is
    inconclusive with the truncated values of E_ν[exp(αw)] attached.
    """
    if scheme.weight_bound is not None:
        return CheckResult(
            "scheme_feasibility",
            Verdict.PASS,
            f"bounded route: sup w = {scheme.weight_bound:.9g}",
        )
    sweep = _truncated_exp_moments(scheme, alpha)
    if scheme.exp_moments_certified:
        if scheme.exp_moments_finite:
            return CheckResult(
                "scheme_feasibility",
                Verdict.PASS,
                "exponential-moment route: E_ν[exp(αw)] finite (analytic)",
                sweep,
            )
        return CheckResult(
            "scheme_feasibility",
            Verdict.FAIL,
            "w is unbounded and E_ν[exp(αw)] diverges for every α > 0",
            sweep,
        )
    return CheckResult(
        "scheme_feasibility",
        Verdict.INCONCLUSIVE,
        "no analytic criterion; relaxed moment route not implemented",
        sweep,
    )


@dataclass
class KaramataDiagnostic:
    """
    The ratios x f(x) / T(x) on a grid and the index they settle on.

    ``index`` is None when the ratio keeps drifting (tail not regularly varying).
    """

    ratios: list[tuple[float, float]]
    index: float | None
    verdict: Verdict
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "index": self.index,
            "reason": self.reason,
            "ratios": [[x, r] for x, r in self.ratios],
        }


def karamata_diagnostic(
    mu: AnalyticDistribution,
    x_grid: Sequence[float],
    *,
    window: int = MONOTONE_WINDOW,
    slope_threshold: float = DEFAULT_SLOPE_THRESHOLD,
) -> KaramataDiagnostic:
    """
    Estimate the regular-variation index from x f(x) / T(x) → α.

    The ratio is taken as settled when its log-log slope over the last ``window``
    grid points is below ``slope_threshold`` in absolute value; the index is then
    the mean ratio over those points.
    """
    grid = [float(x) for x in x_grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("x_grid must be strictly increasing with two or more points")
    tails = [float(mu.tail(x)) for x in grid]
    if any(t <= 0.0 for t in tails):
        return KaramataDiagnostic([], None, Verdict.INCONCLUSIVE, "tail underflows")
    ratios = [(x, x * float(mu.density(x)) / t) for x, t in zip(grid, tails)]
    last = ratios[-window:]
    if any(r <= 0.0 for _, r in last):
        return KaramataDiagnostic(
            ratios, None, Verdict.INCONCLUSIVE, "density vanishes on the grid"
        )
    slope = _fit_exponent(last) if len(last) > 1 else 0.0
    if abs(slope) < slope_threshold:
        index = float(np.mean([r for _, r in last]))
        return KaramataDiagnostic(
            ratios, index, Verdict.PASS, f"ratio settles at {index:.9g}"
        )
    return KaramataDiagnostic(
        ratios,
        None,
        Verdict.FAIL,
        f"ratio drifts like x^{slope:.3g}; tail is not regularly varying",
    )


def regular_variation_ratio(
    mu: AnalyticDistribution, x: float, t: float = 2.0
) -> float:
    """T(t x) / T(x), which tends to t^{-α} for a regularly varying tail."""
    base = float(mu.tail(x))
    if base <= 0.0:
        raise DomainError(f"tail of {mu.describe()} underflows at x={x:g}")
    return float(mu.tail(t * x)) / base


def run_audit(
    mu: AnalyticDistribution,
    scheme: SamplingScheme,
    *,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    speed: LambdaSpec | None = None,
    slope_threshold: float = DEFAULT_SLOPE_THRESHOLD,
) -> AuditReport:
    """The full audit: growth condition, scheme feasibility and A1-A4."""
    report = AuditReport()
    report.add(check_lambda_condition(speed or LambdaSpec()))
    report.add(check_scheme_feasibility(scheme))
    for check in check_A1_A4(
        mu, scheme, q_grid, slope_threshold=slope_threshold
    ).checks.values():
        report.add(check)
    return report
