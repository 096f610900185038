"""Estimation targets: estimator on ν_n^w, analytic truth under μ and MDP variance."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping

from ismdp.core.distributions import AnalyticDistribution
from ismdp.core.empirical import (
    WeightedSample,
    empirical_quantile,
    empirical_tail,
    quantile_integral,
)
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import ConfigError, DomainError
from ismdp.stats.rates import (
    quantile_variance,
    sigma_p_squared,
    sigma_qp_squared,
    tail_variance,
)


class TargetKind(str, Enum):
    TAIL = "tail"
    QUANTILE = "quantile"
    EXPECTED_SHORTFALL = "expected_shortfall"
    TRUNCATED_ES = "truncated_es"


@dataclass(frozen=True)
class Target:
    """
    A functional of μ estimated from ν_n^w.

    ``t`` is used by the tail target, ``p`` by the others, ``q`` by the truncated
    Expected Shortfall.
    """

    kind: TargetKind
    p: float | None = None
    q: float | None = None
    t: float | None = None

    def __post_init__(self) -> None:
        kind = TargetKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TargetKind.TAIL:
            if self.t is None:
                raise DomainError("the tail target needs a threshold t")
            return
        if self.p is None or not 0.0 < self.p < 1.0:
            raise DomainError(f"{kind.value} target needs a level p in (0, 1)")
        if kind is TargetKind.TRUNCATED_ES and (
            self.q is None or not 0.0 < self.q < self.p
        ):
            raise DomainError("truncated_es target needs 0 < q < p")

    @classmethod
    def from_mapping(cls, spec: Mapping[str, Any]) -> "Target":
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind not in TargetKind._value2member_map_:
            raise ConfigError(
                f"unknown target {kind!r}; expected one of "
                f"{[k.value for k in TargetKind]}"
            )
        unknown = set(spec) - {"p", "q", "t"}
        if unknown:
            raise ConfigError(f"unknown target keys {sorted(unknown)}")
        values: dict[str, float] = {}
        for key, value in spec.items():
            try:
                values[key] = float(value)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"target key {key!r} must be a number, got {value!r}"
                ) from None
        try:
            return cls(TargetKind(kind), **values)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def level(self) -> float:
        assert self.p is not None
        return self.p

    @property
    def truncation(self) -> float:
        assert self.q is not None
        return self.q

    @property
    def threshold(self) -> float:
        assert self.t is not None
        return self.t

    def describe(self) -> str:
        if self.kind is TargetKind.TAIL:
            return f"tail(t={self.t:g})"
        if self.kind is TargetKind.TRUNCATED_ES:
            return f"truncated_es(q={self.q:g},p={self.p:g})"
        return f"{self.kind.value}(p={self.p:g})"

    def estimate(self, ws: WeightedSample) -> tuple[float, bool]:
        """Point estimate and whether the sample was mass deficient at the level."""
        if self.kind is TargetKind.TAIL:
            return float(empirical_tail(ws, self.threshold)), False
        p = self.level
        if self.kind is TargetKind.QUANTILE:
            est = empirical_quantile(ws, p)
            return est.value, est.mass_deficient
        deficient = p >= ws.total_mass
        lower = 0.0
        if self.kind is TargetKind.TRUNCATED_ES:
            lower = self.truncation
        return quantile_integral(ws, lower, p) / p, deficient

    def truth(self, mu: AnalyticDistribution) -> float:
        """Analytic value under μ."""
        if self.kind is TargetKind.TAIL:
            return float(mu.tail(self.threshold))
        p = self.level
        if self.kind is TargetKind.QUANTILE:
            return float(mu.quantile(p))
        es = mu.expected_shortfall(p)
        if self.kind is TargetKind.EXPECTED_SHORTFALL:
            return es
        q = self.truncation
        return es - q * mu.expected_shortfall(q) / p

    def variance(self, mu: AnalyticDistribution, scheme: SamplingScheme) -> float:
        """Asymptotic variance governing the quadratic MDP rate of this target."""
        return VARIANCES[self.kind](mu, scheme, self)


def _tail(mu: AnalyticDistribution, scheme: SamplingScheme, target: Target) -> float:
    return tail_variance(mu, scheme, target.threshold)


def _quantile(
    mu: AnalyticDistribution, scheme: SamplingScheme, target: Target
) -> float:
    return quantile_variance(mu, scheme, target.level)


def _shortfall(
    mu: AnalyticDistribution, scheme: SamplingScheme, target: Target
) -> float:
    return sigma_p_squared(mu, scheme, target.level)


def _truncated(
    mu: AnalyticDistribution, scheme: SamplingScheme, target: Target
) -> float:
    return sigma_qp_squared(mu, scheme, target.truncation, target.level)


# target kind -> variance of the centred, sqrt(n)-scaled estimator
VARIANCES: dict[
    TargetKind, Callable[[AnalyticDistribution, SamplingScheme, Target], float]
] = {
    TargetKind.TAIL: _tail,
    TargetKind.QUANTILE: _quantile,
    TargetKind.EXPECTED_SHORTFALL: _shortfall,
    TargetKind.TRUNCATED_ES: _truncated,
}


def target_variance(
    mu: AnalyticDistribution, scheme: SamplingScheme, target: Target
) -> float:
    return target.variance(mu, scheme)
