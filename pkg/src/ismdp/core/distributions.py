"""Parametric laws for the nominal distribution μ and the sampling distribution ν."""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, ClassVar, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from ismdp.exceptions import ConfigError, DomainError, TruthUnavailableError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# Standardised bracket for the normal quantile; ndtr underflows to zero past 38.5.
_NORMAL_BRACKET = (-40.0, 40.0)
_BISECTION_TOL = 1e-12


def _pack(t: ArrayLike, out: FloatArray) -> Any:
    """Return a Python float for scalar input, the array otherwise."""
    return float(out) if np.ndim(t) == 0 else out


def _normal_isf(u: FloatArray) -> FloatArray:
    """Standard normal inverse survival function by bracketed bisection."""
    lo = np.full(u.shape, _NORMAL_BRACKET[0])
    hi = np.full(u.shape, _NORMAL_BRACKET[1])
    iterations = 0
    while np.any(hi - lo > _BISECTION_TOL):
        mid = 0.5 * (lo + hi)
        above = special.ndtr(-mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        iterations += 1
    logger.debug("normal quantile bisection converged in %d steps", iterations)
    return hi


class RandomStream:
    """
    A reproducible source of uniform variates.

    Identical ``(seed, stream_index)`` pairs reproduce identical draw sequences;
    distinct indices are spawned children of one ``numpy.random.SeedSequence``
    and hence independent. Each worker owns its own stream.

    Parameters
    ----------
    seed : int
        64-bit root seed.
    stream_index : int
        Non-negative index of the child stream.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if stream_index < 0:
            raise DomainError(f"stream_index must be non-negative, got {stream_index}")
        self.seed = seed
        self.stream_index = stream_index
        self._rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(stream_index,))
        )

    def uniforms(self, n: int) -> FloatArray:
        """Draw ``n`` uniforms strictly inside (0, 1)."""
        return (self._rng.integers(0, 2**53, size=n) + 0.5) * 2.0**-53

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, stream_index={self.stream_index})"


@dataclass(frozen=True)
class AnalyticDistribution(ABC):
    """
    A univariate law with closed-form tail T = 1 - F, density f and quantile T⁻¹.

    Subclasses are immutable and safe to share between threads and processes.
    """

    family: ClassVar[str]

    @property
    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Closure of the support as ``(lower, upper)``."""

    @abstractmethod
    def _tail(self, t: FloatArray) -> FloatArray: ...

    @abstractmethod
    def _log_density(self, t: FloatArray) -> FloatArray: ...

    @abstractmethod
    def _isf(self, u: FloatArray) -> FloatArray: ...

    @abstractmethod
    def expected_shortfall(self, p: float) -> float:
        """Closed-form (1/p)∫₀^p T⁻¹(u)du."""

    def moment_finite(self, k: float) -> bool:
        """Whether E|X|^k is finite."""
        return True

    @property
    def tail_index(self) -> float | None:
        """Regular-variation index α of the tail, or None if not regularly varying."""
        return None

    def tail(self, t: ArrayLike) -> Any:
        """T(t) = μ(X > t), exact per family."""
        return _pack(t, self._tail(np.asarray(t, dtype=float)))

    def log_density(self, t: ArrayLike) -> Any:
        """log f(t); ``-inf`` off the support."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return _pack(t, self._log_density(np.asarray(t, dtype=float)))

    def density(self, t: ArrayLike) -> Any:
        """f(t); zero off the support."""
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(self._log_density(np.asarray(t, dtype=float)))
        return _pack(t, out)

    def isf(self, u: ArrayLike) -> Any:
        """T⁻¹(u) without domain checks, for internal use on (0, 1)."""
        with np.errstate(divide="ignore"):
            return _pack(u, self._isf(np.asarray(u, dtype=float)))

    def quantile(self, p: ArrayLike) -> Any:
        """
        Right-continuous inverse of the tail, T⁻¹(p) = inf{u : T(u) <= p}.

        Raises
        ------
        DomainError
            If any p lies outside (0, 1).
        """
        arr = np.asarray(p, dtype=float)
        if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
            raise DomainError(f"quantile level must lie in (0, 1), got {p}")
        return self.isf(p)

    def sample(self, stream: RandomStream, n: int) -> FloatArray:
        """Draw ``n`` i.i.d. values by inverse transform of the stream's uniforms."""
        if n < 1:
            raise DomainError(f"sample size must be at least 1, got {n}")
        return np.asarray(self.isf(stream.uniforms(n)), dtype=float)

    def params(self) -> dict[str, float]:
        return asdict(self)

    def describe(self) -> str:
        inner = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.family}({inner})"

    def contains_support_of(self, other: "AnalyticDistribution") -> bool:
        lo, hi = self.support
        other_lo, other_hi = other.support
        return lo <= other_lo and other_hi <= hi


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive and finite, got {value}")


def _check_level(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {p}")


@dataclass(frozen=True)
class Exponential(AnalyticDistribution):
    """Exponential law with tail e^{-rate·t} on [0, ∞)."""

    family: ClassVar[str] = "exponential"
    rate: float = 1.0

    def __post_init__(self) -> None:
        _require_positive(rate=self.rate)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def _tail(self, t: FloatArray) -> FloatArray:
        return np.where(t <= 0.0, 1.0, np.exp(-self.rate * np.maximum(t, 0.0)))

    def _log_density(self, t: FloatArray) -> FloatArray:
        return np.where(t >= 0.0, math.log(self.rate) - self.rate * t, -np.inf)

    def _isf(self, u: FloatArray) -> FloatArray:
        return -np.log(u) / self.rate

    def expected_shortfall(self, p: float) -> float:
        _check_level(p)
        return (1.0 - math.log(p)) / self.rate


@dataclass(frozen=True)
class Pareto(AnalyticDistribution):
    """Pareto law with tail (scale/t)^alpha on [scale, ∞); regularly varying."""

    family: ClassVar[str] = "pareto"
    alpha: float = 3.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        _require_positive(alpha=self.alpha, scale=self.scale)

    @property
    def support(self) -> tuple[float, float]:
        return (self.scale, math.inf)

    @property
    def tail_index(self) -> float | None:
        return self.alpha

    def moment_finite(self, k: float) -> bool:
        return k < self.alpha

    def _tail(self, t: FloatArray) -> FloatArray:
        return np.where(
            t < self.scale, 1.0, (self.scale / np.maximum(t, self.scale)) ** self.alpha
        )

    def _log_density(self, t: FloatArray) -> FloatArray:
        safe = np.maximum(t, self.scale)
        value = (
            math.log(self.alpha)
            + self.alpha * math.log(self.scale)
            - (self.alpha + 1.0) * np.log(safe)
        )
        return np.where(t >= self.scale, value, -np.inf)

    def _isf(self, u: FloatArray) -> FloatArray:
        return self.scale * u ** (-1.0 / self.alpha)

    def expected_shortfall(self, p: float) -> float:
        _check_level(p)
        if self.alpha <= 1.0:
            raise TruthUnavailableError(
                f"Expected Shortfall is infinite for {self.describe()} (alpha <= 1)"
            )
        return self.scale * self.alpha / (self.alpha - 1.0) * p ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class Normal(AnalyticDistribution):
    """Gaussian law; quantiles by bracketed bisection on the tail."""

    family: ClassVar[str] = "normal"
    mean: float = 0.0
    stdev: float = 1.0

    def __post_init__(self) -> None:
        _require_positive(stdev=self.stdev)

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def _tail(self, t: FloatArray) -> FloatArray:
        return special.ndtr(-(t - self.mean) / self.stdev)

    def _log_density(self, t: FloatArray) -> FloatArray:
        z = (t - self.mean) / self.stdev
        return -0.5 * z * z - math.log(self.stdev) - 0.5 * math.log(2.0 * math.pi)

    def _isf(self, u: FloatArray) -> FloatArray:
        return self.mean + self.stdev * _normal_isf(np.atleast_1d(u)).reshape(u.shape)

    def expected_shortfall(self, p: float) -> float:
        _check_level(p)
        z = float(_normal_isf(np.array([p]))[0])
        phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return self.mean + self.stdev * phi / p


@dataclass(frozen=True)
class LogNormal(AnalyticDistribution):
    """Law of exp(Y) with Y ~ normal(logmean, logsd)."""

    family: ClassVar[str] = "lognormal"
    logmean: float = 0.0
    logsd: float = 1.0

    def __post_init__(self) -> None:
        _require_positive(logsd=self.logsd)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def _tail(self, t: FloatArray) -> FloatArray:
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(t, 0.0)) - self.logmean) / self.logsd
        return np.where(t <= 0.0, 1.0, special.ndtr(-z))

    def _log_density(self, t: FloatArray) -> FloatArray:
        safe = np.where(t > 0.0, t, 1.0)
        z = (np.log(safe) - self.logmean) / self.logsd
        value = (
            -0.5 * z * z
            - math.log(self.logsd)
            - 0.5 * math.log(2.0 * math.pi)
            - np.log(safe)
        )
        return np.where(t > 0.0, value, -np.inf)

    def _isf(self, u: FloatArray) -> FloatArray:
        z = _normal_isf(np.atleast_1d(u)).reshape(u.shape)
        return np.exp(self.logmean + self.logsd * z)

    def expected_shortfall(self, p: float) -> float:
        _check_level(p)
        z = float(_normal_isf(np.array([p]))[0])
        scale = math.exp(self.logmean + 0.5 * self.logsd**2)
        return scale * float(special.ndtr(self.logsd - z)) / p


# Centralized family registry
FAMILIES: dict[str, type[AnalyticDistribution]] = {
    "exponential": Exponential,
    "pareto": Pareto,
    "normal": Normal,
    "lognormal": LogNormal,
}


def family_parameters(family: str) -> tuple[str, ...]:
    """Names of the parameters a family accepts."""
    cls = FAMILIES[family]
    return tuple(f for f in cls.__dataclass_fields__ if f != "family")


def make_distribution(spec: Mapping[str, Any]) -> AnalyticDistribution:
    """
    Build a distribution from a mapping such as ``{"family": "pareto", "alpha": 3}``.

    Raises
    ------
    ConfigError
        If the family is unknown or the mapping carries unrecognised parameters.
    """
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in FAMILIES:
        raise ConfigError(
            f"unknown distribution family {family!r}; "
            f"expected one of {sorted(FAMILIES)}"
        )
    allowed = family_parameters(family)
    unknown = set(spec) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown parameters {sorted(unknown)} for family {family!r}; "
            f"expected {list(allowed)}"
        )
    try:
        return FAMILIES[family](**{k: float(v) for k, v in spec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {family!r}: {exc}") from exc


def tail(model: AnalyticDistribution, t: ArrayLike) -> Any:
    return model.tail(t)


def quantile(model: AnalyticDistribution, p: ArrayLike) -> Any:
    return model.quantile(p)


def density(model: AnalyticDistribution, t: ArrayLike) -> Any:
    return model.density(t)


def sample(model: AnalyticDistribution, stream: RandomStream, n: int) -> FloatArray:
    return model.sample(stream, n)


__all__ = [
    "AnalyticDistribution",
    "Exponential",
    "FAMILIES",
    "LogNormal",
    "Normal",
    "Pareto",
    "RandomStream",
    "density",
    "family_parameters",
    "make_distribution",
    "quantile",
    "sample",
    "tail",
]
