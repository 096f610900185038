"""
The weighted empirical measure ν_n^w = (1/n) Σ w(Xᵢ) δ_{Xᵢ} and its estimators.

Every estimator is computed exactly from the sorted atoms: tails by suffix sums,
quantiles by a search on the step levels, and quantile integrals by a sweep over
the intervals on which the empirical quantile is constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from ismdp.core.distributions import AnalyticDistribution, FloatArray
from ismdp.core.schemes import SamplingScheme
from ismdp.exceptions import DomainError, MassDeficiencyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepTail:
    """
    The right-continuous step function T_n^w.

    Attributes
    ----------
    breakpoints : np.ndarray
        Atom values, strictly increasing.
    levels : np.ndarray
        T_n^w at each breakpoint; non-increasing and ending at 0.
    total_mass : float
        Level before the first breakpoint.
    """

    breakpoints: FloatArray
    levels: FloatArray
    total_mass: float


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """
    Atoms of ν_n^w sorted by value, with equal values merged by summing weights.

    Attributes
    ----------
    values : np.ndarray
        Strictly increasing atom locations.
    weights : np.ndarray
        Non-negative atom weights.
    n : int
        Number of original draws.
    sum_squared_weights : float
        Σ w(Xᵢ)² over the original draws, for the effective sample size.
    """

    values: FloatArray
    weights: FloatArray
    n: int
    sum_squared_weights: float

    @classmethod
    def from_atoms(
        cls,
        values: ArrayLike,
        weights: ArrayLike,
        n: int | None = None,
    ) -> "WeightedSample":
        """Sort and merge raw ``(value, weight)`` pairs."""
        raw_values = np.asarray(values, dtype=float).ravel()
        raw_weights = np.asarray(weights, dtype=float).ravel()
        if raw_values.size == 0:
            raise DomainError("a weighted sample needs at least one draw")
        if raw_values.shape != raw_weights.shape:
            raise DomainError("values and weights must have the same length")
        if np.any(raw_weights < 0) or not np.all(np.isfinite(raw_weights)):
            raise DomainError("weights must be finite and non-negative")
        unique, inverse = np.unique(raw_values, return_inverse=True)
        merged = np.bincount(inverse, weights=raw_weights, minlength=unique.size)
        return cls(
            values=unique,
            weights=merged,
            n=raw_values.size if n is None else int(n),
            sum_squared_weights=float(np.dot(raw_weights, raw_weights)),
        )

    @cached_property
    def _suffix(self) -> FloatArray:
        # _suffix[i] = (1/n) Σ_{j >= i} w_j, with a trailing zero.
        tail_sums = np.cumsum(self.weights[::-1])[::-1]
        return np.concatenate([tail_sums, [0.0]]) / self.n

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))

    @property
    def total_mass(self) -> float:
        return float(self._suffix[0])

    @property
    def step_tail(self) -> StepTail:
        return StepTail(self.values, self._suffix[1:], self.total_mass)

    @property
    def effective_sample_size(self) -> float:
        total = float(self.weights.sum())
        if self.sum_squared_weights == 0.0:
            return 0.0
        return total * total / self.sum_squared_weights

    @property
    def max_weight(self) -> float:
        return float(self.weights.max())

    def __len__(self) -> int:
        return int(self.values.size)


class QuantileEstimate(NamedTuple):
    """Empirical quantile with the mass-deficiency flag."""

    value: float
    mass_deficient: bool


def build_weighted_sample(values: ArrayLike, scheme: SamplingScheme) -> WeightedSample:
    """
    Weight draws from ν by w = dμ/dν and collect them into ν_n^w.

    Raises
    ------
    DomainError
        If ``values`` is empty.
    """
    draws = np.asarray(values, dtype=float).ravel()
    if draws.size == 0:
        raise DomainError("cannot build a weighted sample from no draws")
    weights = np.asarray(scheme.weight(draws), dtype=float)
    if scheme.weight_bound is not None and draws.size:
        # Allow for rounding in the log-density difference.
        limit = scheme.weight_bound * (1.0 + 1e-12)
        if float(weights.max()) > limit:
            raise AssertionError(
                f"weight {weights.max()} exceeds the analytic bound "
                f"{scheme.weight_bound}"
            )
    return WeightedSample.from_atoms(draws, weights)


def empirical_tail(ws: WeightedSample, t: ArrayLike) -> Any:
    """T_n^w(t) = (1/n) Σ wᵢ 1{xᵢ > t}; may exceed 1."""
    idx = np.searchsorted(ws.values, np.asarray(t, dtype=float), side="right")
    out = ws._suffix[idx]
    return float(out) if np.ndim(t) == 0 else out


def empirical_quantile(ws: WeightedSample, p: float) -> QuantileEstimate:
    """
    inf{t : T_n^w(t) <= p}, exactly on the step function.

    When ``p >= total_mass`` the infimum is -∞; the smallest atom is returned with
    the mass-deficient flag set.
    """
    if not p > 0.0:
        raise DomainError(f"quantile level must be positive, got {p}")
    if p >= ws.total_mass:
        return QuantileEstimate(float(ws.values[0]), True)
    levels = ws._suffix[1:]
    # levels are non-increasing: the first index with level <= p.
    idx = int(np.searchsorted(-levels, -p, side="left"))
    return QuantileEstimate(float(ws.values[idx]), False)


def quantile_integral(ws: WeightedSample, lower: float, upper: float) -> float:
    """
    ∫_lower^upper (T_n^w)⁻¹(u) du, exact.

    Above the total mass the quantile is taken to be the smallest atom.
    """
    if lower > upper:
        raise DomainError(f"empty integration range [{lower}, {upper}]")
    levels = ws._suffix[1:]
    # The quantile equals values[i] on [levels[i], levels[i-1]).
    upper_ends = np.concatenate([[math.inf], levels[:-1]])
    overlap = np.minimum(upper_ends, upper) - np.maximum(levels, lower)
    return float(np.dot(ws.values, np.clip(overlap, 0.0, None)))


def expected_shortfall(ws: WeightedSample, p: float) -> float:
    """
    γ_p((T_n^w)⁻¹) = (1/p) ∫₀^p (T_n^w)⁻¹(u) du.

    Raises
    ------
    MassDeficiencyError
        If ``p >= total_mass``.
    """
    if not p > 0.0:
        raise DomainError(f"level must be positive, got {p}")
    if p >= ws.total_mass:
        raise MassDeficiencyError(
            f"level {p} is not below the weighted total mass {ws.total_mass:.6g}"
        )
    return quantile_integral(ws, 0.0, p) / p


def truncated_expected_shortfall(ws: WeightedSample, q: float, p: float) -> float:
    """γ_{q,p}((T_n^w)⁻¹) = (1/p) ∫_q^p (T_n^w)⁻¹(u) du."""
    if not 0.0 < q < p:
        raise DomainError(f"truncation requires 0 < q < p, got q={q}, p={p}")
    return quantile_integral(ws, q, p) / p


def integrated_tail(ws: WeightedSample, b: float) -> float:
    """∫_b^∞ T_n^w(x) dx = (1/n) Σ wᵢ (xᵢ - b)⁺."""
    excess = np.clip(ws.values - b, 0.0, None)
    return float(np.dot(ws.weights, excess)) / ws.n


def deviation_process(
    ws: WeightedSample,
    model: AnalyticDistribution,
    grid: ArrayLike,
    b_n: float,
) -> FloatArray:
    """b_n (T_n^w(t) - T(t)) for each t in the sorted ``grid``."""
    points = np.asarray(grid, dtype=float)
    if np.any(np.diff(points) < 0):
        raise DomainError("deviation grid must be sorted")
    empirical = np.asarray(empirical_tail(ws, points))
    return b_n * (empirical - np.asarray(model.tail(points)))


def dump_weighted_sample(ws: WeightedSample, path: str | Path) -> None:
    """
    Write the atoms as ``value,weight`` rows under a ``# n=<count>`` header line.

    Floats are written with 17 significant digits so reloading is bit-exact.
    """
    frame = pd.DataFrame({"value": ws.values, "weight": ws.weights})
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# n={ws.n}\n")
        frame.to_csv(handle, index=False, float_format="%.17g")


def load_weighted_sample(path: str | Path) -> WeightedSample:
    """Read a file written by :func:`dump_weighted_sample`."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().strip()
        if not header.startswith("# n="):
            raise DomainError(f"{path}: missing '# n=' header line")
        n = int(header[len("# n="):])
        frame = pd.read_csv(handle, float_precision="round_trip")
    if list(frame.columns) != ["value", "weight"]:
        raise DomainError(f"{path}: expected columns value,weight")
    return WeightedSample.from_atoms(
        frame["value"].to_numpy(float), frame["weight"].to_numpy(float), n=n
    )
