"""Adaptive quadrature against the parametric laws, built on QUADPACK."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy import integrate

from ismdp.core.distributions import AnalyticDistribution
from ismdp.exceptions import DivergentIntegralError, QuadratureError

logger = logging.getLogger(__name__)

# Tail probabilities at which a law's quantiles split the integration range.
_LANDMARK_LEVELS = (1.0 - 1e-9, 1.0 - 1e-4, 0.5, 1e-2, 1e-4, 1e-6, 1e-9, 1e-12)

# A result QUADPACK warned about is kept while its summed error estimate stays
# within max(_ACCEPTED_ABSERR, _ACCEPTED_RELERR * |integral|).
_ACCEPTED_ABSERR = 1e-12
_ACCEPTED_RELERR = 1e-9

# Beyond the deepest landmark an infinite upper tail is integrated in
# s = -log T(x) up to this depth; e^{-700} is still a normal double.
_MAX_TAIL_DEPTH = 700.0


@dataclass(frozen=True)
class Tolerance:
    """Absolute and relative targets handed to QUADPACK."""

    epsabs: float = 1e-14
    epsrel: float = 1e-12
    limit: int = 500


DEFAULT_TOLERANCE = Tolerance()


class _Piece(NamedTuple):
    value: float
    abserr: float
    warning: str | None


def _quad(
    func: Callable[[float], float], lower: float, upper: float, tol: Tolerance
) -> _Piece:
    result = integrate.quad(
        func,
        lower,
        upper,
        epsabs=tol.epsabs,
        epsrel=tol.epsrel,
        limit=tol.limit,
        full_output=1,
    )
    value, abserr = float(result[0]), float(result[1])
    if not math.isfinite(value):
        raise DivergentIntegralError(
            f"integral over [{lower:g}, {upper:g}] is not finite"
        )
    if len(result) > 3:
        message = str(result[3])
        if "divergent" in message:
            raise DivergentIntegralError(
                f"integral over [{lower:g}, {upper:g}] appears divergent: {message}"
            )
        return _Piece(value, abserr, message)
    return _Piece(value, abserr, None)


def _pieces(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    points: Iterable[float],
    tol: Tolerance,
) -> list[_Piece]:
    if upper <= lower:
        return []
    inner = sorted({float(p) for p in points if lower < p < upper and math.isfinite(p)})
    edges = [lower, *inner, upper]
    return [_quad(func, a, b, tol) for a, b in zip(edges[:-1], edges[1:])]


def _accept(pieces: list[_Piece], where: str) -> float:
    total = math.fsum(piece.value for piece in pieces)
    warnings = [piece.warning for piece in pieces if piece.warning is not None]
    if warnings:
        abserr = math.fsum(piece.abserr for piece in pieces)
        if abserr > max(_ACCEPTED_ABSERR, _ACCEPTED_RELERR * abs(total)):
            raise QuadratureError(
                f"quadrature over {where} stopped at error {abserr:.3g}: "
                f"{warnings[0]}"
            )
        logger.debug("accepted quadrature with warning (error %.3g)", abserr)
    return total


def integrate_piecewise(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    *,
    points: Iterable[float] = (),
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> float:
    """
    ∫ func(x) dx over [lower, upper], split at the given interior points.

    Infinite end points are handed to QUADPACK's infinite-range rules.
    """
    return _accept(
        _pieces(func, lower, upper, points, tol), f"[{lower:g}, {upper:g}]"
    )


def landmarks(model: AnalyticDistribution) -> list[float]:
    """Quantiles of ``model`` at fixed tail levels, used as split points."""
    return [float(x) for x in np.atleast_1d(model.isf(np.array(_LANDMARK_LEVELS)))]


def _tail_pieces(
    model: AnalyticDistribution,
    func: Callable[[float], float],
    cut: float,
    points: Iterable[float],
    tol: Tolerance,
) -> list[_Piece]:
    """
    ∫_{(cut, ∞)} func dmodel as ∫ func(T⁻¹(e^{-s})) e^{-s} ds over s > -log T(cut).

    The s-range stops at _MAX_TAIL_DEPTH; an integrand that has not decayed there
    is reported as divergent.
    """
    level = float(model.tail(cut))
    if not level > 0.0:
        return []
    start = -math.log(level)
    if start >= _MAX_TAIL_DEPTH:
        return []

    def integrand(s: float) -> float:
        u = math.exp(-s)
        return float(func(float(model.isf(u)))) * u

    splits = []
    for p in points:
        if p > cut and math.isfinite(p):
            t = float(model.tail(p))
            if t > 0.0:
                splits.append(-math.log(t))
    pieces = _pieces(integrand, start, _MAX_TAIL_DEPTH, splits, tol)
    edge = abs(integrand(_MAX_TAIL_DEPTH))
    total = abs(math.fsum(piece.value for piece in pieces))
    if not edge <= max(_ACCEPTED_ABSERR, _ACCEPTED_RELERR * total):
        raise DivergentIntegralError(
            f"integrand does not decay in the upper tail of {model.describe()} "
            f"(|f T| = {edge:.3g} at T = e^-{_MAX_TAIL_DEPTH:g})"
        )
    return pieces


def expect(
    model: AnalyticDistribution,
    func: Callable[[float], float],
    lower: float = -math.inf,
    upper: float = math.inf,
    *,
    points: Iterable[float] = (),
    tol: Tolerance = DEFAULT_TOLERANCE,
) -> float:
    """
    ∫_{(lower, upper]} func(x) model(dx).

    Parameters
    ----------
    model : AnalyticDistribution
        Law to integrate against; its density is folded into the integrand.
    func : Callable
        Scalar integrand.
    lower, upper : float
        Integration range; clipped to the support of ``model``.
    points : iterable of float
        Extra split points (discontinuities, other laws' landmarks).
    tol : Tolerance
        QUADPACK targets.

    Returns
    -------
    float
        The integral.

    Notes
    -----
    Beyond the deepest landmark an infinite upper tail is integrated in the
    variable s = -log T(x), where the integrand becomes func(T⁻¹(e^{-s})) e^{-s}.
    Warned QUADPACK results are kept while the summed error estimate stays
    within max(1e-12, 1e-9 |integral|).
    """
    support_lo, support_hi = model.support
    lo, hi = max(lower, support_lo), min(upper, support_hi)
    if hi <= lo:
        return 0.0

    def integrand(x: float) -> float:
        f = model.density(x)
        return 0.0 if f == 0.0 else float(func(x)) * f

    points = [*landmarks(model), *points]
    where = f"({lo:g}, {hi:g}] under {model.describe()}"
    if not math.isinf(hi):
        return _accept(_pieces(integrand, lo, hi, points, tol), where)
    cut = max(lo, float(model.isf(_LANDMARK_LEVELS[-1])))
    pieces = _pieces(integrand, lo, cut, points, tol)
    pieces += _tail_pieces(model, func, cut, points, tol)
    return _accept(pieces, where)
