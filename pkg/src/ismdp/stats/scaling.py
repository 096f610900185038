"""The moderate deviation speed λ_n = n^β and the scale b_n = √n / λ_n."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ismdp.exceptions import DomainError


@dataclass(frozen=True)
class LambdaSpec:
    """
    Power-law speed sequence with the constants of its growth condition.

    Attributes
    ----------
    beta : float
        Exponent in (0, 1/2), so that λ_n → ∞ and λ_n = o(√n).
    A : float
        Growth constant, at least 1.
    delta : float
        Growth exponent in (0, 1).
    """

    beta: float = 0.25
    A: float = 1.0
    delta: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 0.5:
            raise DomainError(f"beta must lie in (0, 1/2), got {self.beta}")
        if not self.A >= 1.0:
            raise DomainError(f"A must be at least 1, got {self.A}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")

    def lambda_n(self, n: int) -> float:
        return float(n) ** self.beta

    def b_n(self, n: int) -> float:
        return math.sqrt(n) / self.lambda_n(n)
