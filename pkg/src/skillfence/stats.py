"""Stratified-sampling validity rate with confidence interval.

Two strata (instruction-level and code-level claims): per-stratum rates are
population-weighted, and the interval uses the standard stratified-sampling
variance. Values stay as exact fractions; rounding to display percentages
happens only at rendering time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyStratum


@dataclass(frozen=True)
class StratifiedSample:
    N_I: int
    N_C: int
    n_I: int
    n_C: int
    h_I: int
    h_C: int

    def __post_init__(self) -> None:
        for name in ("N_I", "N_C", "n_I", "n_C", "h_I", "h_C"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not (self.h_I <= self.n_I <= self.N_I):
            raise ValueError("instruction stratum violates 0 <= h <= n <= N")
        if not (self.h_C <= self.n_C <= self.N_C):
            raise ValueError("code stratum violates 0 <= h <= n <= N")


def compute_stratified_validity(s: StratifiedSample, z: float = 1.96) -> dict:
    """Population-weighted validity rate and z-interval, as fractions in [0, 1]."""
    if z <= 0:
        raise ValueError("z must be positive")
    total = s.N_I + s.N_C
    if total == 0:
        raise EmptyStratum("both strata are empty")
    terms = []
    p_hat = 0.0
    variance = 0.0
    for N, n, h in ((s.N_I, s.n_I, s.h_I), (s.N_C, s.n_C, s.h_C)):
        if N == 0:
            continue
        if n == 0:
            raise EmptyStratum("stratum with N > 0 has an empty sample")
        w = N / total
        p = h / n
        p_hat += w * p
        variance += (w * w) * (p * (1.0 - p)) / n
        terms.append((w, p))
    se = math.sqrt(variance)
    return {
        "p_hat": p_hat,
        "se": se,
        "ci_low": p_hat - z * se,
        "ci_high": p_hat + z * se,
    }


def as_percent(value: float) -> float:
    """Display rounding: percentage with two decimals."""
    return round(value * 100.0, 2)
