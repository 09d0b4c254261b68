"""Small statistics helpers shared by the engine, calibration and tests."""

from __future__ import annotations

import numpy as np
from scipy import stats

Z95 = float(stats.norm.ppf(0.975))


def mean_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """Mean and two-sided normal-approximation CI, ignoring NaN.

    Returns NaNs when no finite values remain; a single value gives a
    zero-width interval.
    """
    x = np.asarray(values, float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return float("nan"), float("nan"), float("nan")
    m = float(x.mean())
    if len(x) == 1:
        return m, m, m
    z = float(stats.norm.ppf(0.5 + level / 2))
    half = z * float(x.std(ddof=1)) / np.sqrt(len(x))
    return m, m - half, m + half


def proportion_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return float("nan"), float("nan"), float("nan")
    z = float(stats.norm.ppf(0.5 + level / 2))
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * float(np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return float(p), lo, hi


def disjoint(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when two (lo, hi) intervals do not overlap."""
    return a[1] < b[0] or b[1] < a[0]
