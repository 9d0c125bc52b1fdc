"""Streaming moments, Kolmogorov-Smirnov distances and normality summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps

from disorder_lab.errors import DomainError
from disorder_lab.models import MomentSummary

KS_CRITICAL_1PCT = 1.63


@dataclass(frozen=True)
class MomentAccumulator:
    """count, mean and central sums M2..M4; merges are exact up to round-off."""
    count: int = 0
    mean: float = 0.0
    M2: float = 0.0
    M3: float = 0.0
    M4: float = 0.0

    @classmethod
    def from_values(cls, values) -> "MomentAccumulator":
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mean = float(np.mean(x))
        d = x - mean
        d2 = d * d
        return cls(int(x.size), mean, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum()))

    def add(self, values) -> "MomentAccumulator":
        return self.merge(MomentAccumulator.from_values(values))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        mean = self.mean + nb * d_n
        M2 = self.M2 + other.M2 + delta * d_n * na * nb
        M3 = (
            self.M3 + other.M3
            + delta * d_n * d_n * na * nb * (na - nb)
            + 3.0 * d_n * (na * other.M2 - nb * self.M2)
        )
        M4 = (
            self.M4 + other.M4
            + delta * d_n ** 3 * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n * d_n * (na * na * other.M2 + nb * nb * self.M2)
            + 4.0 * d_n * (na * other.M3 - nb * self.M3)
        )
        return MomentAccumulator(n, mean, M2, M3, M4)

    __add__ = merge


def moment_summary(acc: MomentAccumulator) -> MomentSummary:
    """Mean, unbiased variance, standardized third and fourth moments, standard errors.

    Kurtosis is the raw standardized fourth moment (3 for a Gaussian).
    """
    n = acc.count
    if n < 4:
        raise DomainError(f"moment summary needs at least 4 values, got {n}")
    variance = acc.M2 / (n - 1)
    if acc.M2 <= 0.0:
        return MomentSummary(
            count=n, mean=acc.mean, variance=0.0, mean_stderr=0.0,
            variance_stderr=0.0, kurtosis_undefined=True,
        )
    m2, m4 = acc.M2 / n, acc.M4 / n
    skewness = math.sqrt(n) * acc.M3 / acc.M2 ** 1.5
    kurtosis = n * acc.M4 / (acc.M2 * acc.M2)
    var_of_var = max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n
    return MomentSummary(
        count=n,
        mean=acc.mean,
        variance=variance,
        skewness=skewness,
        kurtosis=kurtosis,
        mean_stderr=math.sqrt(variance / n),
        variance_stderr=math.sqrt(var_of_var),
    )


def ks_statistic(sample, reference) -> float:
    """sup-distance of the empirical CDF of ``sample`` to a CDF or to a second sample."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise DomainError(f"KS distance needs a sample of size >= 2, got {x.size}")
    if callable(reference):
        return float(sps.kstest(x, reference).statistic)
    y = np.asarray(reference, dtype=float).ravel()
    if y.size < 2:
        raise DomainError(f"KS distance needs a reference sample of size >= 2, got {y.size}")
    return float(sps.ks_2samp(x, y).statistic)


def ks_critical(n: int, m: int | None = None) -> float:
    """Asymptotic 1% critical value, one-sample or two-sample."""
    if m is None:
        return KS_CRITICAL_1PCT / math.sqrt(n)
    return KS_CRITICAL_1PCT * math.sqrt((n + m) / (n * m))


def normal_cdf(mean: float, variance: float) -> Callable:
    """CDF of Normal(mean, variance); a point mass when the variance is 0."""
    if variance <= 0.0:
        return lambda t: (np.asarray(t) >= mean).astype(float)
    return sps.norm(loc=mean, scale=math.sqrt(variance)).cdf
