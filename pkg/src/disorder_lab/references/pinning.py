"""Correlations of the renewal (pinning) field and of its continuum limit."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from disorder_lab.core.renewal import RenewalLaw, renewal_mass
from disorder_lab.errors import DomainError
from disorder_lab.references.base import (
    CoefficientSource,
    ContinuumCoefficients,
    DiscreteCoefficients,
)


def renewal_constant(alpha: float) -> float:
    """C_alpha = alpha sin(pi alpha) / pi."""
    return alpha * math.sin(math.pi * alpha) / math.pi


class RenewalCoefficients(DiscreteCoefficients):
    """psi^{(k)}(n_1..n_k) = P(n_1, .., n_k in tau) = prod_i u(n_i - n_{i-1}), n_0 = 0."""

    source = CoefficientSource.PINNING

    def __init__(self, law: RenewalLaw, N: int, k_max: int | None = None):
        if N < 1:
            raise DomainError(f"horizon must be >= 1, got N={N}")
        self.law = law
        self.N = N
        self.k_max = k_max
        self.u = renewal_mass(law, N)

    def psi(self, points: Sequence[int]) -> float:
        times = sorted(int(p) for p in points)
        if len(set(times)) < len(times):
            return 0.0
        if times and not (1 <= times[0] and times[-1] <= self.N):
            raise DomainError(f"times must lie in 1..{self.N}, got {times}")
        out, prev = 1.0, 0
        for n in times:
            out *= self.u[n - prev]
            prev = n
        return out

    def start(self, n: int) -> np.ndarray:
        return np.array([self.u[n]])

    def propagate(self, state: np.ndarray, n: int, n_next: int) -> np.ndarray:
        return state * self.u[n_next - n]


class AlphaContinuum(ContinuumCoefficients):
    """Continuum pinning kernel for alpha in (1/2, 1): g(s) = C_alpha s^{alpha - 1}."""

    source = CoefficientSource.PINNING_CONTINUUM

    def __init__(self, alpha: float, k_max: int | None = None):
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"continuum kernel needs alpha in (0, 1), got {alpha}")
        self.alpha = alpha
        self.k_max = k_max
        self.C = renewal_constant(alpha)

    @property
    def gamma(self) -> float:
        return 1.0 - self.alpha

    def gap_kernel(self, s):
        return self.C * np.power(s, self.alpha - 1.0)

    def psi(self, points: Sequence[float]) -> float:
        times = sorted(float(p) for p in points)
        gaps = np.diff([0.0] + times)
        if np.any(gaps <= 0.0):
            raise DomainError(f"continuum kernel is singular at coinciding times {times}")
        return float(np.prod(self.gap_kernel(gaps))) if times else 1.0


class FiniteMeanContinuum(ContinuumCoefficients):
    """Continuum kernel of a renewal with finite mean m: psi-bar^{(k)} = m^{-k}."""

    source = CoefficientSource.FINITE_MEAN

    def __init__(self, mean_interarrival: float, k_max: int | None = None):
        if not 0.0 < mean_interarrival < math.inf:
            raise DomainError(f"mean inter-arrival must be finite and positive, got {mean_interarrival}")
        self.m = float(mean_interarrival)
        self.k_max = k_max

    @property
    def gamma(self) -> float:
        return 0.0

    def gap_kernel(self, s):
        return np.full_like(np.asarray(s, dtype=float), 1.0 / self.m)

    def psi(self, points: Sequence[float]) -> float:
        return self.m ** (-len(points))


def continuum_from_law(law: RenewalLaw, k_max: int | None = None) -> ContinuumCoefficients:
    """The continuum kernel a tabulated renewal law rescales to."""
    if math.isfinite(law.mean_interarrival):
        return FiniteMeanContinuum(law.mean_interarrival, k_max)
    return AlphaContinuum(law.alpha, k_max)
