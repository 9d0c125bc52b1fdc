"""Correlations of the directed-polymer field sigma_{(n,x)} = 1{S_n = x}."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.signal import convolve

from disorder_lab.core.disorder import SpaceTimeSites
from disorder_lab.core.walk import WalkLaw, kernel_columns
from disorder_lab.errors import DomainError
from disorder_lab.references.base import CoefficientSource, DiscreteCoefficients

logger = logging.getLogger(__name__)


class WalkCoefficients(DiscreteCoefficients):
    """psi^{(k)}((n_1,x_1)..(n_k,x_k)) = prod_i q_{n_i - n_{i-1}}(x_i - x_{i-1}).

    States are arrays over the box |x_i| <= radius, where radius is the
    largest kernel window needed up to N; with ``tol`` at its default the
    kernels are exact to round-off.
    """

    source = CoefficientSource.POLYMER

    def __init__(self, walk: WalkLaw, N: int, tol: float = 1e-15, k_max: int | None = None):
        if N < 1:
            raise DomainError(f"horizon must be >= 1, got N={N}")
        self.walk = walk
        self.N = N
        self.k_max = k_max
        self.columns = list(kernel_columns(walk, N, tol))
        self.radius = max(col.radius for col in self.columns)
        logger.debug("walk coefficients up to N=%d on a box of radius %d", N, self.radius)
        self.dim = walk.dim
        self._kernels = [self._embed(col.values, col.radius) for col in self.columns]

    @property
    def sites(self) -> SpaceTimeSites:
        """The space-time box whose eta layers line up with the states."""
        return SpaceTimeSites.uniform(self.N, self.dim, self.radius)

    def _embed(self, values: np.ndarray, r: int) -> np.ndarray:
        out = np.zeros((2 * self.radius + 1,) * self.dim)
        lo, hi = self.radius - r, self.radius + r + 1
        out[(slice(lo, hi),) * self.dim] = values
        return out

    def q(self, m: int, dx: Sequence[int]) -> float:
        return self.columns[m - 1].q(*dx)

    def psi(self, points: Sequence[tuple]) -> float:
        pts = sorted((int(p[0]), tuple(int(v) for v in p[1:])) for p in points)
        times = [n for n, _ in pts]
        if len(set(times)) < len(times):
            return 0.0
        out, prev_n, prev_x = 1.0, 0, (0,) * self.dim
        for n, x in pts:
            if not 1 <= n <= self.N:
                raise DomainError(f"time index {n} outside 1..{self.N}")
            out *= self.q(n - prev_n, [a - b for a, b in zip(x, prev_x)])
            prev_n, prev_x = n, x
        return out

    def start(self, n: int) -> np.ndarray:
        return self._kernels[n - 1].copy()

    def propagate(self, state: np.ndarray, n: int, n_next: int) -> np.ndarray:
        return convolve(state, self._kernels[n_next - n - 1], mode="same")
