"""Abstract interface for k-point correlation providers.

A reference (pure) model enters the chaos expansion only through its
correlation functions psi^{(k)}. Discrete providers expose them as a start
state plus a propagator between occupied times, which is how both the
renewal and the random-walk correlations factorize; continuum providers
expose the gap kernel of the limiting correlations.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from enum import Enum
from typing import Sequence

import numpy as np


class CoefficientSource(str, Enum):
    PINNING = "pinning"
    POLYMER = "polymer"
    PINNING_CONTINUUM = "pinning-continuum"
    FINITE_MEAN = "finite-mean"


class ChaosCoefficients(ABC):
    """k-point correlations psi^{(k)} of a reference field."""

    source: CoefficientSource
    k_max: int | None = None

    @abstractmethod
    def psi(self, points: Sequence) -> float:
        """psi^{(k)} at arbitrary points; symmetric, zero on coinciding points."""
        ...


class DiscreteCoefficients(ChaosCoefficients):
    """Correlations on a lattice of times 1..N, factorized along increasing times."""

    N: int

    @abstractmethod
    def start(self, n: int) -> np.ndarray:
        """State of a chain whose first occupied time is n (before eta weights)."""
        ...

    @abstractmethod
    def propagate(self, state: np.ndarray, n: int, n_next: int) -> np.ndarray:
        """Carry a chain state from occupied time n to occupied time n_next > n."""
        ...

    def layer_eta(self, eta_values, n: int) -> np.ndarray | float:
        """The eta weights of the sites at time n, shaped like a state."""
        return eta_values[n - 1]


class ContinuumCoefficients(ChaosCoefficients):
    """Continuum kernels psi-bar(t_1..t_k) = prod_i g(t_i - t_{i-1}), t_0 = 0."""

    @abstractmethod
    def gap_kernel(self, s: np.ndarray | float) -> np.ndarray | float:
        ...

    @property
    @abstractmethod
    def gamma(self) -> float:
        """Power-law decay exponent of the one-point function."""
        ...
