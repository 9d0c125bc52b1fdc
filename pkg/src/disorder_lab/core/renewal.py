"""Heavy-tailed renewal processes.

A law is tabulated as K(n) = L(n) n^{-(1+alpha)} / Z for n = 1..N_max, with
the normalization Z = sum_{n>=1} L(n) n^{-(1+alpha)} evaluated analytically
(Hurwitz zeta for L = 1, partial sum plus an Euler-Maclaurin tail otherwise).
The mass left beyond N_max is kept as ``tail_mass`` so survival
probabilities stay exact on the table.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.signal import fftconvolve

from disorder_lab.errors import DomainError
from disorder_lab.models import RenewalSpec, SlowlyVarying
from disorder_lab.utils.seeding import Seed, generator

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 2 ** 16     # largest N for the O(N^2) renewal convolution
_TAIL_CUT = 10_000         # explicit summation range before the Euler-Maclaurin tail


@dataclass(frozen=True, eq=False)
class RenewalLaw:
    alpha: float
    slowly_varying: SlowlyVarying
    kappa: float
    N_max: int
    pmf: np.ndarray = field(repr=False)      # pmf[n] = K(n), pmf[0] = 0
    normalization: float
    tail_mass: float                         # sum_{n > N_max} K(n)
    mean_interarrival: float                 # math.inf when infinite
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def spec(self) -> RenewalSpec:
        return RenewalSpec(alpha=self.alpha, L=self.slowly_varying, kappa=self.kappa, N_max=self.N_max)

    @classmethod
    def deterministic(cls, N_max: int) -> "RenewalLaw":
        """The period-1 renewal: every integer is a renewal point."""
        pmf = np.zeros(N_max + 1)
        pmf[1] = 1.0
        pmf.flags.writeable = False
        return cls(math.inf, SlowlyVarying.CONSTANT, 0.0, N_max, pmf, 1.0, 0.0, 1.0)

    def L(self, n: np.ndarray | float) -> np.ndarray | float:
        return slowly_varying(n, self.slowly_varying, self.kappa)

    def effective_L(self, n: float) -> float:
        """L(n)/Z: the slowly varying factor of the normalized tail K(n) n^{1+alpha}."""
        if math.isinf(self.alpha):
            return 1.0
        return float(self.L(n)) / self.normalization

    def survival(self) -> np.ndarray:
        """S[n] = P(tau_1 > n) for n = 0..N_max."""
        rev = np.cumsum(self.pmf[::-1])[::-1]       # rev[n] = sum_{m >= n} K(m)
        out = np.empty(self.N_max + 1)
        out[:-1] = rev[1:] + self.tail_mass
        out[-1] = self.tail_mass
        return out


@dataclass(frozen=True)
class RenewalTrace:
    points: np.ndarray
    horizon: int


def slowly_varying(n, kind: SlowlyVarying, kappa: float = 0.0):
    if kind is SlowlyVarying.CONSTANT:
        return np.ones_like(n, dtype=float) if isinstance(n, np.ndarray) else 1.0
    return (1.0 + np.log(n)) ** kappa


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _em_tail(f, df, N: int) -> float:
    """sum_{n > N} f(n) by Euler-Maclaurin: int_N^inf f - f(N)/2 - f'(N)/12."""
    integral, _ = integrate.quad(f, N, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return integral - 0.5 * f(N) - df(N) / 12.0


def _power_sum(s: float, kind: SlowlyVarying, kappa: float) -> float:
    """sum_{n >= 1} L(n) n^{-s} for s > 1."""
    if kind is SlowlyVarying.CONSTANT:
        return float(special.zeta(s))
    n = np.arange(1, _TAIL_CUT + 1, dtype=float)
    head = math.fsum(slowly_varying(n, kind, kappa) * n ** (-s))

    def f(x):
        return (1.0 + math.log(x)) ** kappa * x ** (-s)

    def df(x):
        lg = 1.0 + math.log(x)
        return x ** (-s - 1) * lg ** (kappa - 1) * (kappa - s * lg)

    return head + _em_tail(f, df, _TAIL_CUT)


def _power_tail(s: float, kind: SlowlyVarying, kappa: float, N: int, head_norm: float) -> float:
    """sum_{n > N} L(n) n^{-s}."""
    if kind is SlowlyVarying.CONSTANT:
        return float(special.zeta(s, N + 1))
    n = np.arange(1, N + 1, dtype=float)
    return head_norm - math.fsum(slowly_varying(n, kind, kappa) * n ** (-s))


def build_renewal_law(
    alpha: float,
    slowly_varying_kind: SlowlyVarying | str = SlowlyVarying.CONSTANT,
    N_max: int = 4096,
    kappa: float = 0.0,
) -> RenewalLaw:
    """Tabulate K(n) = L(n) n^{-(1+alpha)}/Z on 1..N_max."""
    kind = SlowlyVarying(slowly_varying_kind)
    if not alpha > 0:
        raise DomainError(f"renewal exponent alpha must be > 0, got {alpha}")
    if N_max < 2:
        raise DomainError(f"N_max must be >= 2, got {N_max}")

    s = 1.0 + alpha
    Z = _power_sum(s, kind, kappa)
    n = np.arange(1, N_max + 1, dtype=float)
    pmf = np.zeros(N_max + 1)
    pmf[1:] = slowly_varying(n, kind, kappa) * n ** (-s) / Z
    tail = _power_tail(s, kind, kappa, N_max, Z) / Z
    pmf.flags.writeable = False

    mean = _power_sum(alpha, kind, kappa) / Z if alpha > 1 else math.inf
    logger.debug("renewal law alpha=%s L=%s: Z=%.15g tail=%.3e mean=%s", alpha, kind.value, Z, tail, mean)
    return RenewalLaw(alpha, kind, kappa, N_max, pmf, Z, max(tail, 0.0), mean)


def law_from_spec(spec: RenewalSpec) -> RenewalLaw:
    return build_renewal_law(spec.alpha, spec.L, spec.N_max, spec.kappa)


# ---------------------------------------------------------------------------
# Renewal mass function
# ---------------------------------------------------------------------------

def _direct_mass(K: np.ndarray, N: int) -> np.ndarray:
    u = np.zeros(N + 1)
    u[0] = 1.0
    for n in range(1, N + 1):
        u[n] = np.dot(K[1:n + 1], u[n - 1::-1])
    return u


def series_reciprocal(a: np.ndarray, N: int) -> np.ndarray:
    """First N+1 coefficients of 1/a(z), a[0] = 1, by Newton doubling with FFT products."""
    b = np.array([1.0 / a[0]])
    m = 1
    while m < N + 1:
        m = min(2 * m, N + 1)
        e = -fftconvolve(a[:m], b)[:m]
        e[0] += 2.0
        b = fftconvolve(b, e)[:m]
    return b


def renewal_mass(law: RenewalLaw, N: int, method: str = "auto") -> np.ndarray:
    """u(0..N) with u(0) = 1 and u(n) = sum_{m=1}^n K(m) u(n-m).

    Tables are computed once per law and shared read-only; smaller N reuse
    a prefix of the largest table computed so far.
    """
    if N > law.N_max:
        raise DomainError(f"N={N} exceeds the tabulated horizon N_max={law.N_max}")
    if method == "auto":
        method = "direct" if N <= DIRECT_LIMIT else "fft"
    with law._lock:
        cached = law._cache.get(("u", method))
        if cached is None or len(cached) < N + 1:
            logger.debug("renewal mass up to N=%d by %s recursion (alpha=%s)", N, method, law.alpha)
            if method == "direct":
                u = _direct_mass(law.pmf, N)
            elif method == "fft":
                a = -law.pmf[:N + 1].copy()
                a[0] = 1.0
                u = series_reciprocal(a, N)
            else:
                raise DomainError(f"unknown renewal mass method {method!r}")
            np.clip(u, 0.0, 1.0, out=u)
            u.flags.writeable = False
            law._cache[("u", method)] = u
            cached = u
    return cached[:N + 1]


def pinning_overlap(law: RenewalLaw, N: int) -> float:
    """R_N = E[|tau cap tau' cap [1, N]|] = sum_{n=1}^N u(n)^2."""
    u = renewal_mass(law, N)
    return math.fsum(u[1:] ** 2)


def overlap_masses(law: RenewalLaw, N: int) -> np.ndarray:
    """c(n) = u(n)^2 for n = 0..N, the mass function of tau cap tau'."""
    c = renewal_mass(law, N) ** 2
    c[0] = 0.0
    return c


def dichotomy_partial_sums(law: RenewalLaw, N: int) -> np.ndarray:
    """Partial sums of 1/(n L(n)^2), n = 1..N, deciding the alpha = 1/2 dichotomy."""
    n = np.arange(1, N + 1, dtype=float)
    return np.cumsum(1.0 / (n * np.asarray(law.L(n), dtype=float) ** 2))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _simulate(law: RenewalLaw, N: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Occupation matrix (count, N+1); column n is the indicator of n in tau."""
    cdf = np.cumsum(law.pmf[1:])
    occ = np.zeros((count, N + 1), dtype=bool)
    pos = np.zeros(count, dtype=np.int64)
    alive = np.ones(count, dtype=bool)
    rows = np.arange(count)
    while alive.any():
        draws = rng.random(count)
        gaps = np.searchsorted(cdf, draws, side="right") + 1
        # draws beyond the table fall past N_max >= N
        gaps[draws >= cdf[-1]] = N + 1
        pos = np.where(alive, pos + gaps, pos)
        alive &= pos <= N
        occ[rows[alive], pos[alive]] = True
    return occ


def sample_renewal(law: RenewalLaw, N: int, seed: Seed) -> RenewalTrace:
    """One renewal trace on [1, N]; deterministic given ``seed``."""
    if N > law.N_max:
        raise DomainError(f"N={N} exceeds the tabulated horizon N_max={law.N_max}")
    occ = _simulate(law, N, generator(seed), 1)[0]
    return RenewalTrace(np.flatnonzero(occ[1:]) + 1, N)


def sample_occupations(law: RenewalLaw, N: int, seed: Seed, count: int) -> np.ndarray:
    """``count`` independent traces as a boolean matrix indexed by n = 0..N."""
    if N > law.N_max:
        raise DomainError(f"N={N} exceeds the tabulated horizon N_max={law.N_max}")
    return _simulate(law, N, generator(seed), count)
