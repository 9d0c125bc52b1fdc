"""Lattice random walks, their n-step kernels q_n(x) and replica overlaps.

Simple symmetric walks use closed forms: q_n on Z is binomial, and the 2d
walk factorizes in the rotated coordinates u = x + y, v = x - y into two
independent 1d walks, q_n(x, y) = q1_n(x + y) q1_n(x - y). The discretized
stable walk is convolved step by step with FFT products and a trimmed
window. Overlaps use the Fourier representation
sum_x q_n(x)^2 = (1/2pi) int phi(theta)^{2n} d theta when N is large.
"""

from __future__ import annotations

import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from scipy.signal import fftconvolve

from disorder_lab.errors import DomainError, ResourceError
from disorder_lab.models import WalkFamily, WalkSpec
from disorder_lab.utils.seeding import Seed, generator

logger = logging.getLogger(__name__)

DEFAULT_X_MAX = 100_000
MAX_CELLS = 2 ** 24          # memory budget of one kernel column
KERNEL_OVERLAP_LIMIT = 4096  # largest N summed from explicit stable kernel columns
STABLE_CACHE_SIZE = 8        # stable kernel columns kept per walk, least recently used dropped first


@dataclass(frozen=True, eq=False)
class WalkLaw:
    family: WalkFamily
    dim: int
    period: int
    displacements: np.ndarray = field(repr=False)   # (m, dim) int
    probs: np.ndarray = field(repr=False)           # (m,)
    alpha: float = 2.0
    X_max: int = 1
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def spec(self) -> WalkSpec:
        if self.family is WalkFamily.STABLE_1D:
            return WalkSpec(family=self.family, alpha=self.alpha, X_max=self.X_max)
        return WalkSpec(family=self.family)

    @property
    def step_range(self) -> int:
        return int(np.abs(self.displacements).max())

    def step_column(self) -> np.ndarray:
        """Dense 1d step pmf indexed by x + X_max."""
        if self.dim != 1:
            raise DomainError("dense step column is defined for 1d walks only")
        col = np.zeros(2 * self.step_range + 1)
        col[self.displacements[:, 0] + self.step_range] = self.probs
        return col

    def characteristic(self, theta: np.ndarray) -> np.ndarray:
        """phi(theta) = sum_x p(x) cos(theta x) (real: the step law is symmetric)."""
        theta = np.asarray(theta, dtype=float)
        if self.family is WalkFamily.SSRW_1D:
            return np.cos(theta)
        if self.family is WalkFamily.SSRW_2D:
            raise DomainError("use the factorized 1d characteristic function for ssrw-2d")
        x = np.arange(1, self.X_max + 1, dtype=float)
        p = self.probs[self.X_max + 1:]
        out = np.empty(theta.shape)
        flat = theta.ravel()
        res = out.ravel()
        for start in range(0, flat.size, 32):
            chunk = flat[start:start + 32]
            res[start:start + chunk.size] = self.probs[self.X_max] + 2.0 * np.cos(np.outer(chunk, x)) @ p
        return res.reshape(theta.shape)


@dataclass(frozen=True)
class KernelColumn:
    """q_n on the window |x_i| <= radius; values are indexed by x + radius."""
    n: int
    radius: int
    values: np.ndarray
    truncation_mass: float

    def q(self, *x: int) -> float:
        idx = tuple(int(xi) + self.radius for xi in x)
        if any(i < 0 or i >= self.values.shape[0] for i in idx):
            return 0.0
        return float(self.values[idx])


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_walk(family: WalkFamily | str, alpha: float | None = None, X_max: int | None = None) -> WalkLaw:
    family = WalkFamily(family)
    if family is WalkFamily.SSRW_1D:
        disp = np.array([[-1], [1]])
        return WalkLaw(family, 1, 2, disp, np.array([0.5, 0.5]))
    if family is WalkFamily.SSRW_2D:
        disp = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
        return WalkLaw(family, 2, 2, disp, np.full(4, 0.25))
    if alpha is None or not 1.0 <= alpha <= 2.0:
        raise DomainError(f"stable-1d walks need alpha in [1, 2], got {alpha}")
    X_max = int(X_max or DEFAULT_X_MAX)
    x = np.arange(-X_max, X_max + 1)
    weights = (1.0 + x.astype(float) ** 2) ** (-(1.0 + alpha) / 2.0)
    probs = weights / math.fsum(weights)
    return WalkLaw(family, 1, 1, x[:, None], probs, alpha=alpha, X_max=X_max)


def walk_from_spec(spec: WalkSpec) -> WalkLaw:
    return build_walk(spec.family, spec.alpha, spec.X_max)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def _ssrw1_radius(n: int, tol: float) -> int:
    """Smallest R with P(|S_n| > R) <= tol for the 1d simple walk."""
    # |S_n| > R  <=>  k = (n + S_n)/2 > (n + R)/2 or < (n - R)/2
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        k_hi = math.floor((n + mid) / 2)
        if 2.0 * stats.binom.sf(k_hi, n, 0.5) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _ssrw1_column(n: int, R: int) -> np.ndarray:
    x = np.arange(-R, R + 1)
    k = (n + x) // 2
    vals = np.where((n + x) % 2 == 0, stats.binom.pmf(k, n, 0.5), 0.0)
    vals[np.abs(x) > n] = 0.0
    return vals


def _ssrw2_column(n: int, R: int) -> np.ndarray:
    """q_n(x, y) = q1_n(x + y) q1_n(x - y) on |x|, |y| <= R."""
    q1 = _ssrw1_column(n, 2 * R)
    x = np.arange(-R, R + 1)
    u = x[:, None] + x[None, :]
    v = x[:, None] - x[None, :]
    return q1[u + 2 * R] * q1[v + 2 * R]


def window_radius(walk: WalkLaw, n: int, tol: float) -> int:
    """Half-width of the window that keeps all but ``tol`` of the mass of q_n."""
    if walk.family is WalkFamily.SSRW_1D:
        return _ssrw1_radius(n, tol)
    if walk.family is WalkFamily.SSRW_2D:
        # |U|, |V| <= R implies |x|, |y| <= R; P(|U| > R or |V| > R) <= 2 P(|U| > R)
        return _ssrw1_radius(n, tol / 2.0)
    return kernel_column(walk, n, tol).radius


def _stable_columns(walk: WalkLaw, N: int, tol: float):
    """Yield q_1..q_N of a 1d walk by FFT convolution; each step may trim tol/N."""
    step = walk.step_column()
    r_step = walk.step_range
    col, radius, lost = np.array([1.0]), 0, 0.0
    budget = tol / N
    for n in range(1, N + 1):
        col = fftconvolve(col, step)
        np.clip(col, 0.0, None, out=col)
        radius += r_step
        if col.size > MAX_CELLS:
            raise ResourceError(f"kernel window for n={n} exceeds {MAX_CELLS} cells")
        # trim symmetric tails whose mass fits into this step's budget
        tails = np.cumsum(col[:radius]) * 2.0
        cut = int(np.searchsorted(tails, budget, side="right"))
        if cut:
            lost += float(tails[cut - 1])
            col = col[cut:col.size - cut]
            radius -= cut
        yield KernelColumn(n, radius, col, lost)


def kernel_column(walk: WalkLaw, n: int, tol: float = 1e-6) -> KernelColumn:
    """q_n(x) on an adaptive window whose excluded mass is at most ``tol``."""
    if n < 1:
        raise DomainError(f"kernel time index must be >= 1, got n={n}")
    if not 0.0 < tol <= 1e-3:
        raise DomainError(f"kernel tolerance must lie in (0, 1e-3], got {tol}")
    if walk.family is WalkFamily.SSRW_1D:
        R = min(window_radius(walk, n, tol), n)
        vals = _ssrw1_column(n, R)
    elif walk.family is WalkFamily.SSRW_2D:
        R = min(window_radius(walk, n, tol), n)
        if (2 * R + 1) ** 2 > MAX_CELLS:
            raise ResourceError(f"kernel window for n={n} exceeds {MAX_CELLS} cells")
        vals = _ssrw2_column(n, R)
    else:
        key = ("stable", n, tol)
        with walk._lock:
            column = walk._cache.get(key)
            if column is None:
                for column in _stable_columns(walk, n, tol):
                    pass
                logger.debug("stable kernel n=%d: radius %d, trimmed mass %.3e", n, column.radius, column.truncation_mass)
                walk._cache[key] = column
                if len(walk._cache) > STABLE_CACHE_SIZE:
                    walk._cache.popitem(last=False)
            walk._cache.move_to_end(key)
            return column
    vals.flags.writeable = False
    logger.debug("%s kernel n=%d: window radius %d for tol %.1e", walk.family.value, n, R, tol)
    return KernelColumn(n, R, vals, max(0.0, 1.0 - math.fsum(vals.ravel())))


def kernel_columns(walk: WalkLaw, N: int, tol: float = 1e-6):
    """Iterate over q_1..q_N; the stable family shares one convolution sweep."""
    if walk.family is WalkFamily.STABLE_1D:
        yield from _stable_columns(walk, N, tol)
    else:
        for n in range(1, N + 1):
            yield kernel_column(walk, n, tol)


def convolve_columns(a: KernelColumn, b: KernelColumn) -> np.ndarray:
    """Sum_y a(y) b(x - y) on the combined window of radius a.radius + b.radius."""
    out = fftconvolve(a.values, b.values)
    np.clip(out, 0.0, None, out=out)
    return out


# ---------------------------------------------------------------------------
# Overlaps
# ---------------------------------------------------------------------------

def _ssrw1_return(n: np.ndarray) -> np.ndarray:
    """P(S_{2n} = 0) = C(2n, n) 4^{-n}."""
    n = np.asarray(n, dtype=float)
    return np.exp(special.gammaln(2 * n + 1) - 2 * special.gammaln(n + 1) - 2 * n * math.log(2.0))


def _spectral_nodes(walk: WalkLaw, N: int, panels_per_decade: int = 4, order: int = 24):
    """Gauss-Legendre nodes on geometric panels of (theta_min, pi) and phi^2 there."""
    theta_min = 1e-3 * N ** (-1.0 / walk.alpha)
    decades = math.log10(math.pi / theta_min)
    edges = np.geomspace(theta_min, math.pi, max(2, int(decades * panels_per_decade)) + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    r = walk.characteristic(nodes) ** 2
    return theta_min, nodes, weights, r


def collision_masses(walk: WalkLaw, N: int, tol: float = 1e-8) -> np.ndarray:
    """c(n) = sum_x q_n(x)^2 = P(S_n = S'_n) for n = 0..N, with c(0) = 0."""
    n = np.arange(N + 1)
    if walk.family is WalkFamily.SSRW_1D:
        c = _ssrw1_return(n)
    elif walk.family is WalkFamily.SSRW_2D:
        c = _ssrw1_return(n) ** 2
    elif N <= KERNEL_OVERLAP_LIMIT and walk.X_max * N <= MAX_CELLS:
        c = np.zeros(N + 1)
        for col in kernel_columns(walk, N, min(tol, 1e-3)):
            c[col.n] = float(np.dot(col.values, col.values))
    else:
        # (1/pi) int_0^pi phi^{2n}, vectorized over n
        theta_min, _, weights, r = _spectral_nodes(walk, N)
        logr = np.log(np.maximum(r, 1e-300))
        c = np.empty(N + 1)
        for start in range(0, N + 1, 1024):
            block = n[start:start + 1024]
            c[start:start + block.size] = (np.exp(np.outer(block, logr)) @ weights + theta_min) / math.pi
    c = np.asarray(c, dtype=float)
    c[0] = 0.0
    return c


def polymer_overlap(walk: WalkLaw, N: int, tol: float = 1e-8, method: str = "auto") -> float:
    """R_N = E[sum_{n=1}^N 1{S_n = S'_n}] = sum_{n=1}^N sum_x q_n(x)^2."""
    if N < 1:
        raise DomainError(f"overlap horizon must be >= 1, got N={N}")
    if method == "kernel":
        return math.fsum(float(np.sum(col.values ** 2)) for col in kernel_columns(walk, N, min(tol, 1e-3)))
    if method == "auto" and walk.family is not WalkFamily.STABLE_1D:
        return math.fsum(collision_masses(walk, N)[1:])
    # (1/pi) int_0^pi r (1 - r^N)/(1 - r) d theta, r = phi^2
    theta_min, _, weights, r = _spectral_nodes(walk, N)
    one_minus = -np.expm1(np.log(np.maximum(r, 1e-300)))
    geom = np.where(one_minus > 1e-14, r * -np.expm1(N * np.log(np.maximum(r, 1e-300))) / np.maximum(one_minus, 1e-300), N)
    return float((geom @ weights + N * theta_min) / math.pi)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_paths(walk: WalkLaw, N: int, seed: Seed, count: int) -> np.ndarray:
    """``count`` paths as an int array (count, N + 1, dim) starting at the origin."""
    rng = generator(seed)
    cdf = np.cumsum(walk.probs)
    idx = np.searchsorted(cdf, rng.random((count, N)) * cdf[-1], side="right")
    idx = np.minimum(idx, len(walk.probs) - 1)
    steps = walk.displacements[idx]
    paths = np.zeros((count, N + 1, walk.dim), dtype=np.int64)
    np.cumsum(steps, axis=1, out=paths[:, 1:])
    return paths


def sample_path(walk: WalkLaw, N: int, seed: Seed) -> np.ndarray:
    """One lattice path S_0 = 0, S_1, .., S_N; deterministic given ``seed``."""
    return sample_paths(walk, N, seed, 1)[0]
