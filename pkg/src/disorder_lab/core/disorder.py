"""I.i.d. disorder fields, exact log-MGFs and the eta transformation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from disorder_lab.errors import DomainError
from disorder_lab.models import DisorderFamily, DisorderSpec
from disorder_lab.utils.seeding import Seed, generator


# Closed admissible beta-intervals on which log_mgf is evaluated. The
# centered exponential has E[e^{beta*omega}] < inf only for beta < 1.
ADMISSIBLE_BETA: dict[DisorderFamily, tuple[float, float]] = {
    DisorderFamily.GAUSSIAN: (-20.0, 20.0),
    DisorderFamily.RADEMACHER: (-50.0, 50.0),
    DisorderFamily.EXPONENTIAL: (-20.0, 0.9),
}

# Largest exponent accepted by eta_transform (natural-log units).
EXPONENT_LIMIT = 700.0


# ---------------------------------------------------------------------------
# Site sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LineSites:
    """Sites 1..N of a one-dimensional field."""
    N: int

    def __post_init__(self) -> None:
        if self.N < 1:
            raise DomainError(f"site set must be non-empty, got N={self.N}")

    @property
    def size(self) -> int:
        return self.N


@dataclass(frozen=True)
class SpaceTimeSites:
    """Space-time sites (n, x), n = 1..N, with layer n a box |x_i| <= radii[n-1].

    Layer arrays have shape ``(2r+1,) * dim`` and index ``x + r`` on each axis.
    """
    N: int
    dim: int
    radii: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.N < 1:
            raise DomainError(f"site set must be non-empty, got N={self.N}")
        if len(self.radii) != self.N:
            raise DomainError(f"need one radius per layer: {len(self.radii)} != {self.N}")
        if self.dim not in (1, 2):
            raise DomainError(f"space dimension must be 1 or 2, got {self.dim}")

    @classmethod
    def uniform(cls, N: int, dim: int, radius: int) -> "SpaceTimeSites":
        return cls(N, dim, (radius,) * N)

    def layer_shape(self, n: int) -> tuple[int, ...]:
        return (2 * self.radii[n - 1] + 1,) * self.dim

    @property
    def size(self) -> int:
        return sum(int(np.prod(self.layer_shape(n))) for n in range(1, self.N + 1))

SiteSet = Union[LineSites, SpaceTimeSites]


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderField:
    """A realization of the environment omega on a site set.

    Line fields are drawn eagerly from block 0 of the stream. Space-time
    fields draw layer n from block n on demand, so a layer can be
    regenerated on its own and the whole cone never has to be held in memory.
    """
    spec: DisorderSpec
    sites: SiteSet
    seed: Seed
    _line: np.ndarray | None = field(default=None, repr=False, compare=False)

    def layer(self, n: int) -> np.ndarray:
        if not isinstance(self.sites, SpaceTimeSites):
            raise DomainError("layer() is only defined for space-time fields")
        if not 1 <= n <= self.sites.N:
            raise DomainError(f"layer {n} outside 1..{self.sites.N}")
        values = draw(self.spec, generator(self.seed, block=n), self.sites.layer_shape(n))
        values.flags.writeable = False
        return values

    @property
    def values(self) -> np.ndarray | tuple[np.ndarray, ...]:
        if isinstance(self.sites, LineSites):
            return self._line
        return tuple(self.layer(n) for n in range(1, self.sites.N + 1))


@dataclass(frozen=True)
class EtaField:
    """eta_x = exp(beta * omega_x + h) - 1 on the sites of a disorder field."""
    sites: SiteSet
    values: np.ndarray | tuple[np.ndarray, ...]
    beta: float
    h: float


# ---------------------------------------------------------------------------
# Log-MGF
# ---------------------------------------------------------------------------

def admissible_interval(spec: DisorderSpec) -> tuple[float, float]:
    return ADMISSIBLE_BETA[spec.family]


def log_mgf(spec: DisorderSpec, beta: float) -> float:
    """Return M(beta) = log E[exp(beta * omega)] in closed form."""
    lo, hi = admissible_interval(spec)
    if not lo <= beta <= hi:
        raise DomainError(
            f"beta={beta} outside the admissible interval [{lo}, {hi}] "
            f"of family {spec.family.value}"
        )
    if spec.family is DisorderFamily.GAUSSIAN:
        return 0.5 * beta * beta
    if spec.family is DisorderFamily.RADEMACHER:
        # log cosh without overflow
        return float(np.logaddexp(beta, -beta)) - math.log(2.0)
    # omega = E - 1 with E ~ Exp(1)
    return -beta - math.log1p(-beta)


def eta_moments(spec: DisorderSpec, beta: float, h: float) -> tuple[float, float]:
    """Exact (mean, variance) of eta = exp(beta*omega + h) - 1."""
    m1 = log_mgf(spec, beta)
    m2 = log_mgf(spec, 2.0 * beta)
    mean = math.expm1(m1 + h)
    var = math.exp(2.0 * h + 2.0 * m1) * math.expm1(m2 - 2.0 * m1)
    return mean, var


def replica_coupling(spec: DisorderSpec, beta: float) -> float:
    """lambda(beta) = M(2 beta) - 2 M(beta); Var(eta) = e^lambda - 1 when centered."""
    return log_mgf(spec, 2.0 * beta) - 2.0 * log_mgf(spec, beta)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def draw(spec: DisorderSpec, rng: np.random.Generator, shape: int | tuple[int, ...]) -> np.ndarray:
    """Draw i.i.d. mean-zero, unit-variance values of the given family."""
    if spec.family is DisorderFamily.GAUSSIAN:
        return rng.standard_normal(shape)
    if spec.family is DisorderFamily.RADEMACHER:
        return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0
    return rng.standard_exponential(shape) - 1.0


def sample_field(spec: DisorderSpec, sites: SiteSet, seed: Seed) -> DisorderField:
    """Sample omega on ``sites``; a pure function of (spec, sites, seed)."""
    if isinstance(sites, LineSites):
        values = draw(spec, generator(seed, block=0), sites.N)
        values.flags.writeable = False
        return DisorderField(spec, sites, seed, values)
    return DisorderField(spec, sites, seed)


def sample_lines(spec: DisorderSpec, N: int, master: int, streams: range | list[int]) -> np.ndarray:
    """Stack the line fields of several streams into a ``(len(streams), N)`` array.

    Row i equals ``sample_field(spec, LineSites(N), Seed(master, streams[i])).values``.
    """
    out = np.empty((len(streams), N))
    for i, stream in enumerate(streams):
        out[i] = draw(spec, generator(Seed(master, stream), block=0), N)
    return out


# ---------------------------------------------------------------------------
# Eta transform
# ---------------------------------------------------------------------------

def eta_values(omega: np.ndarray, beta: float, h: float) -> np.ndarray:
    """Pointwise exp(beta*omega + h) - 1 with the overflow guard."""
    exponent = beta * omega + h
    if exponent.size and np.max(exponent) > EXPONENT_LIMIT:
        bad = np.unravel_index(int(np.argmax(exponent)), exponent.shape)
        raise DomainError(
            f"eta exponent {float(exponent[bad]):.1f} exceeds {EXPONENT_LIMIT} at index {bad}"
        )
    return np.expm1(exponent)


def eta_transform(field_: DisorderField, beta: float, h: float) -> EtaField:
    """Map omega to eta = exp(beta*omega + h) - 1 on every site."""
    if not (math.isfinite(beta) and math.isfinite(h)):
        raise DomainError(f"beta and h must be finite, got beta={beta}, h={h}")
    sites = field_.sites
    if isinstance(sites, LineSites):
        try:
            values = eta_values(field_.values, beta, h)
        except DomainError as exc:
            # report the 1-based site
            raise DomainError(f"{exc} (site n={_first_overflow(field_.values, beta, h) + 1})") from None
        values.flags.writeable = False
        return EtaField(sites, values, beta, h)

    layers = []
    for n in range(1, sites.N + 1):
        layer = field_.layer(n)
        try:
            eta = eta_values(layer, beta, h)
        except DomainError:
            r = sites.radii[n - 1]
            idx = np.unravel_index(int(np.argmax(beta * layer)), layer.shape)
            x = tuple(int(i) - r for i in idx)
            raise DomainError(f"eta overflow at site (n={n}, x={x})") from None
        eta.flags.writeable = False
        layers.append(eta)
    return EtaField(sites, tuple(layers), beta, h)


def _first_overflow(values: np.ndarray, beta: float, h: float) -> int:
    return int(np.argmax(beta * values + h > EXPONENT_LIMIT))
