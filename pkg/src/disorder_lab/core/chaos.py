"""Polynomial chaos expansions of partition functions.

The discrete expansion Z = 1 + sum_k sum_{x_1<..<x_k} psi^{(k)}(x) prod eta_{x_i}
is evaluated exhaustively, one term per subset of times. The continuum series
replaces eta by white noise on a mesh; its second moment is known in closed
form (a Mittag-Leffler series in the alpha-branch, an exponential for a
finite mean) and is also integrated by quadrature for k <= 3.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.signal import fftconvolve

from disorder_lab.core.disorder import EtaField, log_mgf, replica_coupling
from disorder_lab.core.partition import (
    pinning_weak_scaling,
    polymer_radii,
    polymer_weak_beta,
    sample_log_partitions,
)
from disorder_lab.core.renewal import (
    DIRECT_LIMIT,
    RenewalLaw,
    build_renewal_law,
    overlap_masses,
    renewal_mass,
    series_reciprocal,
)
from disorder_lab.core.stats import ks_statistic
from disorder_lab.core.walk import WalkLaw, collision_masses
from disorder_lab.errors import DomainError, ResourceError
from disorder_lab.models import DisorderSpec, TruncationReport
from disorder_lab.references.base import ContinuumCoefficients, DiscreteCoefficients
from disorder_lab.references.pinning import AlphaContinuum, FiniteMeanContinuum, continuum_from_law
from disorder_lab.utils.seeding import Seed, generator

logger = logging.getLogger(__name__)

ORACLE_LIMIT = 16
QUADRATURE_MAX_K = 3
MAX_MESH_CELLS = 2 ** 18
MESH_BUDGET = 2 ** 22          # k_max * cells
MESH_TOLERANCE = 0.01
QUAD_RTOL = 1e-8


# ---------------------------------------------------------------------------
# Discrete oracle
# ---------------------------------------------------------------------------

def chaos_terms(psi: DiscreteCoefficients, eta: EtaField | np.ndarray | tuple) -> np.ndarray:
    """Sums of the k-th order chaos, k = 0..N (entry 0 is the constant 1).

    Subsets of times are enumerated depth first; a subset's state carries the
    product of correlations and eta weights of its prefix.
    """
    N = psi.N
    if N > ORACLE_LIMIT:
        raise ResourceError(f"exhaustive chaos sum over 2^{N} subsets exceeds the limit N <= {ORACLE_LIMIT}")
    layers = eta.values if isinstance(eta, EtaField) else eta
    if len(layers) < N:
        raise DomainError(f"eta covers {len(layers)} times, need {N}")
    first = np.asarray(psi.layer_eta(layers, 1))
    if first.ndim and first.shape != psi.start(1).shape:
        raise DomainError(f"eta layer shape {first.shape} does not match correlation state {psi.start(1).shape}")

    terms = np.zeros(N + 1)
    terms[0] = 1.0
    k_max = psi.k_max if psi.k_max is not None else N

    def visit(state: np.ndarray, n: int, k: int) -> None:
        terms[k] += float(np.sum(state))
        if k >= k_max:
            return
        for n_next in range(n + 1, N + 1):
            visit(psi.propagate(state, n, n_next) * psi.layer_eta(layers, n_next), n_next, k + 1)

    for n in range(1, N + 1):
        visit(psi.start(n) * psi.layer_eta(layers, n), n, 1)
    return terms


def chaos_oracle(psi: DiscreteCoefficients, eta: EtaField | np.ndarray | tuple) -> float:
    """1 + sum over nonempty subsets of psi^{(k)} prod eta, exactly."""
    return math.fsum(chaos_terms(psi, eta))


# ---------------------------------------------------------------------------
# Continuum kernels and second moments
# ---------------------------------------------------------------------------

def continuum_kernel_psi(times, alpha: float | None = None, mean_interarrival: float | None = None) -> float:
    """psi-bar^{(k)}(t_1..t_k): C_alpha^k / prod (t_i - t_{i-1})^{1-alpha}, or m^{-k}."""
    if (alpha is None) == (mean_interarrival is None):
        raise DomainError("give exactly one of alpha and mean_interarrival")
    times = list(times)
    if not times:
        return 1.0
    if mean_interarrival is not None:
        return FiniteMeanContinuum(mean_interarrival).psi(times)
    return AlphaContinuum(alpha).psi(times)


def _closed_terms(psi: ContinuumCoefficients, beta_hat: float, h_hat: float, t: float, k_max: int) -> np.ndarray:
    """E[Z_(k)^2] for the orthogonal Wiener chaos components Z_(k), k = 0..k_max, in closed form.

    A drift h_hat only rescales Z by e^{h_hat t / m} in the finite-mean case,
    so every component carries the factor e^{2 h_hat t / m}.
    """
    k = np.arange(k_max + 1, dtype=float)
    if isinstance(psi, FiniteMeanContinuum):
        x = beta_hat ** 2 * t / psi.m ** 2
        with np.errstate(divide="ignore"):
            log_terms = k * np.log(x) - special.gammaln(k + 1) if x > 0 else np.where(k == 0, 0.0, -np.inf)
        return math.exp(2.0 * h_hat * t / psi.m) * np.exp(log_terms)
    if h_hat != 0.0:
        raise DomainError("the alpha-branch second moment is available for h_hat = 0 only")
    a = 2.0 * psi.alpha - 1.0
    if a <= 0.0:
        raise DomainError(f"second moment is infinite for alpha <= 1/2, got alpha={psi.alpha}")
    x = beta_hat ** 2 * psi.C ** 2 * special.gamma(a) * t ** a
    if x == 0.0:
        return np.where(k == 0, 1.0, 0.0)
    return np.exp(k * math.log(x) - special.gammaln(k * a + 1.0))


def _simplex_integral(psi: ContinuumCoefficients, k: int, t: float) -> tuple[float, float]:
    """int over t_1 < .. < t_k < t of prod_i g(t_i - t_{i-1})^2, by nested quadrature in gaps."""
    if isinstance(psi, AlphaContinuum):
        c2, w = psi.C ** 2, 2.0 * psi.alpha - 2.0
    else:
        c2, w = psi.m ** -2, 0.0
    errors = []

    def level(j: int, remaining: float) -> float:
        if j == k or remaining <= 0.0:
            return 1.0 if j == k else 0.0
        # the (s - 0)^w singularity is carried by the algebraic weight
        value, err = integrate.quad(
            lambda s: c2 * level(j + 1, remaining - s),
            0.0, remaining, weight="alg", wvar=(w, 0.0), epsabs=0.0, epsrel=QUAD_RTOL, limit=200,
        )
        errors.append(err)
        return value

    value = level(0, t)
    return value, max(errors, default=0.0)


def chaos_second_moment(
    psi: ContinuumCoefficients,
    beta_hat: float,
    h_hat: float,
    t: float,
    k_max: int,
    method: str = "quadrature",
    epsilon: float | None = None,
) -> tuple[float, TruncationReport]:
    """E[Z_k_max^2] of the continuum series truncated at order k_max.

    ``report.terms[k]`` is the second moment of the k-th Wiener chaos
    component of Z; the components are orthogonal, so they sum to the value.
    With ``method="quadrature"`` the orders k <= 3 are integrated on the
    ordered simplex; higher orders and ``method="closed"`` use the closed
    form. The tail bound weights the remainder by (1 + eps)^k, eps = 0 for
    h_hat = 0 and 0.1 otherwise, and uses the ratio of successive terms,
    which is nonincreasing for this series.
    """
    if k_max < 0:
        raise DomainError(f"k_max must be >= 0, got {k_max}")
    if t <= 0.0:
        raise DomainError(f"t must be > 0, got {t}")
    if epsilon is None:
        epsilon = 0.0 if h_hat == 0.0 else 0.1
    closed = _closed_terms(psi, beta_hat, h_hat, t, k_max + 1)
    terms = closed[:k_max + 1].copy()

    if method == "quadrature" and beta_hat > 0.0:
        scale = math.exp(2.0 * h_hat * t / psi.m) if isinstance(psi, FiniteMeanContinuum) else 1.0
        for k in range(1, min(k_max, QUADRATURE_MAX_K) + 1):
            value, err = _simplex_integral(psi, k, t)
            if err > 1e3 * QUAD_RTOL * max(value, 1e-300):
                raise ResourceError(f"quadrature of order {k} did not converge: abs error {err:.3e} on {value:.6e}")
            terms[k] = scale * beta_hat ** (2 * k) * value
    elif method not in ("quadrature", "closed"):
        raise DomainError(f"unknown second-moment method {method!r}")

    if closed[k_max + 1] == 0.0:
        tail = 0.0
    else:
        ratio = closed[k_max + 1] / closed[k_max] * (1.0 + epsilon)
        tail = closed[k_max + 1] * (1.0 + epsilon) ** (k_max + 1) / (1.0 - ratio) if ratio < 1.0 else math.inf
    report = TruncationReport(k_max=k_max, tail_bound=tail, epsilon_margin=epsilon, terms=[float(x) for x in terms])
    logger.debug("second moment terms %s tail %.3e", report.terms, tail)
    return math.fsum(terms), report


# ---------------------------------------------------------------------------
# Continuum series on a mesh
# ---------------------------------------------------------------------------

def _mesh_cells(t: float, mesh: float) -> int:
    cells = int(round(t / mesh))
    if cells < 1 or abs(cells * mesh - t) > 1e-9 * t:
        raise DomainError(f"mesh {mesh} does not divide t={t}")
    return cells


def mesh_error(psi: ContinuumCoefficients, t: float, mesh: float) -> float:
    """Relative discretization error of the k = 1 second moment on the mesh."""
    cells = _mesh_cells(t, mesh)
    mid = (np.arange(cells) + 0.5) * mesh
    discrete = math.fsum(psi.gap_kernel(mid) ** 2 * mesh)
    if isinstance(psi, AlphaContinuum):
        a = 2.0 * psi.alpha - 1.0
        exact = psi.C ** 2 * t ** a / a
    else:
        exact = t / psi.m ** 2
    return abs(discrete - exact) / exact


def _mesh_chaos(psi: ContinuumCoefficients, xi: np.ndarray, mesh: float, k_max: int) -> np.ndarray:
    """Truncated series for each row of cell weights xi (S, cells)."""
    S, cells = xi.shape
    mid = (np.arange(cells) + 0.5) * mesh
    total = np.ones(S)
    A = xi * psi.gap_kernel(mid)[None, :]
    total += A.sum(axis=1)
    if isinstance(psi, FiniteMeanContinuum):
        for _ in range(2, k_max + 1):
            prefix = np.cumsum(A, axis=1)
            A = xi * (prefix - A) / psi.m
            total += A.sum(axis=1)
        return total
    G = np.zeros(cells)
    G[1:] = psi.gap_kernel(np.arange(1, cells) * mesh)
    for _ in range(2, k_max + 1):
        A = xi * fftconvolve(A, G[None, :], axes=1)[:, :cells]
        total += A.sum(axis=1)
    return total


def _check_mesh(psi: ContinuumCoefficients, t: float, mesh: float, k_max: int) -> int:
    cells = _mesh_cells(t, mesh)
    if cells > MAX_MESH_CELLS or cells * max(k_max, 1) > MESH_BUDGET:
        raise ResourceError(f"{cells} cells at k_max={k_max} exceed the mesh budget")
    err = mesh_error(psi, t, mesh)
    if err > MESH_TOLERANCE:
        raise DomainError(f"mesh {mesh} too coarse: first-order discretization error {err:.2%}")
    return cells


def simulate_continuum_chaos(
    psi: ContinuumCoefficients,
    beta_hat: float,
    h_hat: float,
    t: float,
    mesh: float,
    k_max: int,
    seed: Seed,
) -> float:
    """One sample of the truncated continuum series with Normal(0, mesh) cell noise."""
    cells = _check_mesh(psi, t, mesh, k_max)
    W = math.sqrt(mesh) * generator(seed).standard_normal(cells)
    xi = (beta_hat * W + h_hat * mesh)[None, :]
    return float(_mesh_chaos(psi, xi, mesh, k_max)[0])


def simulate_continuum_chaos_batch(
    psi: ContinuumCoefficients,
    beta_hat: float,
    h_hat: float,
    t: float,
    mesh: float,
    k_max: int,
    master: int,
    streams: range,
    chunk: int = 256,
) -> np.ndarray:
    """Samples for ``Seed(master, s)``, s in ``streams``; row i equals the single-sample call."""
    cells = _check_mesh(psi, t, mesh, k_max)
    out = np.empty(len(streams))
    for lo in range(0, len(streams), chunk):
        block = streams[lo:lo + chunk]
        W = np.stack([generator(Seed(master, s)).standard_normal(cells) for s in block]) * math.sqrt(mesh)
        out[lo:lo + len(block)] = _mesh_chaos(psi, beta_hat * W + h_hat * mesh, mesh, k_max)
    return out


# ---------------------------------------------------------------------------
# Rescaled correlations
# ---------------------------------------------------------------------------

def _composition_sum(first: np.ndarray, rest: np.ndarray, k: int, N: int) -> float:
    """sum over d_1 + .. + d_k <= N (d_i >= 1) of first(d_1) prod rest(d_i)."""
    acc = first[:N + 1]
    for _ in range(k - 1):
        acc = fftconvolve(acc, rest[:N + 1])[:N + 1]
    return math.fsum(acc)


def rescaled_correlation_error(
    alpha: float | None,
    k: int,
    delta: float,
    law: RenewalLaw | None = None,
    rescaled: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """L^2([0,1]^k) distance between rescaled discrete correlations and psi-bar^{(k)}.

    The discrete side is (delta^{-gamma} L(N))^k psi^{(k)} on the cells of
    mesh delta = 1/N, the continuum side is evaluated at cell midpoints, and
    the diagonal cells are left out. ``rescaled`` replaces the discrete gap
    function d -> delta^{-gamma} L(N) u(d).
    """
    if not 1 <= k <= QUADRATURE_MAX_K:
        raise DomainError(f"rescaled correlations are compared for k in 1..{QUADRATURE_MAX_K}, got {k}")
    N = int(round(1.0 / delta))
    if N < 2 or abs(N * delta - 1.0) > 1e-9:
        raise DomainError(f"delta must be 1/N with N >= 2, got {delta}")
    if law is None:
        if alpha is None:
            raise DomainError("give alpha or a renewal law")
        law = build_renewal_law(alpha, N_max=N)
    psi_bar = continuum_from_law(law)
    d = np.arange(N + 1, dtype=float)
    if rescaled is None:
        scale = 1.0 if isinstance(psi_bar, FiniteMeanContinuum) else N ** psi_bar.gamma * law.effective_L(N)
        a = scale * renewal_mass(law, N)
    else:
        a = np.asarray(rescaled(d), dtype=float)
    a = a.copy()
    a[0] = 0.0
    b_first = np.zeros(N + 1)
    b_first[1:] = psi_bar.gap_kernel((d[1:] - 0.5) * delta)
    b_rest = np.zeros(N + 1)
    b_rest[1:] = psi_bar.gap_kernel(d[1:] * delta)
    if k == 1:
        return math.sqrt(delta * math.fsum((a[1:] - b_first[1:]) ** 2))
    sq = (
        _composition_sum(a * a, a * a, k, N)
        - 2.0 * _composition_sum(a * b_first, a * b_rest, k, N)
        + _composition_sum(b_first * b_first, b_rest * b_rest, k, N)
    )
    return math.sqrt(max(sq, 0.0) * math.factorial(k) * delta ** k)


# ---------------------------------------------------------------------------
# Replica second moments
# ---------------------------------------------------------------------------

def _overlap_masses(model: RenewalLaw | WalkLaw, N: int) -> np.ndarray:
    if isinstance(model, RenewalLaw):
        return overlap_masses(model, N)
    return collision_masses(model, N)


def exact_second_moment(model: RenewalLaw | WalkLaw, spec: DisorderSpec, beta: float, N: int) -> float:
    """E[Z_N^2] for exactly centered eta (h = -M(beta)), free endpoint.

    E[Z^2] = 1 + sum_n A(n), A(n) = s2 [c(n) + sum_{m<n} A(m) c(n - m)],
    s2 = e^{M(2 beta) - 2 M(beta)} - 1 and c the collision masses.
    """
    s2 = math.expm1(replica_coupling(spec, beta))
    c = _overlap_masses(model, N)
    if s2 == 0.0:
        return 1.0
    if N <= DIRECT_LIMIT // 16:
        A = np.zeros(N + 1)
        for n in range(1, N + 1):
            A[n] = s2 * (c[n] + np.dot(A[1:n], c[n - 1:0:-1]))
        return 1.0 + math.fsum(A[1:])
    # A = s2 c / (1 - s2 c) as power series
    denom = -s2 * c
    denom[0] = 1.0
    A = fftconvolve(s2 * c, series_reciprocal(denom, N))[:N + 1]
    return 1.0 + math.fsum(A[1:])


def chaos_variance_ladder(model: RenewalLaw | WalkLaw, N: int, k_max: int) -> np.ndarray:
    """V_k(N) = sum over 1 <= n_1 < .. < n_k <= N of prod c(n_i - n_{i-1}), k = 1..k_max."""
    c = _overlap_masses(model, N)
    out = np.empty(k_max)
    acc = c.copy()
    for k in range(1, k_max + 1):
        if k > 1:
            acc = fftconvolve(acc, c)[:N + 1]
            np.clip(acc, 0.0, None, out=acc)
        out[k - 1] = math.fsum(acc)
    return out


# ---------------------------------------------------------------------------
# Lindeberg replacement
# ---------------------------------------------------------------------------

def weak_disorder_parameters(
    model: RenewalLaw | WalkLaw, spec: DisorderSpec, beta_hat: float, h_hat: float, N: int
) -> tuple[float, float]:
    """(beta_N, h_N) of the weak-disorder scaling, centered with the family's own M."""
    if isinstance(model, RenewalLaw):
        return pinning_weak_scaling(model, beta_hat, h_hat, N, spec)
    beta = polymer_weak_beta(model, beta_hat, N)
    return beta, -log_mgf(spec, beta)


def lindeberg_distance(
    model: RenewalLaw | WalkLaw,
    spec_a: DisorderSpec,
    spec_b: DisorderSpec,
    N: int,
    samples: int,
    seed: Seed,
    beta_hat: float = 1.0,
    h_hat: float = 0.0,
) -> float:
    """Two-sample KS distance between the laws of Z under two environment families.

    Sample a uses streams 0..samples-1 of ``seed.master``, sample b the next
    ``samples`` streams.
    """
    radii = None if isinstance(model, RenewalLaw) else polymer_radii(model, N)
    logs = []
    for offset, spec in ((0, spec_a), (samples, spec_b)):
        beta, h = weak_disorder_parameters(model, spec, beta_hat, h_hat, N)
        streams = range(offset, offset + samples)
        logs.append(sample_log_partitions(model, spec, N, beta, h, seed.master, streams, radii=radii))
    # KS is invariant under exp, so compare log Z
    return ks_statistic(logs[0], logs[1])
