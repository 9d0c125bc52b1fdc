"""Exact discrete partition functions and the continuum pinning closed form.

Single evaluations of the pinning model run in the log domain. Batched
evaluations (many environments at once) run in the linear domain with a
per-environment scale that is folded back into the log whenever the
running values pass 1e150. The polymer transfer does the same per layer.
Both let the recursions vectorize over environments.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import logsumexp

from disorder_lab.core.disorder import (
    DisorderField,
    LineSites,
    SpaceTimeSites,
    draw,
    log_mgf,
    sample_lines,
)
from disorder_lab.core.renewal import RenewalLaw
from disorder_lab.core.walk import WalkLaw, window_radius
from disorder_lab.errors import DomainError, ResourceError
from disorder_lab.models import (
    ContinuumPinningParams,
    DisorderSpec,
    Endpoint,
    FieldType,
    ModelKind,
    PartitionValue,
    PolymerMode,
)
from disorder_lab.utils.seeding import Seed, generator

logger = logging.getLogger(__name__)

_RESCALE = 1e150
SLICE_STEPS = 16     # step sets up to this size are propagated by shifted slices


def _value(log_value: float) -> float:
    return math.exp(log_value) if log_value < 709.0 else math.inf


# ---------------------------------------------------------------------------
# Pinning
# ---------------------------------------------------------------------------

def _line_values(omega: DisorderField | np.ndarray, N: int) -> np.ndarray:
    if isinstance(omega, DisorderField):
        if not isinstance(omega.sites, LineSites):
            raise DomainError("pinning needs a line field indexed by 1..N")
        values = omega.values
    else:
        values = np.asarray(omega, dtype=float)
    if values.shape != (N,):
        raise DomainError(f"field length {values.shape[-1] if values.ndim else 0} does not match N={N}")
    return values


def pinning_partition(
    law: RenewalLaw,
    omega: DisorderField | np.ndarray,
    beta: float,
    h: float,
    N: int,
    endpoint: Endpoint | str = Endpoint.FREE,
) -> PartitionValue:
    """Z_{N,beta,h} of the pinning model for one environment.

    z(0) = 1, z(n) = e^{beta omega_n + h} sum_{m<n} z(m) K(n-m); the
    constrained endpoint returns z(N), the free one sum_m z(m) P(tau_1 > N-m).
    """
    endpoint = Endpoint(endpoint)
    if N > law.N_max:
        raise DomainError(f"N={N} exceeds the tabulated horizon N_max={law.N_max}")
    values = _line_values(omega, N)
    with np.errstate(divide="ignore"):
        logK = np.log(law.pmf[:N + 1])
        logS = np.log(law.survival()[:N + 1])
    weights = beta * values + h

    logz = np.empty(N + 1)
    logz[0] = 0.0
    for n in range(1, N + 1):
        logz[n] = weights[n - 1] + logsumexp(logz[:n] + logK[n:0:-1])

    if endpoint is Endpoint.CONSTRAINED:
        log_value = float(logz[N])
    elif beta == 0.0 and h == 0.0:
        log_value = 0.0          # total probability
    else:
        log_value = float(logsumexp(logz + logS[::-1]))
    seed = omega.seed if isinstance(omega, DisorderField) else None
    return PartitionValue(
        value=_value(log_value),
        log_value=log_value,
        model=ModelKind.PINNING,
        N=N,
        beta=beta,
        h=h,
        endpoint=endpoint.value,
        seed_master=seed.master if seed else None,
        seed_stream=seed.stream if seed else None,
    )


def pinning_log_partition_batch(
    law: RenewalLaw,
    omega: np.ndarray,
    beta: float,
    h: float,
    endpoint: Endpoint | str = Endpoint.FREE,
) -> np.ndarray:
    """log Z for every row of an (S, N) array of environments."""
    endpoint = Endpoint(endpoint)
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    S, N = omega.shape
    if N > law.N_max:
        raise DomainError(f"N={N} exceeds the tabulated horizon N_max={law.N_max}")
    if beta == 0.0 and h == 0.0 and endpoint is Endpoint.FREE:
        return np.zeros(S)
    w = np.exp(np.clip(beta * omega + h, -700.0, 700.0))
    Krev = law.pmf[N:0:-1].copy()            # Krev[N - n + m] = K(n - m)
    z = np.zeros((S, N + 1))
    z[:, 0] = 1.0
    log_scale = np.zeros(S)
    for n in range(1, N + 1):
        z[:, n] = w[:, n - 1] * (z[:, :n] @ Krev[N - n:])
        # every stored entry stays below _RESCALE
        rescale = z[:, n] > _RESCALE
        if rescale.any():
            factor = 1.0 / z[rescale, n]
            z[rescale, :n + 1] *= factor[:, None]
            log_scale[rescale] -= np.log(factor)
    if endpoint is Endpoint.CONSTRAINED:
        total = z[:, N]
    else:
        total = z @ law.survival()[N::-1]
    with np.errstate(divide="ignore"):
        return np.log(total) + log_scale


def continuum_pinning_sample(params: ContinuumPinningParams, seed: Seed) -> float:
    """exp{(b/m) W_t + (h/m - b^2/(2 m^2)) t} with W_t ~ Normal(0, t)."""
    return float(continuum_pinning_samples(params, seed, 1)[0])


def continuum_pinning_samples(params: ContinuumPinningParams, seed: Seed, count: int) -> np.ndarray:
    m, t = params.mean_interarrival, params.t
    W = math.sqrt(t) * generator(seed).standard_normal(count)
    return np.exp(params.beta_hat / m * W + (params.h_hat / m - params.beta_hat ** 2 / (2.0 * m * m)) * t)


# ---------------------------------------------------------------------------
# Directed polymer
# ---------------------------------------------------------------------------

def _pad_to(state: np.ndarray, r_from: int, r_to: int, dim: int) -> np.ndarray:
    """Embed a (S, box r_from) state into a zero box of radius r_to >= r_from."""
    if r_to == r_from:
        return state
    shape = state.shape[:1] + (2 * r_to + 1,) * dim
    out = np.zeros(shape)
    lo = r_to - r_from
    out[(slice(None),) + (slice(lo, lo + 2 * r_from + 1),) * dim] = state
    return out


def transfer_step(walk: WalkLaw, state: np.ndarray, r_prev: int, r_next: int) -> np.ndarray:
    """sum_y state(y) p(x - y) for |x_i| <= r_next; mass leaving the box is dropped."""
    dim = walk.dim
    s = walk.step_range
    if len(walk.probs) <= SLICE_STEPS:
        R = max(r_prev, r_next + s)
        padded = _pad_to(state, r_prev, R, dim)
        out = np.zeros(state.shape[:1] + (2 * r_next + 1,) * dim)
        width = 2 * r_next + 1
        for d, p in zip(walk.displacements, walk.probs):
            idx = tuple(slice(R - r_next - int(di), R - r_next - int(di) + width) for di in d)
            out += p * padded[(slice(None),) + idx]
        return out
    # 1d long-range steps
    full = fftconvolve(state, walk.step_column()[None, :], axes=-1)
    np.clip(full, 0.0, None, out=full)
    centre = r_prev + s
    if r_next > centre:
        full = _pad_to(full, centre, r_next, 1)
        centre = r_next
    return full[:, centre - r_next:centre + r_next + 1]


def _polymer_layers(
    walk: WalkLaw,
    layer_values,
    N: int,
    radii: tuple[int, ...],
    beta: float,
    h: float,
    S: int,
):
    """Run the transfer recursion over S environments.

    Returns the final layer, the per-environment log scale folded out of it
    and the pure-walk layer.
    """
    dim = walk.dim
    state = np.ones((S,) + (1,) * dim)
    pure = np.ones((1,) + (1,) * dim)
    log_scale = np.zeros(S)
    r = 0
    for n in range(1, N + 1):
        r_next = radii[n - 1]
        state = transfer_step(walk, state, r, r_next)
        pure = transfer_step(walk, pure, r, r_next)
        state *= np.exp(np.clip(beta * layer_values(n) + h, -700.0, 700.0))
        r = r_next
        top = state.reshape(S, -1).max(axis=1)
        rescale = (top > _RESCALE) | ((top < 1.0 / _RESCALE) & (top > 0.0))
        if rescale.any():
            factor = 1.0 / top[rescale]
            state[rescale] *= factor.reshape((-1,) + (1,) * dim)
            log_scale[rescale] -= np.log(factor)
    return state, log_scale, pure


def _check_window(walk: WalkLaw, sites: SpaceTimeSites, N: int, tol: float) -> None:
    if sites.N < N or sites.dim != walk.dim:
        raise DomainError(f"field covers {sites.N} layers in dimension {sites.dim}, need {N} in {walk.dim}")
    need = min(window_radius(walk, N, tol), N * walk.step_range)
    if sites.radii[N - 1] < need:
        raise ResourceError(f"layer n={N} has radius {sites.radii[N - 1]} but tolerance {tol} needs {need}")


def polymer_partition(
    walk: WalkLaw,
    omega: DisorderField,
    beta: float,
    N: int,
    mode: PolymerMode | str = PolymerMode.POINT_TO_PLANE,
    x: tuple[int, ...] | None = None,
    tol: float = 1e-6,
    h: float | None = None,
) -> PartitionValue:
    """Z_N of the directed polymer by the layer transfer recursion.

    Z_n(x) = sum_y Z_{n-1}(y) q_1(x - y) e^{beta omega_{n,x} + h}, with
    h = -M(beta) unless given. The environment's layer boxes bound the
    window; the pure-walk mass lost outside them is reported as
    ``truncation_error``.
    """
    mode = PolymerMode(mode)
    if not isinstance(omega.sites, SpaceTimeSites):
        raise DomainError("polymer needs a space-time field")
    _check_window(walk, omega.sites, N, tol)
    if h is None:
        h = -log_mgf(omega.spec, beta)
    radii = omega.sites.radii[:N]
    state, log_scale, pure = _polymer_layers(walk, omega.layer, N, radii, beta, h, 1)
    truncation = max(0.0, 1.0 - float(pure.sum()))

    if mode is PolymerMode.POINT_TO_PLANE:
        total = 1.0 if beta == 0.0 and h == 0.0 else float(state.sum())
    else:
        if x is None:
            raise DomainError("point-to-point mode needs an endpoint x")
        r = radii[N - 1]
        idx = tuple(int(xi) + r for xi in x)
        if len(idx) != walk.dim or any(i < 0 or i > 2 * r for i in idx) or pure[(0,) + idx] == 0.0:
            raise DomainError(f"endpoint x={tuple(x)} is not reachable at n={N}")
        total = float(state[(0,) + idx])
    log_value = math.log(total) + float(log_scale[0]) if total > 0 else -math.inf
    return PartitionValue(
        value=_value(log_value),
        log_value=log_value,
        model=ModelKind.POLYMER,
        N=N,
        beta=beta,
        h=h,
        endpoint=mode.value,
        seed_master=omega.seed.master,
        seed_stream=omega.seed.stream,
        truncation_error=truncation,
    )


def polymer_log_partition_batch(
    walk: WalkLaw,
    spec: DisorderSpec,
    N: int,
    beta: float,
    master: int,
    streams: range,
    radii: tuple[int, ...],
    h: float | None = None,
) -> np.ndarray:
    """Point-to-plane log Z for a range of environment streams at once.

    Environment ``streams[i]`` is the same field as
    ``sample_field(spec, SpaceTimeSites(N, dim, radii), Seed(master, streams[i]))``.
    """
    if h is None:
        h = -log_mgf(spec, beta)
    dim = walk.dim
    if beta == 0.0 and h == 0.0:
        return np.zeros(len(streams))
    def layer_values(n: int) -> np.ndarray:
        shape = (2 * radii[n - 1] + 1,) * dim
        out = np.empty((len(streams),) + shape)
        for i, stream in enumerate(streams):
            out[i] = draw(spec, generator(Seed(master, stream), block=n), shape)
        return out

    state, log_scale, _ = _polymer_layers(walk, layer_values, N, radii, beta, h, len(streams))
    with np.errstate(divide="ignore"):
        return np.log(state.reshape(len(streams), -1).sum(axis=1)) + log_scale


def polymer_radii(walk: WalkLaw, N: int, tol: float = 1e-6) -> tuple[int, ...]:
    """Layer radii of a window keeping all but ``tol`` of the walk's mass up to N."""
    R = min(window_radius(walk, N, tol), N * walk.step_range)
    logger.debug("polymer window for %s up to N=%d: radius %d (tol %.1e)", walk.family.value, N, R, tol)
    return tuple(min(n * walk.step_range, R) for n in range(1, N + 1))


# ---------------------------------------------------------------------------
# Weak-disorder scalings
# ---------------------------------------------------------------------------

def scaling_parameters(
    beta_hat: float,
    h_hat: float,
    delta: float,
    d_eff: float,
    gamma: float,
    field: FieldType | str = FieldType.OCCUPATION,
    spec: DisorderSpec | None = None,
) -> tuple[float, float, float]:
    """(beta_delta, h_delta, prefactor) of the general weak-disorder scaling.

    beta = b delta^{d/2 - gamma}. For occupation fields h = h' delta^{d - gamma}
    - M(beta) (M = beta^2/2 for Gaussian disorder) and the prefactor is 1; for
    spin fields h = h' delta^{d - gamma} and Z is multiplied by
    e^{-b^2 delta^{-2 gamma}/2}.
    """
    field = FieldType(field)
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"mesh delta must lie in (0, 1], got {delta}")
    beta = beta_hat * delta ** (d_eff / 2.0 - gamma)
    h = h_hat * delta ** (d_eff - gamma)
    if field is FieldType.OCCUPATION:
        h -= log_mgf(spec, beta) if spec is not None else 0.5 * beta * beta
        return beta, h, 1.0
    return beta, h, math.exp(-0.5 * beta_hat ** 2 * delta ** (-2.0 * gamma))


def pinning_weak_scaling(
    law: RenewalLaw,
    beta_hat: float,
    h_hat: float,
    N: int,
    spec: DisorderSpec,
) -> tuple[float, float]:
    """(beta_N, h_N) with h_N = h'_N - M(beta_N).

    alpha in (1/2, 1): beta_N = b L(N) N^{1/2 - alpha}, h'_N = h' L(N) N^{-alpha};
    finite mean: beta_N = b / sqrt(N), h'_N = h' / N. L is the effective
    slowly varying factor of the normalized law.
    """
    if math.isfinite(law.mean_interarrival):
        beta = beta_hat / math.sqrt(N)
        h_prime = h_hat / N
    elif 0.5 < law.alpha < 1.0:
        L = law.effective_L(N)
        beta = beta_hat * L * N ** (0.5 - law.alpha)
        h_prime = h_hat * L * N ** (-law.alpha)
    else:
        raise DomainError(f"weak-disorder scaling needs alpha in (1/2, 1) or a finite mean, got alpha={law.alpha}")
    return beta, h_prime - log_mgf(spec, beta)


def polymer_weak_beta(walk: WalkLaw, beta_hat: float, N: int) -> float:
    """beta_N = b N^{-(alpha - 1)/(2 alpha)} for the 1d long-range polymer."""
    if walk.dim != 1 or walk.alpha <= 1.0:
        raise DomainError("weak-disorder polymer scaling needs a 1d walk with alpha in (1, 2]")
    return beta_hat * N ** (-(walk.alpha - 1.0) / (2.0 * walk.alpha))


# ---------------------------------------------------------------------------
# Many environments
# ---------------------------------------------------------------------------

def sample_log_partitions(
    model: RenewalLaw | WalkLaw,
    spec: DisorderSpec,
    N: int,
    beta: float,
    h: float | None,
    master: int,
    streams: range,
    endpoint: Endpoint | str = Endpoint.FREE,
    radii: tuple[int, ...] | None = None,
    chunk: int = 1024,
) -> np.ndarray:
    """log Z of environment ``Seed(master, s)`` for every s in ``streams``.

    Pinning runs ``chunk`` environments per batch; the polymer runs
    point-to-plane with h = -M(beta) when ``h`` is None.
    """
    out = np.empty(len(streams))
    for lo in range(0, len(streams), chunk):
        block = streams[lo:lo + chunk]
        if isinstance(model, RenewalLaw):
            omega = sample_lines(spec, N, master, block)
            out[lo:lo + len(block)] = pinning_log_partition_batch(model, omega, beta, 0.0 if h is None else h, endpoint)
        else:
            out[lo:lo + len(block)] = polymer_log_partition_batch(
                model, spec, N, beta, master, block, radii or polymer_radii(model, N), h
            )
    return out
