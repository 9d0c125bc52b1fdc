import logging
import math

import numpy as np
import pytest

from disorder_lab.core.walk import (
    STABLE_CACHE_SIZE,
    build_walk,
    collision_masses,
    convolve_columns,
    kernel_column,
    kernel_columns,
    polymer_overlap,
    sample_path,
    sample_paths,
    walk_from_spec,
)
from disorder_lab.errors import DomainError
from disorder_lab.models import WalkFamily, WalkSpec
from disorder_lab.utils.seeding import Seed


@pytest.fixture(scope="module")
def ssrw1():
    return build_walk(WalkFamily.SSRW_1D)


@pytest.fixture(scope="module")
def ssrw2():
    return build_walk(WalkFamily.SSRW_2D)


@pytest.fixture(scope="module")
def stable():
    return build_walk(WalkFamily.STABLE_1D, alpha=1.5, X_max=200)


def test_ssrw1_kernel_is_binomial(ssrw1):
    assert kernel_column(ssrw1, 2).q(0) == pytest.approx(0.5)
    assert kernel_column(ssrw1, 3).q(1) == pytest.approx(3 / 8)
    assert kernel_column(ssrw1, 3).q(0) == 0.0
    assert kernel_column(ssrw1, 3).q(99) == 0.0


def test_ssrw2_kernel_small_times(ssrw2):
    q1 = kernel_column(ssrw2, 1)
    assert q1.q(1, 0) == pytest.approx(0.25)
    assert q1.q(1, 1) == 0.0
    assert kernel_column(ssrw2, 2).q(0, 0) == pytest.approx(0.25)


@pytest.mark.parametrize("n", [1, 10, 200])
def test_kernel_window_keeps_mass_within_tolerance(ssrw1, ssrw2, stable, n):
    for walk in (ssrw1, ssrw2, stable):
        col = kernel_column(walk, n, tol=1e-6)
        assert math.fsum(col.values.ravel()) >= 1.0 - 1e-6 - 1e-12
        assert col.truncation_mass <= 1e-6 + 1e-12


def test_stable_kernel_is_symmetric(stable):
    col = kernel_column(stable, 5)
    assert np.allclose(col.values, col.values[::-1])


def test_kernel_columns_match_single_columns(stable):
    swept = list(kernel_columns(stable, 6))
    assert [c.n for c in swept] == list(range(1, 7))
    assert np.allclose(swept[-1].values, kernel_column(stable, 6).values)


def test_chapman_kolmogorov(ssrw1):
    a, b = kernel_column(ssrw1, 3), kernel_column(ssrw1, 4)
    both = convolve_columns(a, b)
    seven = kernel_column(ssrw1, 7)
    r = a.radius + b.radius
    for x in range(-7, 8):
        assert both[x + r] == pytest.approx(seven.q(x), abs=1e-12)


def test_invalid_kernel_arguments(ssrw1):
    with pytest.raises(DomainError):
        kernel_column(ssrw1, 0)
    with pytest.raises(DomainError):
        kernel_column(ssrw1, 3, tol=0.1)
    with pytest.raises(DomainError):
        build_walk(WalkFamily.STABLE_1D, alpha=2.5)


@pytest.mark.parametrize("family", [WalkFamily.SSRW_1D, WalkFamily.SSRW_2D])
def test_collision_closed_forms_match_kernels(family):
    walk = build_walk(family)
    c = collision_masses(walk, 20)
    assert c[0] == 0.0
    for n in (1, 2, 7, 20):
        col = kernel_column(walk, n, tol=1e-12)
        assert c[n] == pytest.approx(float(np.sum(col.values ** 2)), rel=1e-9)


def test_stable_collisions_from_kernels(stable):
    c = collision_masses(stable, 10)
    col = kernel_column(stable, 10, tol=1e-8)
    assert c[10] == pytest.approx(float(np.sum(col.values ** 2)), rel=1e-6)


def test_spectral_overlap_agrees_with_kernel_sum(stable):
    kernel = polymer_overlap(stable, 64, method="kernel")
    spectral = polymer_overlap(stable, 64, method="spectral")
    assert spectral == pytest.approx(kernel, rel=1e-3)


def test_ssrw2_overlap_grows_like_log_over_pi(ssrw2):
    gain = polymer_overlap(ssrw2, 4096) - polymer_overlap(ssrw2, 1024)
    assert gain == pytest.approx(math.log(4.0) / math.pi, rel=0.01)


def test_overlap_needs_positive_horizon(ssrw1):
    with pytest.raises(DomainError):
        polymer_overlap(ssrw1, 0)


def test_sampled_paths_hit_kernel_probabilities(ssrw1):
    paths = sample_paths(ssrw1, 4, Seed(5), 50_000)
    assert paths.shape == (50_000, 5, 1)
    assert np.all(paths[:, 0] == 0)
    p = np.mean(paths[:, 4, 0] == 0)
    assert p == pytest.approx(6 / 16, abs=5 * math.sqrt(0.25 / 50_000))


def test_single_path_is_reproducible(ssrw2):
    a = sample_path(ssrw2, 30, Seed(1, 2))
    b = sample_path(ssrw2, 30, Seed(1, 2))
    assert np.array_equal(a, b)
    assert np.all(np.abs(np.diff(a, axis=0)).sum(axis=1) == 1)


def test_walk_from_spec_round_trip():
    spec = WalkSpec(family=WalkFamily.STABLE_1D, alpha=1.2, X_max=50)
    assert walk_from_spec(spec).spec == spec


def test_stable_kernel_cache_keeps_recent_columns_only():
    walk = build_walk(WalkFamily.STABLE_1D, alpha=1.5, X_max=20)
    first = kernel_column(walk, 1, 1e-4)
    for n in range(2, STABLE_CACHE_SIZE + 4):
        kernel_column(walk, n, 1e-4)
    assert len(walk._cache) == STABLE_CACHE_SIZE
    latest = kernel_column(walk, STABLE_CACHE_SIZE + 3, 1e-4)
    assert kernel_column(walk, STABLE_CACHE_SIZE + 3, 1e-4) is latest
    again = kernel_column(walk, 1, 1e-4)
    assert again is not first
    np.testing.assert_array_equal(again.values, first.values)


def test_kernel_column_logs_its_window(caplog, ssrw1):
    with caplog.at_level(logging.DEBUG, logger="disorder_lab.core.walk"):
        col = kernel_column(ssrw1, 100, 1e-6)
    assert f"ssrw-1d kernel n=100: window radius {col.radius}" in caplog.text
