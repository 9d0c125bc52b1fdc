import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disorder_lab.core.disorder import (
    LineSites,
    SpaceTimeSites,
    eta_moments,
    eta_transform,
    log_mgf,
    replica_coupling,
    sample_field,
    sample_lines,
)
from disorder_lab.errors import DomainError
from disorder_lab.models import DisorderFamily, DisorderSpec
from disorder_lab.utils.seeding import Seed

GAUSSIAN = DisorderSpec(family=DisorderFamily.GAUSSIAN)
RADEMACHER = DisorderSpec(family=DisorderFamily.RADEMACHER)
EXPONENTIAL = DisorderSpec(family=DisorderFamily.EXPONENTIAL)


def test_log_mgf_closed_forms():
    assert log_mgf(GAUSSIAN, 0.3) == pytest.approx(0.045)
    assert log_mgf(RADEMACHER, 0.7) == pytest.approx(math.log(math.cosh(0.7)))
    assert log_mgf(EXPONENTIAL, 0.5) == pytest.approx(-0.5 - math.log(0.5))


@pytest.mark.parametrize("spec", [GAUSSIAN, RADEMACHER, EXPONENTIAL])
def test_log_mgf_vanishes_at_zero(spec):
    assert log_mgf(spec, 0.0) == 0.0


def test_exponential_outside_admissible_interval():
    with pytest.raises(DomainError, match="centered-exponential"):
        log_mgf(EXPONENTIAL, 1.0)


def test_rademacher_large_beta_does_not_overflow():
    assert log_mgf(RADEMACHER, 40.0) == pytest.approx(40.0 - math.log(2.0))


@pytest.mark.parametrize("spec", [GAUSSIAN, RADEMACHER, EXPONENTIAL])
def test_samples_are_standardized(spec):
    omega = sample_field(spec, LineSites(200_000), Seed(11)).values
    assert abs(omega.mean()) < 5 / math.sqrt(omega.size)
    assert omega.var() == pytest.approx(1.0, abs=0.02)


def test_sample_field_is_a_pure_function_of_its_seed():
    a = sample_field(GAUSSIAN, LineSites(64), Seed(3, 5)).values
    b = sample_field(GAUSSIAN, LineSites(64), Seed(3, 5)).values
    c = sample_field(GAUSSIAN, LineSites(64), Seed(3, 6)).values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_lines_matches_single_fields():
    stacked = sample_lines(RADEMACHER, 32, 9, range(4, 8))
    for i, s in enumerate(range(4, 8)):
        assert np.array_equal(stacked[i], sample_field(RADEMACHER, LineSites(32), Seed(9, s)).values)


def test_space_time_layers_regenerate_independently():
    sites = SpaceTimeSites.uniform(6, 2, 3)
    field = sample_field(GAUSSIAN, sites, Seed(1))
    assert field.layer(4).shape == (7, 7)
    assert np.array_equal(field.layer(4), field.values[3])
    assert not np.array_equal(field.layer(4), field.layer(5))


def test_empty_site_set_rejected():
    with pytest.raises(DomainError):
        LineSites(0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0))
def test_eta_transform_pointwise(beta, h):
    field = sample_field(GAUSSIAN, LineSites(16), Seed(2))
    eta = eta_transform(field, beta, h)
    assert np.allclose(eta.values, np.expm1(beta * field.values + h))
    assert np.all(eta.values > -1.0)


def test_eta_overflow_names_the_site():
    field = sample_field(GAUSSIAN, LineSites(8), Seed(0))
    with pytest.raises(DomainError, match="site n="):
        eta_transform(field, 1.0, 800.0)


def test_centered_eta_moments():
    beta = 0.4
    mean, var = eta_moments(GAUSSIAN, beta, -log_mgf(GAUSSIAN, beta))
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert var == pytest.approx(math.expm1(beta * beta))
    assert replica_coupling(GAUSSIAN, beta) == pytest.approx(beta * beta)


def test_centered_eta_has_mean_zero_empirically():
    beta = 0.5
    h = -log_mgf(RADEMACHER, beta)
    eta = eta_transform(sample_field(RADEMACHER, LineSites(100_000), Seed(8)), beta, h).values
    _, var = eta_moments(RADEMACHER, beta, h)
    assert abs(eta.mean()) < 5 * math.sqrt(var / eta.size)
