import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disorder_lab.core.stats import (
    MomentAccumulator,
    ks_critical,
    ks_statistic,
    moment_summary,
    normal_cdf,
)
from disorder_lab.errors import DomainError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=40))
def test_merge_equals_pooled_accumulator(a, b):
    merged = MomentAccumulator.from_values(a).merge(MomentAccumulator.from_values(b))
    pooled = MomentAccumulator.from_values(a + b)
    assert merged.count == pooled.count
    assert merged.mean == pytest.approx(pooled.mean, rel=1e-9, abs=1e-9)
    scale = max(1.0, pooled.M2)
    assert merged.M2 == pytest.approx(pooled.M2, rel=1e-7, abs=1e-7 * scale)
    assert merged.M4 == pytest.approx(pooled.M4, rel=1e-6, abs=1e-6 * max(1.0, pooled.M4))


def test_merge_with_empty_is_identity():
    acc = MomentAccumulator.from_values([1.0, 2.0, 4.0])
    assert acc + MomentAccumulator() == acc
    assert MomentAccumulator() + acc == acc
    assert acc.add([]) == acc


def test_gaussian_summary():
    x = np.random.default_rng(1).standard_normal(200_000)
    s = moment_summary(MomentAccumulator.from_values(x))
    assert s.count == x.size
    assert s.mean == pytest.approx(0.0, abs=5 * s.mean_stderr)
    assert s.variance == pytest.approx(1.0, abs=0.01)
    assert s.skewness == pytest.approx(0.0, abs=0.03)
    assert s.kurtosis == pytest.approx(3.0, abs=0.05)
    assert s.mean_stderr == pytest.approx(math.sqrt(s.variance / x.size))


def test_constant_sample_has_undefined_kurtosis():
    s = moment_summary(MomentAccumulator.from_values(np.full(10, 2.5)))
    assert s.variance == 0.0
    assert s.kurtosis is None
    assert s.kurtosis_undefined


def test_summary_needs_four_values():
    with pytest.raises(DomainError):
        moment_summary(MomentAccumulator.from_values([1.0, 2.0, 3.0]))


def test_ks_one_sample_against_true_law():
    x = np.random.default_rng(2).standard_normal(5000)
    assert ks_statistic(x, normal_cdf(0.0, 1.0)) < ks_critical(5000)


def test_ks_detects_a_shift():
    x = np.random.default_rng(3).standard_normal(5000)
    assert ks_statistic(x, normal_cdf(0.5, 1.0)) > 0.15


def test_ks_two_sample_is_symmetric():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal(300), rng.standard_normal(500)
    assert ks_statistic(a, b) == ks_statistic(b, a)
    assert ks_statistic(a, a) == 0.0


def test_ks_needs_two_points():
    with pytest.raises(DomainError):
        ks_statistic([1.0], normal_cdf(0.0, 1.0))
    with pytest.raises(DomainError):
        ks_statistic([1.0, 2.0], [3.0])


def test_ks_critical_values():
    assert ks_critical(10_000) == pytest.approx(0.0163)
    assert ks_critical(100, 100) == pytest.approx(1.63 * math.sqrt(2 / 100))


def test_degenerate_normal_cdf_is_a_step():
    cdf = normal_cdf(1.0, 0.0)
    assert list(cdf(np.array([0.0, 1.0, 2.0]))) == [0.0, 1.0, 1.0]

