# tests/test_compress.py
# -*- coding: utf-8 -*-
# pytest -q tests/test_compress.py

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.services.compress import (
    CompressorSpec,
    apply_support,
    average_compress,
    averaged_omega,
    compress_rand_k,
    compress_rows,
    omega_of,
    sample_supports,
)
from app.utils.errors import ContractError


def test_omega_of_matches_rand_k_law():
    assert omega_of(CompressorSpec(300, 300)) == 0
    assert omega_of(CompressorSpec(300, 1)) == 299
    assert omega_of(CompressorSpec(10, 4)) == 1.5


@pytest.mark.parametrize("d,k", [(3, 0), (3, 4), (0, 1)])
def test_spec_rejects_bad_keep_count(d, k):
    with pytest.raises(ContractError):
        CompressorSpec(d, k)


def test_identity_passes_vector_through():
    spec = CompressorSpec.identity(3)
    x = np.array([1.0, 2.0, 3.0])
    for seed in range(5):
        assert_array_equal(compress_rand_k(spec, x, np.random.default_rng(seed)), x)


def test_single_outcome_is_scaled_by_d_over_k():
    spec = CompressorSpec.rand1(3)
    out = apply_support(spec, np.array([1.0, 2.0, 3.0]), [1])
    assert_array_equal(out, [0.0, 6.0, 0.0])


def test_rand1_variance_by_enumeration():
    spec = CompressorSpec.rand1(3)
    x = np.array([1.0, 2.0, 3.0])
    errs = [np.sum((apply_support(spec, x, [j]) - x) ** 2) for j in range(3)]
    assert np.mean(errs) == pytest.approx(28.0)


def test_average_of_two_rand1_by_enumeration():
    spec = CompressorSpec.rand1(3)
    x = np.array([1.0, 2.0, 3.0])
    errs = []
    for a, b in itertools.product(range(3), repeat=2):
        avg = 0.5 * apply_support(spec, x, [a]) + 0.5 * apply_support(spec, x, [b])
        errs.append(np.sum((avg - x) ** 2))
    assert np.mean(errs) == pytest.approx(14.0)


def test_weighted_average_variance_factor_by_enumeration():
    spec = CompressorSpec.rand1(2)
    x = np.array([1.0, 1.0])
    errs = []
    for a, b in itertools.product(range(2), repeat=2):
        avg = 0.25 * apply_support(spec, x, [a]) + 0.75 * apply_support(spec, x, [b])
        errs.append(np.sum((avg - x) ** 2))
    assert np.mean(errs) / np.dot(x, x) == pytest.approx(0.625)
    assert averaged_omega([spec, spec], [0.25, 0.75]) == pytest.approx(0.625)


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ContractError):
        compress_rand_k(CompressorSpec(3, 1), np.ones(4), np.random.default_rng(0))


def test_weights_must_sum_to_one():
    spec = CompressorSpec.rand1(2)
    with pytest.raises(ContractError):
        average_compress(np.ones(2), [spec, spec], [0.5, 0.6], np.random.default_rng(0))


@pytest.mark.parametrize("k", [1, 2, 5, 10])
def test_unbiased_with_rand_k_variance(k):
    d, N = 10, 100_000
    spec = CompressorSpec(d, k)
    x = np.linspace(-2.0, 3.0, d)
    draws = compress_rows(spec, np.tile(x, (N, 1)), np.random.default_rng(2024 + k))

    if k == d:
        assert np.all(draws == x)
        return
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(N)
    nonzero = x != 0
    assert np.all(np.abs(mean - x)[nonzero] <= 4 * se[nonzero])

    ratio = np.mean(np.sum((draws - x) ** 2, axis=1)) / np.dot(x, x)
    assert ratio == pytest.approx(d / k - 1, rel=0.03)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_supports_are_distinct_and_uniform(k):
    d, N = 10, 100_000
    sup = sample_supports(d, k, N, np.random.default_rng(7))
    assert sup.shape == (N, k)
    assert np.all(np.sort(sup, axis=1)[:, 1:] != np.sort(sup, axis=1)[:, :-1])
    freq = np.bincount(sup.ravel(), minlength=d) / N
    expected = k / d
    # chi-square style sanity on the marginal inclusion frequency
    assert np.all(np.abs(freq - expected) < 5 * np.sqrt(expected * (1 - expected) / N))


def test_output_is_zero_outside_support():
    spec = CompressorSpec(8, 3)
    x = np.arange(1.0, 9.0)
    out = compress_rand_k(spec, x, np.random.default_rng(3))
    assert np.count_nonzero(out) == 3
    kept = np.flatnonzero(out)
    assert_array_equal(out[kept], x[kept] * spec.scale)


def test_averaging_law_statistically():
    d, N = 6, 20_000
    rng = np.random.default_rng(11)
    x = rng.normal(size=d)
    specs = [CompressorSpec(d, 2), CompressorSpec(d, 3), CompressorSpec(d, 1)]
    for trial in range(3):
        w = rng.dirichlet(np.ones(3))
        draws = np.array([average_compress(x, specs, w, rng) for _ in range(N)])
        assert_allclose(draws.mean(axis=0), x, atol=0.1 * np.linalg.norm(x))
        factor = np.mean(np.sum((draws - x) ** 2, axis=1)) / np.dot(x, x)
        assert factor == pytest.approx(averaged_omega(specs, w), rel=0.06)


def test_single_spec_with_unit_weight_is_plain_rand_k():
    spec = CompressorSpec(12, 5)
    x = np.linspace(-2.0, 3.0, 12)
    for seed in range(10):
        a = average_compress(x, [spec], [1.0], np.random.default_rng(seed))
        b = compress_rand_k(spec, x, np.random.default_rng(seed))
        assert_array_equal(a, b)


def test_count_based_average_of_copies():
    d, N = 5, 100_000
    spec = CompressorSpec.rand1(d)
    x = np.ones(d)
    out = compress_rows(spec, np.tile(x, (N, 1)), np.random.default_rng(5), copies=4)
    factor = np.mean(np.sum((out - x) ** 2, axis=1)) / d
    assert factor == pytest.approx((d - 1) / 4, rel=0.03)


def test_same_seed_same_output():
    spec = CompressorSpec(20, 4)
    x = np.arange(20.0)
    a = compress_rand_k(spec, x, np.random.default_rng(99))
    b = compress_rand_k(spec, x, np.random.default_rng(99))
    assert_array_equal(a, b)
